#include "rhythm/steerd.hpp"

#include "rhythm/config.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace rhythm::steerd {

namespace {

std::string mode_wire(learner::PhaseMode m) {
    switch (m) {
        case learner::PhaseMode::Coupled: return "Coupled";
        case learner::PhaseMode::Forced: return "Forced";
        case learner::PhaseMode::Frozen: return "Frozen";
    }
    return "Coupled";
}

learner::PhaseMode mode_from_wire(const std::string& s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return learner::phase_mode_from_string(lower);
}

const char* kind_wire(SteerCommand::Kind k) {
    switch (k) {
        case SteerCommand::Kind::SetMode: return "SetMode";
        case SteerCommand::Kind::SetOmega: return "SetOmega";
        case SteerCommand::Kind::Freeze: return "Freeze";
        case SteerCommand::Kind::SwitchInput: return "SwitchInput";
    }
    return "Freeze";
}

Error invalid(const std::string& why) { return Error(ErrorKind::InvalidCommand, why); }

}  // namespace

// Wire format ------------------------------------------------------------------

json to_json(const FramePacket& p) {
    return {{"t", p.t},
            {"R", p.R},
            {"mean_phase", p.mean_phase},
            {"output", std::vector<double>(p.output.data(), p.output.data() + p.output.size())},
            {"mode", mode_wire(p.mode)},
            {"lambda_estimate", p.lambda_estimate ? json(*p.lambda_estimate) : json(nullptr)}};
}

FramePacket packet_from_json(const json& j) {
    FramePacket p;
    p.t = j.at("t").get<long>();
    p.R = j.at("R").get<double>();
    p.mean_phase = j.at("mean_phase").get<double>();
    const auto out = j.at("output").get<std::vector<double>>();
    p.output = Eigen::Map<const Vec>(out.data(), static_cast<Eigen::Index>(out.size()));
    p.mode = mode_from_wire(j.at("mode").get<std::string>());
    if (!j.at("lambda_estimate").is_null()) p.lambda_estimate = j.at("lambda_estimate").get<double>();
    return p;
}

json to_json(const SteerCommand& c) {
    json j = {{"kind", kind_wire(c.kind)}, {"issued_at", c.issued_at}};
    switch (c.kind) {
        case SteerCommand::Kind::SetMode: j["mode"] = mode_wire(c.mode); break;
        case SteerCommand::Kind::SetOmega: j["value"] = c.value; break;
        case SteerCommand::Kind::Freeze: break;
        case SteerCommand::Kind::SwitchInput: j["lambda"] = c.lambda ? json(*c.lambda) : json(nullptr); break;
    }
    return j;
}

SteerCommand command_from_json(const json& j) {
    if (!j.is_object()) throw invalid("command must be a JSON object");
    SteerCommand c;
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (j.contains("issued_at")) c.issued_at = j.at("issued_at").get<double>();
        if (kind == "SetMode") {
            c.kind = SteerCommand::Kind::SetMode;
            c.mode = mode_from_wire(j.at("mode").get<std::string>());
        } else if (kind == "SetOmega") {
            c.kind = SteerCommand::Kind::SetOmega;
            c.value = j.at("value").get<double>();
        } else if (kind == "Freeze") {
            c.kind = SteerCommand::Kind::Freeze;
        } else if (kind == "SwitchInput") {
            c.kind = SteerCommand::Kind::SwitchInput;
            if (j.contains("lambda") && !j.at("lambda").is_null()) c.lambda = j.at("lambda").get<double>();
        } else {
            throw invalid("unknown command kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw invalid(std::string("malformed command: ") + e.what());
    }
    return c;
}

json to_json(const Ack& a) { return {{"frame", a.frame}, {"command", to_json(a.command)}}; }

std::pair<double, double> input_range(dynsys::SystemKind kind) {
    switch (kind) {
        case dynsys::SystemKind::Thomas: return {0.0, 1.0};
        case dynsys::SystemKind::Lorenz: return {0.0, 100.0};
        case dynsys::SystemKind::MackeyGlass: return {1.0, 50.0};
    }
    return {0.0, 0.0};
}

void validate_command(const SteerCommand& cmd, dynsys::SystemKind kind) {
    if (cmd.kind == SteerCommand::Kind::SetOmega && !std::isfinite(cmd.value))
        throw invalid("SetOmega value must be finite");
    if (cmd.kind == SteerCommand::Kind::SwitchInput && cmd.lambda) {
        const auto [lo, hi] = input_range(kind);
        if (!std::isfinite(*cmd.lambda) || *cmd.lambda <= lo || *cmd.lambda > hi) {
            std::ostringstream ss;
            ss << "SwitchInput lambda must lie in (" << lo << ", " << hi << "] for " << dynsys::to_string(kind);
            throw invalid(ss.str());
        }
    }
}

// Session --------------------------------------------------------------------------

Session::Session(io::ModelBundle bundle, SessionConfig cfg)
    : bundle_(std::move(bundle)),
      cfg_(std::move(cfg)),
      twin_(bundle_.model, bundle_.phases),
      sim_(bundle_.info.system,
           dynsys::ParamSchedule::constant(bundle_.info.state_lambdas.at(
               std::min(cfg_.initial_state, bundle_.info.state_lambdas.size() - 1))),
           bundle_.info.simulation, derive_seed(cfg_.seed, 1), input_range(bundle_.info.system.kind).second),
      mode_(cfg_.initial_mode),
      omega_(cfg_.initial_omega) {
    if (cfg_.initial_state >= bundle_.info.state_lambdas.size())
        throw Error(ErrorKind::ConfigValidation, "initial_state is out of range for this bundle");
    if (!std::isfinite(omega_)) throw Error(ErrorKind::ConfigValidation, "initial omega must be finite");
    for (int t = 0; t < bundle_.info.train.predict_warmup_steps; ++t) {
        twin_.step(sim_.state(), learner::PhaseMode::Coupled);
        sim_.advance();
    }
    if (!cfg_.replay_path.empty()) {
        replay_.open(cfg_.replay_path, std::ios::out | std::ios::trunc);
        if (!replay_) throw Error(ErrorKind::Io, "cannot open replay log '" + cfg_.replay_path + "'");
    }
}

void Session::submit(const SteerCommand& cmd) {
    validate_command(cmd, bundle_.info.system.kind);
    pending_.push_back(cmd);
}

void Session::apply(const SteerCommand& cmd) {
    switch (cmd.kind) {
        case SteerCommand::Kind::SetMode: mode_ = cmd.mode; break;
        case SteerCommand::Kind::SetOmega: omega_ = cmd.value; break;
        case SteerCommand::Kind::Freeze: mode_ = learner::PhaseMode::Frozen; break;
        case SteerCommand::Kind::SwitchInput:
            if (cmd.lambda) {
                sim_.set_schedule(dynsys::ParamSchedule::constant(*cmd.lambda));
                open_loop_ = true;
            } else {
                open_loop_ = false;
            }
            break;
    }
    applied_.push_back({frame_, cmd});
    if (replay_.is_open()) {
        replay_ << json{{"frame", frame_}, {"command", to_json(cmd)}}.dump() << '\n';
        replay_.flush();
    }
}

FramePacket Session::make_packet() {
    FramePacket p;
    p.t = frame_;
    const auto o = twin_.order();
    p.R = o.R;
    p.mean_phase = o.mean_phase;
    p.output = reservoir::readout(bundle_.readout, twin_.nodes());
    p.mode = mode_;
    if (bundle_.info.system.kind == dynsys::SystemKind::Thomas && cfg_.estimate_window >= 3) {
        recent_outputs_.push_back(p.output);
        while (static_cast<long>(recent_outputs_.size()) > cfg_.estimate_window) recent_outputs_.pop_front();
        if (static_cast<long>(recent_outputs_.size()) == cfg_.estimate_window) {
            Mat window(cfg_.estimate_window, p.output.size());
            for (long i = 0; i < cfg_.estimate_window; ++i)
                window.row(i) = recent_outputs_[static_cast<std::size_t>(i)].transpose();
            try {
                p.lambda_estimate = dynsys::estimate_thomas_b(window, bundle_.info.frame_dt);
            } catch (const Error&) {
                p.lambda_estimate.reset();
            }
        }
    }
    return p;
}

FramePacket Session::step() {
    applied_last_ = 0;
    while (!pending_.empty()) {
        apply(pending_.front());
        pending_.pop_front();
        ++applied_last_;
    }
    FramePacket p = make_packet();
    if (!p.output.allFinite() || p.output.cwiseAbs().maxCoeff() > 1e6)
        throw Error(ErrorKind::Divergence, "session output blew up at frame " + std::to_string(frame_));
    Vec u = p.output;
    if (open_loop_) {
        u = sim_.state();
        sim_.advance();
    }
    twin_.step(u, mode_, omega_);
    ++frame_;
    return p;
}

std::vector<Ack> read_replay(const std::string& path) {
    std::vector<Ack> out;
    std::istringstream lines(io::read_text(path));
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            out.push_back({j.at("frame").get<long>(), command_from_json(j.at("command"))});
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Io, "bad replay line: " + std::string(e.what()));
        }
    }
    return out;
}

std::vector<FramePacket> replay(const io::ModelBundle& bundle, SessionConfig cfg, const std::vector<Ack>& script,
                                long n_frames) {
    cfg.replay_path.clear();
    Session session(bundle, cfg);
    std::vector<FramePacket> out;
    out.reserve(static_cast<std::size_t>(std::max(0L, n_frames)));
    std::size_t next = 0;
    for (long f = 0; f < n_frames; ++f) {
        while (next < script.size() && script[next].frame <= f) session.submit(script[next++].command);
        out.push_back(session.step());
    }
    return out;
}

// Subscription -------------------------------------------------------------------------

void Subscription::push(const FramePacket& p) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return;
        if (queue_.size() >= capacity_) {
            queue_.pop_front();
            ++dropped_;
        }
        queue_.push_back(p);
    }
    cv_.notify_one();
}

std::optional<FramePacket> Subscription::pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    FramePacket p = std::move(queue_.front());
    queue_.pop_front();
    return p;
}

void Subscription::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Subscription::closed() const {
    std::lock_guard lock(mu_);
    return closed_ && queue_.empty();
}

std::size_t Subscription::dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
}

// Runner --------------------------------------------------------------------------------

SessionRunner::SessionRunner(io::ModelBundle bundle, SessionConfig cfg)
    : session_(std::move(bundle), cfg), cfg_(std::move(cfg)), mode_(static_cast<int>(session_.mode())) {
    thread_ = std::thread([this] { run(); });
}

SessionRunner::~SessionRunner() { stop(); }

learner::PhaseMode SessionRunner::mode() const { return static_cast<learner::PhaseMode>(mode_.load()); }

std::future<Ack> SessionRunner::command(const SteerCommand& cmd) {
    validate_command(cmd, session_.system_kind());
    std::lock_guard lock(mu_);
    if (!running_) throw Error(ErrorKind::UnknownSession, "session has ended" + (failure_.empty() ? "" : ": " + failure_));
    commands_.push_back({cmd, {}});
    return commands_.back().promise.get_future();
}

std::shared_ptr<Subscription> SessionRunner::subscribe() {
    auto sub = std::make_shared<Subscription>(cfg_.queue_capacity);
    std::lock_guard lock(mu_);
    if (!running_) sub->close();
    subs_.push_back(sub);
    return sub;
}

void SessionRunner::unsubscribe(const std::shared_ptr<Subscription>& sub) {
    std::lock_guard lock(mu_);
    subs_.erase(std::remove(subs_.begin(), subs_.end(), sub), subs_.end());
    sub->close();
}

void SessionRunner::stop() {
    running_ = false;
    if (thread_.joinable() && std::this_thread::get_id() != thread_.get_id()) thread_.join();
}

void SessionRunner::run() {
    using clock = std::chrono::steady_clock;
    const auto period = cfg_.fps > 0.0 ? std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / cfg_.fps))
                                       : clock::duration::zero();
    auto next_tick = clock::now();
    std::vector<Pending> batch;
    while (running_) {
        {
            std::lock_guard lock(mu_);
            while (!commands_.empty()) {
                batch.push_back(std::move(commands_.front()));
                commands_.pop_front();
            }
        }
        std::vector<std::shared_ptr<Subscription>> subs;
        try {
            for (auto& p : batch) session_.submit(p.cmd);
            const FramePacket packet = session_.step();
            for (auto& p : batch) p.promise.set_value({packet.t, p.cmd});
            batch.clear();
            frame_ = session_.frame();
            mode_ = static_cast<int>(session_.mode());
            std::lock_guard lock(mu_);
            subs = subs_;
            for (auto& s : subs) s->push(packet);
        } catch (const std::exception& e) {
            std::lock_guard lock(mu_);
            failure_ = e.what();
            running_ = false;
            for (auto& p : batch) p.promise.set_exception(std::current_exception());
            batch.clear();
            break;
        }
        if (period > clock::duration::zero()) {
            next_tick += period;
            std::this_thread::sleep_until(next_tick);
        }
    }
    std::lock_guard lock(mu_);
    running_ = false;
    for (auto& p : commands_)
        p.promise.set_exception(std::make_exception_ptr(Error(ErrorKind::UnknownSession, "session ended")));
    commands_.clear();
    for (auto& s : subs_) s->close();
}

// Manager --------------------------------------------------------------------------------

std::string SessionManager::start(const std::string& bundle_dir, const SessionConfig& cfg) {
    return start(io::load_bundle(bundle_dir), cfg);
}

std::string SessionManager::start(io::ModelBundle bundle, const SessionConfig& cfg) {
    std::string id;
    std::string dir;
    {
        std::lock_guard lock(mu_);
        id = "s" + std::to_string(next_id_++);
        dir = replay_dir_;
    }
    SessionConfig session_cfg = cfg;
    if (session_cfg.replay_path.empty() && !dir.empty()) {
        std::filesystem::create_directories(dir);
        session_cfg.replay_path = (std::filesystem::path(dir) / (id + ".jsonl")).string();
    }
    auto runner = std::make_shared<SessionRunner>(std::move(bundle), session_cfg);
    std::lock_guard lock(mu_);
    sessions_.emplace(id, std::move(runner));
    return id;
}

void SessionManager::set_replay_dir(std::string dir) {
    std::lock_guard lock(mu_);
    replay_dir_ = std::move(dir);
}

std::shared_ptr<SessionRunner> SessionManager::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorKind::UnknownSession, "no session '" + id + "'");
    return it->second;
}

void SessionManager::stop(const std::string& id) {
    std::shared_ptr<SessionRunner> runner;
    {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(ErrorKind::UnknownSession, "no session '" + id + "'");
        runner = it->second;
        sessions_.erase(it);
    }
    runner->stop();
}

std::vector<std::string> SessionManager::ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
}

void SessionManager::stop_all() {
    for (const auto& id : ids()) stop(id);
}

}  // namespace rhythm::steerd
