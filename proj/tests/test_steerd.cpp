#include "rhythm/experiments.hpp"
#include "rhythm/steerd.hpp"

#include <catch_amalgamated.hpp>
#include <httplib.h>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <sstream>

using namespace rhythm;
using namespace rhythm::steerd;
using Catch::Approx;
namespace fs = std::filesystem;
using learner::PhaseMode;

namespace {

struct Trained {
    experiments::TrainResult result;
    fs::path dir;
};

// One trained twin shared by every case in this binary.
const Trained& trained() {
    static const Trained t = [] {
        auto cfg = experiments::load_experiment(std::string(RHYTHM_SOURCE_DIR) + "/configs/twin_thomas.json");
        Trained out{experiments::train_twin(cfg), fs::temp_directory_path() / ("rhythm_steerd_" + std::to_string(::getpid()))};
        fs::remove_all(out.dir);
        io::save_bundle(out.dir, out.result.bundle);
        return out;
    }();
    return t;
}

const io::ModelBundle& bundle() { return trained().result.bundle; }

SessionConfig unthrottled(std::uint64_t seed = 1) {
    SessionConfig c;
    c.seed = seed;
    c.fps = 0.0;
    c.estimate_window = 0;
    return c;
}

SteerCommand set_mode(PhaseMode m) {
    SteerCommand c;
    c.kind = SteerCommand::Kind::SetMode;
    c.mode = m;
    return c;
}

SteerCommand set_omega(double v) {
    SteerCommand c;
    c.kind = SteerCommand::Kind::SetOmega;
    c.value = v;
    return c;
}

SteerCommand freeze() { return SteerCommand{}; }

SteerCommand switch_input(std::optional<double> lambda) {
    SteerCommand c;
    c.kind = SteerCommand::Kind::SwitchInput;
    c.lambda = lambda;
    return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Io;
}

double mean(const std::vector<double>& xs, std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < xs.size(); ++i) s += xs[i];
    return s / static_cast<double>(xs.size() - from);
}

}  // namespace

TEST_CASE("wire format round trips", "[steerd]") {
    FramePacket p;
    p.t = 42;
    p.R = 0.75;
    p.mean_phase = -1.5;
    p.output = Vec::LinSpaced(3, -1, 1);
    p.mode = PhaseMode::Forced;
    p.lambda_estimate = 0.2;
    const auto j = to_json(p);
    CHECK(j.at("mode") == "Forced");
    for (const char* key : {"t", "R", "mean_phase", "output", "mode", "lambda_estimate"}) CHECK(j.contains(key));
    const auto back = packet_from_json(j);
    CHECK(back.t == 42);
    CHECK(back.output == p.output);
    CHECK(back.mode == PhaseMode::Forced);
    CHECK(*back.lambda_estimate == 0.2);
    p.lambda_estimate.reset();
    CHECK(to_json(p).at("lambda_estimate").is_null());

    for (const auto& c : {set_mode(PhaseMode::Coupled), set_omega(0.125), freeze(), switch_input(0.21), switch_input({})}) {
        const auto again = command_from_json(to_json(c));
        CHECK(again.kind == c.kind);
        CHECK(again.mode == c.mode);
        CHECK(again.value == c.value);
        CHECK(again.lambda == c.lambda);
    }
    const auto ack = to_json(Ack{7, set_omega(1.0)});
    CHECK(ack.at("frame") == 7);
    CHECK(ack.at("command").at("kind") == "SetOmega");
}

TEST_CASE("malformed and out-of-range commands are invalid", "[steerd]") {
    using nlohmann::json;
    for (const char* text : {R"({"kind":"Teleport"})", R"({"kind":"SetOmega"})", R"({"kind":"SetOmega","value":"x"})",
                             R"({"kind":"SetMode","mode":"Sideways"})", R"([1,2])", R"({"mode":"Forced"})"}) {
        INFO(text);
        CHECK(kind_of([&] { command_from_json(json::parse(text)); }) == ErrorKind::InvalidCommand);
    }
    CHECK(kind_of([] { validate_command(set_omega(std::nan("")), dynsys::SystemKind::Thomas); }) ==
          ErrorKind::InvalidCommand);
    CHECK(kind_of([] { validate_command(switch_input(1.5), dynsys::SystemKind::Thomas); }) ==
          ErrorKind::InvalidCommand);
    CHECK_NOTHROW(validate_command(switch_input(0.25), dynsys::SystemKind::Thomas));
    CHECK_NOTHROW(validate_command(switch_input({}), dynsys::SystemKind::Thomas));
}

TEST_CASE("session frames are ordered and commands apply at the next boundary", "[steerd]") {
    Session s(bundle(), unthrottled());
    std::vector<FramePacket> ps;
    for (int i = 0; i < 10; ++i) ps.push_back(s.step());
    s.submit(freeze());
    CHECK(s.mode() == PhaseMode::Coupled);  // queued only
    ps.push_back(s.step());
    for (int i = 0; i < 89; ++i) ps.push_back(s.step());
    for (long i = 0; i < 100; ++i) CHECK(ps[static_cast<std::size_t>(i)].t == i);
    CHECK(ps[9].mode == PhaseMode::Coupled);
    CHECK(ps[10].mode == PhaseMode::Frozen);
    REQUIRE(s.applied().size() == 1);
    CHECK(s.applied()[0].frame == 10);
}

TEST_CASE("packets carry the exact order parameter of the phase state", "[steerd]") {
    Session s(bundle(), unthrottled());
    for (int i = 0; i < 50; ++i) {
        const auto o = phasenet::global_order(s.twin().phases());
        const auto p = s.step();
        CHECK(p.R == o.R);
        CHECK(p.mean_phase == o.mean_phase);
        CHECK(p.R >= 0.0);
        CHECK(p.R <= 1.0);
        CHECK(p.mean_phase >= -kPi);
        CHECK(p.mean_phase < kPi);
    }
}

TEST_CASE("forcing keeps R fixed and advances the mean phase", "[steerd]") {
    Session s(bundle(), unthrottled());
    for (int i = 0; i < 20; ++i) s.step();
    s.submit(set_mode(PhaseMode::Forced));
    s.submit(set_omega(0.05));
    std::vector<FramePacket> ps;
    for (int i = 0; i < 300; ++i) ps.push_back(s.step());
    double drift = 0.0, advance_err = 0.0;
    for (std::size_t i = 1; i < ps.size(); ++i) {
        drift = std::max(drift, std::abs(ps[i].R - ps[0].R));
        advance_err = std::max(advance_err, std::abs(wrap_phase(ps[i].mean_phase - ps[i - 1].mean_phase) - 0.05));
    }
    CHECK(drift <= 1e-9);
    CHECK(advance_err <= 1e-9);

    s.submit(set_omega(0.0));
    const auto first = s.step();
    for (int i = 0; i < 200; ++i) {
        const auto p = s.step();
        CHECK(p.mean_phase == Approx(first.mean_phase).margin(1e-12));
        CHECK(p.R == Approx(first.R).margin(1e-12));
    }
}

TEST_CASE("a frozen periodic twin re-converges to its plateau when coupling resumes", "[steerd]") {
    // plateau of the periodic training state from the training order log
    const auto& tr = trained().result;
    double plateau = 0.0, spread = 0.0;
    long n = 0;
    for (std::size_t k = 0; k < tr.plateaus.size(); ++k)
        if (tr.plateau_lambdas[k] == 0.29) {
            plateau += tr.plateaus[k].mean * static_cast<double>(tr.plateaus[k].count);
            spread = std::max(spread, tr.plateaus[k].stddev);
            n += tr.plateaus[k].count;
        }
    REQUIRE(n > 0);
    plateau /= static_cast<double>(n);

    auto cfg = unthrottled();
    cfg.initial_state = 1;
    Session s(bundle(), cfg);
    s.submit(switch_input(0.29));
    for (int i = 0; i < 2000; ++i) s.step();
    s.submit(switch_input({}));
    s.submit(set_mode(PhaseMode::Forced));
    s.submit(set_omega(0.3));
    for (int i = 0; i < 20; ++i) s.step();  // push the mean phase away
    s.submit(freeze());
    for (int i = 0; i < 200; ++i) s.step();
    s.submit(set_mode(PhaseMode::Coupled));
    std::vector<double> rs;
    for (int i = 0; i < 4000; ++i) rs.push_back(s.step().R);
    const double settled = mean(rs, 3000);
    INFO("plateau " << plateau << " spread " << spread << " settled " << settled);
    CHECK(std::abs(settled - plateau) <= std::max(10.0 * spread, 2e-3));
}

TEST_CASE("replay reproduces a session stream exactly", "[steerd]") {
    const auto log = fs::temp_directory_path() / ("rhythm_replay_" + std::to_string(::getpid()) + ".jsonl");
    auto cfg = unthrottled(5);
    cfg.estimate_window = 300;
    cfg.replay_path = log.string();
    std::vector<FramePacket> live;
    {
        Session s(bundle(), cfg);
        for (int f = 0; f < 600; ++f) {
            if (f == 50) s.submit(set_mode(PhaseMode::Forced));
            if (f == 50) s.submit(set_omega(0.02));
            if (f == 180) s.submit(freeze());
            if (f == 260) s.submit(switch_input(0.22));
            if (f == 400) s.submit(set_mode(PhaseMode::Coupled));
            if (f == 450) s.submit(switch_input({}));
            live.push_back(s.step());
        }
    }
    const auto script = read_replay(log.string());
    REQUIRE(script.size() == 6);
    CHECK(script[1].frame == 50);
    CHECK(script[5].frame == 450);
    const auto again = replay(bundle(), cfg, script, 600);
    REQUIRE(again.size() == live.size());
    bool identical = true;
    for (std::size_t i = 0; i < live.size(); ++i) identical &= to_json(live[i]).dump() == to_json(again[i]).dump();
    CHECK(identical);
    CHECK(live.back().lambda_estimate.has_value());
    fs::remove(log);
}

TEST_CASE("different seeds give different streams", "[steerd]") {
    Session a(bundle(), unthrottled(1)), b(bundle(), unthrottled(2)), c(bundle(), unthrottled(1));
    bool differ = false, same = true;
    for (int i = 0; i < 100; ++i) {
        const auto pa = a.step(), pb = b.step(), pc = c.step();
        differ |= pa.output != pb.output;
        same &= pa.output == pc.output && pa.R == pc.R;
    }
    CHECK(differ);
    CHECK(same);
}

TEST_CASE("bounded subscription drops the oldest packets", "[steerd]") {
    Subscription sub(3);
    for (long t = 0; t < 5; ++t) {
        FramePacket p;
        p.t = t;
        sub.push(p);
    }
    CHECK(sub.dropped() == 2);
    for (long t = 2; t < 5; ++t) CHECK(sub.pop(std::chrono::milliseconds(10))->t == t);
    CHECK_FALSE(sub.pop(std::chrono::milliseconds(10)).has_value());
    sub.close();
    CHECK(sub.closed());
}

TEST_CASE("runner streams, acknowledges and fans out", "[steerd]") {
    auto cfg = unthrottled();
    cfg.fps = 200.0;
    cfg.queue_capacity = 100000;
    const auto t0 = std::chrono::steady_clock::now();
    SessionRunner runner(bundle(), cfg);
    auto a = runner.subscribe();
    auto b = runner.subscribe();
    const auto first = a->pop(std::chrono::seconds(2));
    REQUIRE(first.has_value());
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(2));

    auto ack = runner.command(set_mode(PhaseMode::Forced)).get();
    std::vector<FramePacket> pa{*first}, pb;
    while (pa.back().t < ack.frame + 20) pa.push_back(*a->pop(std::chrono::seconds(2)));
    while (pb.empty() || pb.back().t < pa.back().t) pb.push_back(*b->pop(std::chrono::seconds(2)));

    for (std::size_t i = 1; i < pa.size(); ++i) CHECK(pa[i].t == pa[i - 1].t + 1);
    for (const auto& p : pa) {
        if (p.t < ack.frame) CHECK(p.mode == PhaseMode::Coupled);
        else CHECK(p.mode == PhaseMode::Forced);
    }
    for (const auto& q : pb)
        for (const auto& p : pa)
            if (p.t == q.t) CHECK(p.R == q.R);

    auto late = runner.subscribe();
    const auto lp = late->pop(std::chrono::seconds(2));
    REQUIRE(lp.has_value());
    CHECK(lp->t > 0);
    CHECK(lp->t >= pa.back().t);

    CHECK(kind_of([&] { runner.command(set_omega(std::nan(""))); }) == ErrorKind::InvalidCommand);
    runner.stop();
    CHECK_FALSE(runner.running());
    CHECK(kind_of([&] { runner.command(freeze()); }) == ErrorKind::UnknownSession);
}

TEST_CASE("session manager", "[steerd]") {
    SessionManager m;
    m.set_replay_dir("");
    CHECK(kind_of([&] { m.get("nope"); }) == ErrorKind::UnknownSession);
    CHECK(kind_of([&] { m.start("/nonexistent/bundle", unthrottled()); }) == ErrorKind::BundleIncompatible);
    const auto id = m.start(trained().dir.string(), unthrottled());
    CHECK(m.ids() == std::vector<std::string>{id});
    CHECK(m.get(id)->running());
    m.stop(id);
    CHECK(m.ids().empty());
    CHECK(kind_of([&] { m.stop(id); }) == ErrorKind::UnknownSession);
}

TEST_CASE("http api", "[steerd][http]") {
    const auto replays = fs::temp_directory_path() / ("rhythm_replays_" + std::to_string(::getpid()));
    ServerOptions opts;
    opts.port = 0;
    opts.replay_dir = replays.string();
    opts.session = unthrottled();
    opts.session.fps = 100.0;
    Server server(opts);
    server.start();
    httplib::Client cli("127.0.0.1", server.port());
    cli.set_read_timeout(10, 0);

    auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(nlohmann::json::parse(health->body).at("sessions").empty());

    auto bad_bundle = cli.Post("/sessions", R"({"bundle":"/nonexistent"})", "application/json");
    REQUIRE(bad_bundle);
    CHECK(bad_bundle->status == 422);

    auto started = cli.Post("/sessions", nlohmann::json{{"bundle", trained().dir.string()}}.dump(), "application/json");
    REQUIRE(started);
    REQUIRE(started->status == 201);
    const std::string id = nlohmann::json::parse(started->body).at("session");
    CHECK(nlohmann::json::parse(cli.Get("/health")->body).at("sessions").size() == 1);

    auto ack = cli.Post("/sessions/" + id + "/commands", R"({"kind":"SetOmega","value":0.01,"issued_at":1.5})",
                        "application/json");
    REQUIRE(ack);
    CHECK(ack->status == 200);
    const auto aj = nlohmann::json::parse(ack->body);
    CHECK(aj.at("frame").get<long>() >= 0);
    CHECK(aj.at("command").at("value") == 0.01);

    auto invalid = cli.Post("/sessions/" + id + "/commands", R"({"kind":"SwitchInput","lambda":7})", "application/json");
    REQUIRE(invalid);
    CHECK(invalid->status == 400);
    auto garbage = cli.Post("/sessions/" + id + "/commands", "not json", "application/json");
    REQUIRE(garbage);
    CHECK(garbage->status == 400);
    auto unknown = cli.Post("/sessions/zzz/commands", R"({"kind":"Freeze"})", "application/json");
    REQUIRE(unknown);
    CHECK(unknown->status == 404);

    auto stream = cli.Get("/sessions/" + id + "/stream?frames=20");
    REQUIRE(stream);
    CHECK(stream->status == 200);
    std::istringstream lines(stream->body);
    std::string line;
    std::vector<long> ts;
    while (std::getline(lines, line)) ts.push_back(packet_from_json(nlohmann::json::parse(line)).t);
    REQUIRE(ts.size() == 20);
    for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] == ts[i - 1] + 1);

    auto del = cli.Delete("/sessions/" + id);
    REQUIRE(del);
    CHECK(del->status == 200);
    CHECK(cli.Get("/sessions/" + id + "/stream")->status == 404);
    CHECK(fs::exists(replays / (id + ".jsonl")));
    CHECK(read_replay((replays / (id + ".jsonl")).string()).size() == 1);

    ServerOptions clash = opts;
    clash.port = server.port();
    Server second(clash);
    CHECK(kind_of([&] { second.start(); }) == ErrorKind::PortInUse);

    server.stop();
    fs::remove_all(replays);
}
