#include "rhythm/dynsys.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace rhythm::dynsys {

std::string_view to_string(SystemKind kind) {
    switch (kind) {
        case SystemKind::Thomas: return "thomas";
        case SystemKind::Lorenz: return "lorenz";
        case SystemKind::MackeyGlass: return "mackey_glass";
    }
    return "unknown";
}

SystemKind system_kind_from_string(std::string_view name) {
    if (name == "thomas") return SystemKind::Thomas;
    if (name == "lorenz") return SystemKind::Lorenz;
    if (name == "mackey_glass") return SystemKind::MackeyGlass;
    throw Error(ErrorKind::ConfigValidation, "unknown system '" + std::string(name) + "'");
}

void SystemSpec::validate() const {
    for (double v : {sigma, beta_lorenz, beta_mg, gamma_mg, n_exp}) {
        if (!std::isfinite(v)) throw Error(ErrorKind::ConfigValidation, "system parameters must be finite");
    }
}

ParamSchedule ParamSchedule::constant(double value) {
    ParamSchedule s;
    s.kind = Kind::Constant;
    s.base_value = value;
    return s;
}

ParamSchedule ParamSchedule::step_switch(double base, std::vector<std::pair<double, double>> switches) {
    ParamSchedule s;
    s.kind = Kind::StepSwitch;
    s.base_value = base;
    s.switches = std::move(switches);
    s.validate();
    return s;
}

ParamSchedule ParamSchedule::sinusoid(double center, double amplitude, double angular_frequency) {
    ParamSchedule s;
    s.kind = Kind::Sinusoid;
    s.base_value = center;
    s.center = center;
    s.amplitude = amplitude;
    s.angular_frequency = angular_frequency;
    s.validate();
    return s;
}

double ParamSchedule::at(double t) const {
    switch (kind) {
        case Kind::Constant: return base_value;
        case Kind::StepSwitch: {
            double v = base_value;
            for (const auto& [ts, value] : switches) {
                if (t >= ts) v = value;
                else break;
            }
            return v;
        }
        case Kind::Sinusoid:
            return center + amplitude * std::sin(angular_frequency * std::max(t, 0.0));
    }
    return base_value;
}

double ParamSchedule::max_value() const {
    switch (kind) {
        case Kind::Constant: return base_value;
        case Kind::StepSwitch: {
            double v = base_value;
            for (const auto& s : switches) v = std::max(v, s.second);
            return v;
        }
        case Kind::Sinusoid: return center + amplitude;
    }
    return base_value;
}

double ParamSchedule::min_value() const {
    switch (kind) {
        case Kind::Constant: return base_value;
        case Kind::StepSwitch: {
            double v = base_value;
            for (const auto& s : switches) v = std::min(v, s.second);
            return v;
        }
        case Kind::Sinusoid: return center - amplitude;
    }
    return base_value;
}

void ParamSchedule::validate() const {
    for (std::size_t i = 1; i < switches.size(); ++i) {
        if (!(switches[i].first > switches[i - 1].first))
            throw Error(ErrorKind::ConfigValidation, "step-switch times must be strictly increasing");
    }
    if (kind == Kind::Sinusoid && !(amplitude >= 0.0))
        throw Error(ErrorKind::ConfigValidation, "sinusoid amplitude must be non-negative");
}

Vec3 thomas_deriv(const Vec3& s, double b) {
    return {std::sin(s[1]) - b * s[0], std::sin(s[2]) - b * s[1], std::sin(s[0]) - b * s[2]};
}

Vec3 lorenz_deriv(const Vec3& s, double sigma, double rho, double beta) {
    return {sigma * (s[1] - s[0]), s[0] * (rho - s[2]) - s[1], s[0] * s[1] - beta * s[2]};
}

Vec rk4_step(const VectorField& f, const Vec& state, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorKind::Domain, "rk4 step requires dt > 0");
    const Vec k1 = f(state);
    const Vec k2 = f(state + 0.5 * dt * k1);
    const Vec k3 = f(state + 0.5 * dt * k2);
    const Vec k4 = f(state + dt * k3);
    Vec next = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) throw Error(ErrorKind::IntegrationFailure, "non-finite state after rk4 step");
    return next;
}

// DelayHistory ---------------------------------------------------------------

DelayHistory::DelayHistory(double t0, double dt, double span)
    : t_front_(t0), dt_(dt), capacity_(static_cast<std::size_t>(std::ceil(span / dt)) + 2) {
    if (!(dt > 0.0) || !(span > 0.0)) throw Error(ErrorKind::Domain, "delay history needs dt > 0 and span > 0");
}

void DelayHistory::fill(const std::function<double(double)>& init) {
    const double t0 = t_front_;
    values_.clear();
    const std::size_t n = capacity_;
    t_front_ = t0 - static_cast<double>(n - 1) * dt_;
    for (std::size_t i = 0; i < n; ++i) values_.push_back(init(t_front_ + static_cast<double>(i) * dt_));
}

void DelayHistory::push(double x) {
    values_.push_back(x);
    if (values_.size() > capacity_) {
        values_.pop_front();
        t_front_ += dt_;
    }
}

double DelayHistory::t_back() const { return t_front_; }

double DelayHistory::t_now() const { return t_front_ + static_cast<double>(values_.size() - 1) * dt_; }

double DelayHistory::at(double t) const {
    if (values_.empty()) throw Error(ErrorKind::HistoryUnderflow, "empty delay history");
    const double pos = (t - t_front_) / dt_;
    const double last = static_cast<double>(values_.size() - 1);
    constexpr double slack = 1e-9;
    if (pos < -slack) throw Error(ErrorKind::HistoryUnderflow, "delayed time precedes stored history");
    if (pos > last + slack) throw Error(ErrorKind::HistoryUnderflow, "requested time is ahead of the history");
    const double p = std::clamp(pos, 0.0, last);
    const auto i = static_cast<std::size_t>(std::floor(p));
    if (i + 1 >= values_.size()) return values_.back();
    const double w = p - static_cast<double>(i);
    return (1.0 - w) * values_[i] + w * values_[i + 1];
}

double mackey_glass_step(DelayHistory& history, const SystemSpec& spec, double tau, double t, double dt) {
    if (!(tau > 0.0)) throw Error(ErrorKind::Domain, "delay must be positive");
    const double x = history.at(t);
    const double delayed = history.at(t - tau);
    const double rhs = spec.beta_mg * delayed / (1.0 + std::pow(delayed, spec.n_exp)) - spec.gamma_mg * x;
    const double next = x + dt * rhs;
    if (!std::isfinite(next)) throw Error(ErrorKind::IntegrationFailure, "non-finite Mackey-Glass state");
    history.push(next);
    return next;
}

// simulate -------------------------------------------------------------------

SimulationConfig default_simulation_config(SystemKind kind) {
    SimulationConfig cfg;
    switch (kind) {
        case SystemKind::Thomas: cfg.dt = 0.05; break;
        case SystemKind::Lorenz: cfg.dt = 0.02; break;
        case SystemKind::MackeyGlass: cfg.dt = 0.1; break;
    }
    return cfg;
}


Simulator::Simulator(const SystemSpec& spec, ParamSchedule schedule, const SimulationConfig& cfg, std::uint64_t seed,
                     double max_param)
    : spec_(spec), schedule_(std::move(schedule)), cfg_(cfg) {
    spec_.validate();
    schedule_.validate();
    if (!(cfg_.dt > 0.0) || cfg_.subsample < 1 || cfg_.warmup_discard < 0)
        throw Error(ErrorKind::ConfigValidation, "invalid simulation config");
    Rng rng(seed);
    const double dt = cfg_.dt;
    if (spec_.kind == SystemKind::MackeyGlass) {
        double longest = schedule_.max_value();
        if (std::isfinite(max_param)) longest = std::max(longest, max_param);
        const double span = std::max(longest, dt) + dt;
        history_.emplace(time_of(0), dt, span);
        history_->fill([&](double) { return 1.1 + 0.02 * (rng.uniform() - 0.5); });
        state_ = Vec::Constant(1, history_->latest());
    } else {
        state_.resize(3);
        if (spec_.kind == SystemKind::Thomas) {
            for (int i = 0; i < 3; ++i) state_[i] = rng.uniform_closed(-1.0, 1.0);
        } else {
            for (int i = 0; i < 3; ++i) state_[i] = 1.0 + 0.1 * (rng.uniform() - 0.5);
        }
    }
    for (int i = 0; i < cfg_.warmup_discard; ++i) step_once();
}

double Simulator::time_of(long step) const {
    return static_cast<double>(step - cfg_.warmup_discard) * cfg_.dt;
}

void Simulator::step_once() {
    const double t = time_of(step_);
    const double param = schedule_.at(t);
    if (spec_.kind == SystemKind::MackeyGlass) {
        state_[0] = mackey_glass_step(*history_, spec_, param, history_->t_now(), cfg_.dt);
    } else if (spec_.kind == SystemKind::Thomas) {
        state_ = rk4_step([param](const Vec& s) -> Vec { return thomas_deriv(Vec3(s), param); }, state_, cfg_.dt);
    } else {
        const auto& sp = spec_;
        state_ = rk4_step(
            [param, &sp](const Vec& s) -> Vec { return lorenz_deriv(Vec3(s), sp.sigma, param, sp.beta_lorenz); },
            state_, cfg_.dt);
    }
    if (!state_.allFinite() || state_.cwiseAbs().maxCoeff() > cfg_.divergence_bound)
        throw Error(ErrorKind::IntegrationFailure, "state diverged at internal step " + std::to_string(step_));
    ++step_;
}

double Simulator::lambda() const { return schedule_.at(time_of(step_)); }

double Simulator::time() const { return time_of(step_); }

void Simulator::advance() {
    for (int i = 0; i < cfg_.subsample; ++i) step_once();
}

void Simulator::set_schedule(ParamSchedule schedule) {
    schedule.validate();
    if (spec_.kind == SystemKind::MackeyGlass && schedule.max_value() > history_->t_now() - history_->t_back() + 1e-9)
        throw Error(ErrorKind::HistoryUnderflow, "new delay exceeds the stored history");
    schedule_ = std::move(schedule);
}

Trajectory simulate(const SystemSpec& spec, const ParamSchedule& schedule, Eigen::Index n_frames,
                    const SimulationConfig& cfg, std::uint64_t seed) {
    if (n_frames <= 0) throw Error(ErrorKind::ConfigValidation, "n_frames must be positive");
    Simulator sim(spec, schedule, cfg, seed);
    Trajectory traj;
    traj.dt = cfg.dt * cfg.subsample;
    traj.frames.resize(n_frames, spec.dim());
    traj.lambda.resize(n_frames);
    for (Eigen::Index f = 0;; ++f) {
        traj.frames.row(f) = sim.state().transpose();
        traj.lambda[f] = sim.lambda();
        if (f + 1 == n_frames) break;
        sim.advance();
    }
    return traj;
}

double estimate_thomas_b(const Mat& frames, double dt) {
    if (frames.cols() != 3) throw Error(ErrorKind::DimensionMismatch, "Thomas estimate needs 3 columns");
    if (frames.rows() < 3) throw Error(ErrorKind::DegenerateTrajectory, "need at least 3 frames");
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index i = 1; i + 1 < frames.rows(); ++i) {
        const Eigen::Vector3d s = frames.row(i).transpose();
        const Eigen::Vector3d d = (frames.row(i + 1) - frames.row(i - 1)).transpose() / (2.0 * dt);
        const Eigen::Vector3d forcing(std::sin(s[1]), std::sin(s[2]), std::sin(s[0]));
        num += (forcing - d).dot(s);
        den += s.squaredNorm();
    }
    if (den < 1e-9) throw Error(ErrorKind::DegenerateTrajectory, "trajectory has (near) zero energy");
    return num / den;
}

double mean_cycle_frames(const Mat& frames, int col) {
    std::vector<Eigen::Index> peaks;
    const auto x = frames.col(col);
    for (Eigen::Index i = 1; i + 1 < x.size(); ++i) {
        if (x[i] > x[i - 1] && x[i] >= x[i + 1]) peaks.push_back(i);
    }
    if (peaks.size() < 2) return 0.0;
    return static_cast<double>(peaks.back() - peaks.front()) / static_cast<double>(peaks.size() - 1);
}

void write_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,lambda";
    for (int c = 0; c < traj.dim(); ++c) os << ",x" << c;
    os << '\n';
    os << std::setprecision(17);
    for (Eigen::Index f = 0; f < traj.size(); ++f) {
        os << traj.time(f) << ',' << traj.lambda[f];
        for (int c = 0; c < traj.dim(); ++c) os << ',' << traj.frames(f, c);
        os << '\n';
    }
}

}  // namespace rhythm::dynsys
