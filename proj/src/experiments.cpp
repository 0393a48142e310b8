#include "rhythm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace rhythm::experiments {

namespace {

// Seed streams. Every stage draws from its own stream so that, e.g., changing
// the test data never perturbs the network.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kNetworkStream = 2;
constexpr std::uint64_t kPhaseParamStream = 3;
constexpr std::uint64_t kPhaseInitStream = 4;
constexpr std::uint64_t kDwellStream = 5;
constexpr std::uint64_t kTestDataStream = 100;

struct KindName {
    ExperimentKind kind;
    const char* name;
};

constexpr KindName kKinds[] = {
    {ExperimentKind::Simulate, "simulate"},         {ExperimentKind::DetectThomas, "detect_thomas"},
    {ExperimentKind::DetectMackey, "detect_mackey"}, {ExperimentKind::DetectLorenz, "detect_lorenz"},
    {ExperimentKind::TwinTrain, "twin_train"},       {ExperimentKind::TwinTarget, "twin_target"},
    {ExperimentKind::TwinBaseline, "twin_baseline"}, {ExperimentKind::TwinSteer, "twin_steer"},
    {ExperimentKind::Predict, "predict"},
};

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigValidation, std::string("bad value for '") + key + "': " + e.what());
    }
}

double frame_dt(const ExperimentConfig& cfg) {
    return cfg.simulation.dt * static_cast<double>(cfg.simulation.subsample);
}

std::vector<long> lambda_switches(const Vec& lambda) {
    std::vector<long> out;
    for (Eigen::Index i = 1; i < lambda.size(); ++i)
        if (lambda[i] != lambda[i - 1]) out.push_back(static_cast<long>(i));
    return out;
}

std::vector<double> r_series(const std::vector<phasenet::OrderSample>& order) {
    std::vector<double> r;
    r.reserve(order.size());
    for (const auto& o : order) r.push_back(o.R);
    return r;
}

// Plateau statistics per segment between boundaries, skipping the transient
// after each boundary. Short segments keep their second half.
std::vector<analysis::PlateauStats> segment_plateaus(const std::vector<double>& series, std::vector<long> bounds,
                                                     long skip) {
    const auto n = static_cast<long>(series.size());
    bounds.insert(bounds.begin(), 0L);
    bounds.push_back(n);
    std::vector<analysis::PlateauStats> out;
    for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
        const long a = bounds[k];
        const long b = std::min(bounds[k + 1], n);
        if (b <= a) continue;
        const long begin = (b - a > 2 * skip) ? a + skip : a + (b - a) / 2;
        out.push_back(analysis::plateau_stats(series, begin, b));
    }
    return out;
}

double pooled_separation(const analysis::PlateauStats& a, const analysis::PlateauStats& b) {
    const double pooled = std::sqrt(0.5 * (a.stddev * a.stddev + b.stddev * b.stddev));
    const double diff = std::abs(a.mean - b.mean);
    if (pooled == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / pooled;
}

json plateau_json(const analysis::PlateauStats& p) {
    return {{"mean", p.mean}, {"stddev", p.stddev}, {"count", p.count}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<long>& v) { return v ? json(*v) : json(nullptr); }

void evaluate(StateOutcome& out, const ExperimentConfig& cfg, const Mat& input_frames) {
    const auto& frames = out.prediction.trajectory.frames;
    const long tail = std::min<long>(cfg.twin.classify_frames, frames.rows());
    analysis::ClassifierConfig cc;
    cc.window = tail;
    cc.min_frames = std::min<long>(cc.min_frames, tail);
    out.predicted_class = analysis::classify_attractor(frames.bottomRows(tail), cc, &out.diagnostics);
    analysis::ClassifierConfig ic;
    ic.window = std::min<long>(ic.window, input_frames.rows());
    ic.min_frames = std::min<long>(ic.min_frames, input_frames.rows());
    out.input_class = analysis::classify_attractor(input_frames, ic);
    if (cfg.system.kind == dynsys::SystemKind::Thomas) {
        try {
            out.b_estimate = dynsys::estimate_thomas_b(frames.bottomRows(tail), frame_dt(cfg));
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateTrajectory) throw;
        }
    }
}

json outcome_json(const StateOutcome& o) {
    json j = {{"lambda_input", o.lambda_input},
              {"predicted_class", std::string(analysis::to_string(o.predicted_class))},
              {"input_class", std::string(analysis::to_string(o.input_class))},
              {"b_estimate", optional_json(o.b_estimate)},
              {"trailing_variance", o.diagnostics.trailing_variance},
              {"return_correlation", o.diagnostics.best_return_correlation},
              {"lyapunov_proxy", o.diagnostics.lyapunov_proxy}};
    if (o.targeting) {
        const auto& t = *o.targeting;
        j["targeting"] = {{"R0", t.R0},
                          {"mean_phase0", t.mean_phase0},
                          {"t_R0", t.t_R0},
                          {"frames_used", t.frames_used},
                          {"max_R_drift", t.max_R_drift},
                          {"sweep_span", t.sweep_span}};
    }
    if (!o.error.empty()) j["error"] = o.error;
    return j;
}

// Closed loop that records a blow-up instead of aborting the whole run.
void run_closed_loop(StateOutcome& out, learner::Twin& twin, const io::ModelBundle& bundle,
                     const ExperimentConfig& cfg, const Mat& input_frames, learner::PhaseMode mode, double g) {
    try {
        out.prediction = learner::closed_loop_predict(twin, mode, g, bundle.readout, cfg.twin.horizon, frame_dt(cfg));
        evaluate(out, cfg, input_frames);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Divergence) throw;
        out.error = e.what();
    }
}

json base_summary(const ExperimentConfig& cfg) {
    return {{"schema", kSummarySchema},
            {"version", std::string(kVersion)},
            {"experiment", std::string(to_string(cfg.experiment))},
            {"seed", cfg.seed},
            {"config", to_json(cfg)}};
}

void write_summary(const fs::path& dir, const json& summary) {
    io::write_text(dir / "summary.json", summary.dump(2) + "\n");
}

void write_outcomes(const fs::path& dir, const std::string& prefix, const std::vector<StateOutcome>& outcomes) {
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
        const auto& o = outcomes[k];
        if (!o.error.empty()) continue;
        io::save_trajectory_csv(dir / (prefix + std::to_string(k) + ".csv"), o.prediction.trajectory);
        io::save_order_csv(dir / (prefix + std::to_string(k) + "_order.csv"), o.prediction.order);
    }
}

io::ModelBundle obtain_bundle(const ExperimentConfig& cfg) {
    if (!cfg.twin.bundle.empty()) return io::load_bundle(cfg.twin.bundle);
    return train_twin(cfg).bundle;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
    for (const auto& k : kKinds)
        if (k.kind == kind) return k.name;
    return "unknown";
}

ExperimentKind experiment_kind_from_string(std::string_view name) {
    for (const auto& k : kKinds)
        if (name == k.name) return k.kind;
    throw Error(ErrorKind::ConfigValidation, "unknown experiment '" + std::string(name) + "'");
}

// Config -------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    system.validate();
    schedule.validate();
    reservoir.validate();
    phase.validate();
    train.validate();
    targeting.validate();
    if (n_frames <= 0) throw Error(ErrorKind::ConfigValidation, "n_frames must be positive");
    using K = dynsys::SystemKind;
    const bool detect_ok = (experiment == ExperimentKind::DetectThomas && system.kind == K::Thomas) ||
                           (experiment == ExperimentKind::DetectMackey && system.kind == K::MackeyGlass) ||
                           (experiment == ExperimentKind::DetectLorenz && system.kind == K::Lorenz);
    const bool is_detect = experiment == ExperimentKind::DetectThomas || experiment == ExperimentKind::DetectMackey ||
                           experiment == ExperimentKind::DetectLorenz;
    if (is_detect && !detect_ok)
        throw Error(ErrorKind::ConfigValidation, "experiment " + std::string(to_string(experiment)) +
                                                     " does not match system " + std::string(dynsys::to_string(system.kind)));
    if (twin.state_lambdas.empty()) throw Error(ErrorKind::ConfigValidation, "twin.state_lambdas must not be empty");
    if (twin.dwell_min <= 0 || twin.dwell_max < twin.dwell_min)
        throw Error(ErrorKind::ConfigValidation, "twin dwell range must satisfy 0 < dwell_min <= dwell_max");
    if (twin.horizon <= 0 || twin.classify_frames <= 0 || twin.classify_frames > twin.horizon)
        throw Error(ErrorKind::ConfigValidation, "twin.classify_frames must lie in (0, horizon]");
    if (twin.test_frames < train.predict_warmup_steps)
        throw Error(ErrorKind::ConfigValidation, "twin.test_frames must cover the prediction warm-up");
    if (twin.steer_state < 0 || static_cast<std::size_t>(twin.steer_state) >= twin.state_lambdas.size())
        throw Error(ErrorKind::ConfigValidation, "twin.steer_state is out of range");
    learner::phase_mode_from_string(twin.predict_mode);
    if (experiment == ExperimentKind::Predict && twin.bundle.empty())
        throw Error(ErrorKind::ConfigValidation, "predict needs twin.bundle");
}

ExperimentConfig experiment_from_json(const json& j, ExperimentConfig c) {
    config::require_known_keys(j,
                               {"experiment", "seed", "system", "schedule", "simulation", "n_frames", "reservoir",
                                "phase", "train", "targeting", "detect", "twin", "output_dir"},
                               "experiment config");
    std::string kind(to_string(c.experiment));
    read(j, "experiment", kind);
    c.experiment = experiment_kind_from_string(kind);
    read(j, "seed", c.seed);
    if (j.contains("system")) {
        const auto before = c.system.kind;
        c.system = config::system_from_json(j.at("system"), c.system);
        if (c.system.kind != before && !j.contains("simulation"))
            c.simulation = dynsys::default_simulation_config(c.system.kind);
    }
    if (j.contains("schedule")) c.schedule = config::schedule_from_json(j.at("schedule"));
    if (j.contains("simulation")) {
        c.simulation = config::simulation_from_json(j.at("simulation"), dynsys::default_simulation_config(c.system.kind));
    }
    read(j, "n_frames", c.n_frames);
    if (j.contains("reservoir")) c.reservoir = config::reservoir_from_json(j.at("reservoir"), c.reservoir);
    if (j.contains("phase")) c.phase = config::phase_from_json(j.at("phase"), c.phase);
    if (j.contains("train")) c.train = config::train_from_json(j.at("train"), c.train);
    if (j.contains("targeting")) c.targeting = config::targeting_from_json(j.at("targeting"), c.targeting);
    if (j.contains("detect")) {
        const auto& d = j.at("detect");
        config::require_known_keys(d,
                                   {"window", "k_sigma", "min_std", "start", "settle", "plateau_skip",
                                    "smooth_window", "corr_skip"},
                                   "detect");
        read(d, "window", c.detect.detector.window);
        read(d, "k_sigma", c.detect.detector.k_sigma);
        read(d, "min_std", c.detect.detector.min_std);
        read(d, "start", c.detect.detector.start);
        read(d, "settle", c.detect.detector.settle);
        read(d, "plateau_skip", c.detect.plateau_skip);
        read(d, "smooth_window", c.detect.smooth_window);
        read(d, "corr_skip", c.detect.corr_skip);
    }
    if (j.contains("twin")) {
        const auto& t = j.at("twin");
        config::require_known_keys(t,
                                   {"state_lambdas", "dwell_min", "dwell_max", "test_frames", "horizon",
                                    "classify_frames", "plateau_skip", "steer_phases", "steer_state", "bundle",
                                    "predict_mode", "predict_omega"},
                                   "twin");
        read(t, "state_lambdas", c.twin.state_lambdas);
        read(t, "dwell_min", c.twin.dwell_min);
        read(t, "dwell_max", c.twin.dwell_max);
        read(t, "test_frames", c.twin.test_frames);
        read(t, "horizon", c.twin.horizon);
        read(t, "classify_frames", c.twin.classify_frames);
        read(t, "plateau_skip", c.twin.plateau_skip);
        read(t, "steer_phases", c.twin.steer_phases);
        read(t, "steer_state", c.twin.steer_state);
        read(t, "bundle", c.twin.bundle);
        read(t, "predict_mode", c.twin.predict_mode);
        read(t, "predict_omega", c.twin.predict_omega);
    }
    read(j, "output_dir", c.output_dir);
    c.validate();
    return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigValidation, e.what());
    }
    return experiment_from_json(config::parse(text, path.string().c_str()));
}

json to_json(const ExperimentConfig& c) {
    const auto& d = c.detect;
    const auto& t = c.twin;
    return {{"experiment", std::string(to_string(c.experiment))},
            {"seed", c.seed},
            {"system", config::to_json(c.system)},
            {"schedule", config::to_json(c.schedule)},
            {"simulation", config::to_json(c.simulation)},
            {"n_frames", c.n_frames},
            {"reservoir", config::to_json(c.reservoir)},
            {"phase", config::to_json(c.phase)},
            {"train", config::to_json(c.train)},
            {"targeting", config::to_json(c.targeting)},
            {"detect",
             {{"window", d.detector.window},
              {"k_sigma", d.detector.k_sigma},
              {"min_std", d.detector.min_std},
              {"start", d.detector.start},
              {"settle", d.detector.settle},
              {"plateau_skip", d.plateau_skip},
              {"smooth_window", d.smooth_window},
              {"corr_skip", d.corr_skip}}},
            {"twin",
             {{"state_lambdas", t.state_lambdas},
              {"dwell_min", t.dwell_min},
              {"dwell_max", t.dwell_max},
              {"test_frames", t.test_frames},
              {"horizon", t.horizon},
              {"classify_frames", t.classify_frames},
              {"plateau_skip", t.plateau_skip},
              {"steer_phases", t.steer_phases},
              {"steer_state", t.steer_state},
              {"bundle", t.bundle},
              {"predict_mode", t.predict_mode},
              {"predict_omega", t.predict_omega}}},
            {"output_dir", c.output_dir}};
}

// Stages -------------------------------------------------------------------------

learner::Model build_model(const ExperimentConfig& cfg) {
    auto [topo, ptopo] = reservoir::build_reservoir(cfg.reservoir, cfg.system.dim(), cfg.phase.phase_density,
                                                    derive_seed(cfg.seed, kNetworkStream));
    auto pparams = config::make_phase_params(cfg.phase, topo.n_links(), derive_seed(cfg.seed, kPhaseParamStream));
    learner::Model m;
    m.topo = std::move(topo);
    m.params = cfg.reservoir;
    m.phase_topo = std::move(ptopo);
    m.phase_params = std::move(pparams);
    m.dt = cfg.train.dt;
    m.order = cfg.phase.order;
    return m;
}

phasenet::PhaseState initial_phases(const ExperimentConfig& cfg, int n_links, std::uint64_t stream) {
    return phasenet::random_phase_state(n_links, derive_seed(cfg.seed, stream));
}

DetectionResult run_detection(const ExperimentConfig& cfg) {
    cfg.validate();
    DetectionResult res;
    res.trajectory = dynsys::simulate(cfg.system, cfg.schedule, cfg.n_frames, cfg.simulation,
                                      derive_seed(cfg.seed, kDataStream));
    const auto model = build_model(cfg);
    learner::Twin twin(model, initial_phases(cfg, model.topo.n_links(), kPhaseInitStream));
    res.order.reserve(static_cast<std::size_t>(cfg.n_frames));
    for (Eigen::Index f = 0; f < res.trajectory.size(); ++f) {
        twin.step(res.trajectory.frames.row(f).transpose(), learner::PhaseMode::Coupled);
        auto o = twin.order();
        o.t = static_cast<double>(f);
        res.order.push_back(o);
    }
    const auto r = r_series(res.order);
    const bool sinusoid = cfg.schedule.kind == dynsys::ParamSchedule::Kind::Sinusoid;
    if (!sinusoid) res.switch_frames = lambda_switches(res.trajectory.lambda);

    const long first_switch = res.switch_frames.empty() ? cfg.n_frames : res.switch_frames.front();
    res.cycle_frames = dynsys::mean_cycle_frames(res.trajectory.frames.topRows(first_switch));

    std::vector<long> truths = res.switch_frames;
    if (cfg.system.kind == dynsys::SystemKind::Lorenz && !res.switch_frames.empty()) {
        const double rho = res.trajectory.lambda[res.trajectory.size() - 1];
        res.collapse_onset = analysis::lorenz_collapse_onset(res.trajectory.frames, rho, cfg.system.beta_lorenz,
                                                             cfg.detect.detector.start, first_switch,
                                                             res.switch_frames.back());
        if (res.collapse_onset) truths.push_back(*res.collapse_onset);
    }
    res.report = analysis::detect_equilibrium_shift(r, cfg.detect.detector, truths);
    res.plateaus = segment_plateaus(r, truths, cfg.detect.plateau_skip);
    if (res.plateaus.size() >= 2) res.separation = pooled_separation(res.plateaus[0], res.plateaus[1]);
    if (sinusoid) {
        const Vec rv = Eigen::Map<const Vec>(r.data(), static_cast<Eigen::Index>(r.size()));
        const Vec smooth = analysis::moving_average(rv, cfg.detect.smooth_window);
        const long skip = std::min<long>(cfg.detect.corr_skip, cfg.n_frames - 2);
        res.correlation = analysis::pearson(smooth.tail(cfg.n_frames - skip),
                                            res.trajectory.lambda.tail(cfg.n_frames - skip));
    }
    return res;
}

dynsys::ParamSchedule training_schedule(const ExperimentConfig& cfg, double fdt) {
    const auto& states = cfg.twin.state_lambdas;
    const long total = static_cast<long>(cfg.train.warmup_steps) + cfg.train.train_steps + 1;
    Rng rng(derive_seed(cfg.seed, kDwellStream));
    const auto span = static_cast<std::uint64_t>(cfg.twin.dwell_max - cfg.twin.dwell_min + 1);
    std::vector<std::pair<double, double>> switches;
    long frame = 0;
    std::size_t k = 0;
    for (;;) {
        frame += cfg.twin.dwell_min + static_cast<long>(rng.below(span));
        if (frame >= total) break;
        k = (k + 1) % states.size();
        // switch halfway between frames so rounding cannot move it
        switches.emplace_back((static_cast<double>(frame) - 0.5) * fdt, states[k]);
    }
    if (states.size() == 1) return dynsys::ParamSchedule::constant(states.front());
    return dynsys::ParamSchedule::step_switch(states.front(), switches);
}

TrainResult train_twin(const ExperimentConfig& cfg) {
    cfg.validate();
    TrainResult res;
    const double fdt = frame_dt(cfg);
    const long total = static_cast<long>(cfg.train.warmup_steps) + cfg.train.train_steps + 1;
    res.data = dynsys::simulate(cfg.system, training_schedule(cfg, fdt), total, cfg.simulation,
                                derive_seed(cfg.seed, kDataStream));
    auto model = build_model(cfg);
    learner::Twin twin(model, initial_phases(cfg, model.topo.n_links(), kPhaseInitStream));
    res.harvest = learner::harvest_states(res.data.frames, twin, cfg.train);
    for (std::size_t i = 0; i < res.harvest.order_log.size(); ++i) res.harvest.order_log[i].t = static_cast<double>(i);
    const auto w = learner::ridge_fit(res.harvest.states, res.harvest.targets, cfg.train.ridge_beta);

    const Mat pred = w.w_out * res.harvest.states;
    const Vec mean = res.harvest.targets.rowwise().mean();
    const double var = (res.harvest.targets.colwise() - mean).squaredNorm();
    res.train_nrmse = var > 0.0 ? std::sqrt((pred - res.harvest.targets).squaredNorm() / var) : 0.0;

    res.switch_frames = lambda_switches(res.data.lambda.head(total - 1));
    const auto r = r_series(res.harvest.order_log);
    res.plateaus = segment_plateaus(r, res.switch_frames, cfg.twin.plateau_skip);
    std::vector<long> starts{0};
    starts.insert(starts.end(), res.switch_frames.begin(), res.switch_frames.end());
    for (long s : starts) res.plateau_lambdas.push_back(res.data.lambda[s]);
    res.plateau_lambdas.resize(res.plateaus.size());

    res.bundle.model = twin.model();
    res.bundle.readout = w;
    res.bundle.phases = twin.phases();
    res.bundle.info.system = cfg.system;
    res.bundle.info.state_lambdas = cfg.twin.state_lambdas;
    res.bundle.info.seed = cfg.seed;
    res.bundle.info.phase_density = cfg.phase.phase_density;
    res.bundle.info.train = cfg.train;
    res.bundle.info.frame_dt = fdt;
    res.bundle.info.simulation = cfg.simulation;
    return res;
}

dynsys::Trajectory test_data(const ExperimentConfig& cfg, std::size_t k, long n_frames) {
    if (k >= cfg.twin.state_lambdas.size()) throw Error(ErrorKind::IndexMismatch, "no such training state");
    return dynsys::simulate(cfg.system, dynsys::ParamSchedule::constant(cfg.twin.state_lambdas[k]), n_frames,
                            cfg.simulation, derive_seed(cfg.seed, kTestDataStream + k));
}

std::vector<StateOutcome> target_states(const ExperimentConfig& cfg, const io::ModelBundle& bundle) {
    std::vector<StateOutcome> out;
    auto tcfg = cfg.targeting;
    tcfg.warmup_frames = cfg.train.predict_warmup_steps;
    for (std::size_t k = 0; k < cfg.twin.state_lambdas.size(); ++k) {
        StateOutcome o;
        o.lambda_input = cfg.twin.state_lambdas[k];
        const auto test = test_data(cfg, k, cfg.twin.test_frames);
        learner::Twin twin(bundle.model, bundle.phases);
        o.targeting = learner::target_mean_phase(test.frames, twin, bundle.readout, tcfg);
        run_closed_loop(o, twin, bundle, cfg, test.frames, learner::PhaseMode::Frozen, 0.0);
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<StateOutcome> baseline_states(const ExperimentConfig& cfg) {
    ExperimentConfig base = cfg;
    base.reservoir.mod_depth = 0.0;
    const auto bundle = cfg.twin.bundle.empty() ? train_twin(base).bundle : io::load_bundle(cfg.twin.bundle);
    if (bundle.model.params.mod_depth != 0.0)
        throw Error(ErrorKind::ConfigValidation, "baseline bundle must have mod_depth 0");
    std::vector<StateOutcome> out;
    for (std::size_t k = 0; k < cfg.twin.state_lambdas.size(); ++k) {
        StateOutcome o;
        o.lambda_input = cfg.twin.state_lambdas[k];
        const auto test = test_data(cfg, k, cfg.twin.test_frames);
        learner::Twin twin(bundle.model, bundle.phases);
        for (long t = 0; t < cfg.train.predict_warmup_steps; ++t)
            twin.step(test.frames.row(t).transpose(), learner::PhaseMode::Coupled);
        run_closed_loop(o, twin, bundle, base, test.frames, learner::PhaseMode::Frozen, 0.0);
        out.push_back(std::move(o));
    }
    return out;
}

SteerOutcome steer_sweep(const ExperimentConfig& cfg, const io::ModelBundle& bundle) {
    SteerOutcome res;
    auto tcfg = cfg.targeting;
    tcfg.warmup_frames = cfg.train.predict_warmup_steps;
    const auto k = static_cast<std::size_t>(cfg.twin.steer_state);
    const auto test = test_data(cfg, k, cfg.twin.test_frames);
    learner::Twin base(bundle.model, bundle.phases);
    const auto targeted = learner::target_mean_phase(test.frames, base, bundle.readout, tcfg);
    res.R0 = targeted.R0;
    res.mean_phases = cfg.twin.steer_phases;
    if (res.mean_phases.empty())
        for (int i = 0; i < 6; ++i) res.mean_phases.push_back(-kPi + kTwoPi * i / 6.0);
    for (double target : res.mean_phases) {
        learner::Twin twin = base;
        twin.shift_phases(wrap_phase(target - twin.order().mean_phase));
        StateOutcome o;
        o.lambda_input = cfg.twin.state_lambdas[k];
        run_closed_loop(o, twin, bundle, cfg, test.frames, learner::PhaseMode::Frozen, 0.0);
        res.runs.push_back(std::move(o));
    }
    return res;
}

// Runner -------------------------------------------------------------------------

json run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    json summary = base_summary(cfg);

    switch (cfg.experiment) {
        case ExperimentKind::Simulate: {
            const auto traj = dynsys::simulate(cfg.system, cfg.schedule, cfg.n_frames, cfg.simulation,
                                               derive_seed(cfg.seed, kDataStream));
            io::save_trajectory_csv(dir / "trajectory.csv", traj);
            summary["frames"] = traj.size();
            summary["frame_dt"] = traj.dt;
            summary["mean_cycle_frames"] = dynsys::mean_cycle_frames(traj.frames);
            break;
        }
        case ExperimentKind::DetectThomas:
        case ExperimentKind::DetectMackey:
        case ExperimentKind::DetectLorenz: {
            const auto res = run_detection(cfg);
            io::save_trajectory_csv(dir / "trajectory.csv", res.trajectory);
            io::save_order_csv(dir / "order.csv", res.order);
            json cps = json::array();
            for (const auto& cp : res.report.change_points)
                cps.push_back({{"frame", cp.frame}, {"R_before", cp.R_before}, {"R_after", cp.R_after}});
            json lat = json::array();
            json lat_cycles = json::array();
            for (const auto& l : res.report.latency_frames) {
                lat.push_back(optional_json(l));
                lat_cycles.push_back(l && res.cycle_frames > 0.0 ? json(static_cast<double>(*l) / res.cycle_frames)
                                                                 : json(nullptr));
            }
            json report = {{"change_points", cps}, {"latency_frames", lat}, {"latency_cycles", lat_cycles}};
            io::write_text(dir / "change_report.json", report.dump(2) + "\n");
            json plateaus = json::array();
            for (const auto& p : res.plateaus) plateaus.push_back(plateau_json(p));
            summary["switch_frames"] = res.switch_frames;
            summary["collapse_onset"] = optional_json(res.collapse_onset);
            summary["cycle_frames"] = res.cycle_frames;
            summary["plateaus"] = plateaus;
            summary["separation"] = res.separation;
            summary["correlation"] = optional_json(res.correlation);
            summary["change_report"] = report;
            break;
        }
        case ExperimentKind::TwinTrain: {
            const auto res = train_twin(cfg);
            io::save_trajectory_csv(dir / "trajectory.csv", res.data);
            io::save_order_csv(dir / "order.csv", res.harvest.order_log);
            io::save_bundle(dir / "bundle", res.bundle);
            json plateaus = json::array();
            for (std::size_t i = 0; i < res.plateaus.size(); ++i) {
                auto p = plateau_json(res.plateaus[i]);
                p["lambda"] = res.plateau_lambdas[i];
                plateaus.push_back(p);
            }
            summary["switch_frames"] = res.switch_frames;
            summary["plateaus"] = plateaus;
            summary["train_nrmse"] = res.train_nrmse;
            summary["n_links"] = res.bundle.model.topo.n_links();
            break;
        }
        case ExperimentKind::TwinTarget: {
            const auto bundle = obtain_bundle(cfg);
            const auto outcomes = target_states(cfg, bundle);
            write_outcomes(dir, "prediction_", outcomes);
            json states = json::array();
            for (const auto& o : outcomes) states.push_back(outcome_json(o));
            summary["states"] = states;
            break;
        }
        case ExperimentKind::TwinBaseline: {
            const auto outcomes = baseline_states(cfg);
            write_outcomes(dir, "baseline_", outcomes);
            json states = json::array();
            for (const auto& o : outcomes) states.push_back(outcome_json(o));
            summary["states"] = states;
            break;
        }
        case ExperimentKind::TwinSteer: {
            const auto bundle = obtain_bundle(cfg);
            const auto res = steer_sweep(cfg, bundle);
            write_outcomes(dir, "steer_", res.runs);
            json runs = json::array();
            for (std::size_t i = 0; i < res.runs.size(); ++i) {
                auto j = outcome_json(res.runs[i]);
                j["mean_phase"] = res.mean_phases[i];
                runs.push_back(j);
            }
            summary["R0"] = res.R0;
            summary["runs"] = runs;
            break;
        }
        case ExperimentKind::Predict: {
            const auto bundle = io::load_bundle(cfg.twin.bundle);
            const auto mode = learner::phase_mode_from_string(cfg.twin.predict_mode);
            std::vector<StateOutcome> outcomes;
            for (std::size_t k = 0; k < cfg.twin.state_lambdas.size(); ++k) {
                StateOutcome o;
                o.lambda_input = cfg.twin.state_lambdas[k];
                const auto test = test_data(cfg, k, cfg.twin.test_frames);
                learner::Twin twin(bundle.model, bundle.phases);
                for (long t = 0; t < cfg.train.predict_warmup_steps; ++t)
                    twin.step(test.frames.row(t).transpose(), learner::PhaseMode::Coupled);
                run_closed_loop(o, twin, bundle, cfg, test.frames, mode, cfg.twin.predict_omega);
                outcomes.push_back(std::move(o));
            }
            write_outcomes(dir, "prediction_", outcomes);
            json states = json::array();
            for (const auto& o : outcomes) states.push_back(outcome_json(o));
            summary["states"] = states;
            break;
        }
    }
    write_summary(dir, summary);
    return summary;
}

}  // namespace rhythm::experiments
