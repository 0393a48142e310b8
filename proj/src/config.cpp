#include "rhythm/config.hpp"

#include <algorithm>
#include <cstring>

namespace rhythm::config {

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigValidation, std::string("bad value for '") + key + "': " + e.what());
    }
}

void require_object(const json& j, const char* where) {
    if (!j.is_object()) throw Error(ErrorKind::ConfigValidation, std::string(where) + " must be a JSON object");
}

std::string_view order_name(learner::StepOrder o) {
    return o == learner::StepOrder::NodeThenPhase ? "node-then-phase" : "phase-then-node";
}

}  // namespace

void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    require_object(j, where);
    for (const auto& [key, _] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) throw Error(ErrorKind::ConfigValidation, std::string("unknown key '") + key + "' in " + where);
    }
}

json parse(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ConfigValidation, std::string(what) + " is not valid JSON: " + e.what());
    }
}

void PhaseConfig::validate() const {
    if (!(lambda_density > 0.0 && lambda_density <= 1.0))
        throw Error(ErrorKind::ConfigValidation, "phase.lambda_density must lie in (0, 1]");
    if (!(phase_density > 0.0 && phase_density <= 1.0))
        throw Error(ErrorKind::ConfigValidation, "phase.phase_density must lie in (0, 1]");
    for (double v : {omega0, eps1, eps2, gamma})
        if (!std::isfinite(v)) throw Error(ErrorKind::ConfigValidation, "phase parameters must be finite");
}

phasenet::PhaseParams make_phase_params(const PhaseConfig& p, int n_links, std::uint64_t seed) {
    p.validate();
    auto params = phasenet::make_phase_params(n_links, p.omega0, p.lambda_density, p.eps1, p.eps2, seed);
    params.gamma.setConstant(p.gamma);
    return params;
}

// Writers ----------------------------------------------------------------------

json to_json(const dynsys::SystemSpec& s) {
    return {{"kind", std::string(dynsys::to_string(s.kind))},
            {"sigma", s.sigma},
            {"beta_lorenz", s.beta_lorenz},
            {"beta_mg", s.beta_mg},
            {"gamma_mg", s.gamma_mg},
            {"n_exp", s.n_exp}};
}

json to_json(const dynsys::ParamSchedule& s) {
    using K = dynsys::ParamSchedule::Kind;
    switch (s.kind) {
        case K::Constant: return {{"kind", "constant"}, {"value", s.base_value}};
        case K::StepSwitch: {
            json sw = json::array();
            for (const auto& [t, v] : s.switches) sw.push_back({t, v});
            return {{"kind", "step"}, {"base", s.base_value}, {"switches", sw}};
        }
        case K::Sinusoid:
            return {{"kind", "sinusoid"},
                    {"center", s.center},
                    {"amplitude", s.amplitude},
                    {"angular_frequency", s.angular_frequency}};
    }
    return {};
}

json to_json(const dynsys::SimulationConfig& s) {
    return {{"dt", s.dt},
            {"subsample", s.subsample},
            {"warmup_discard", s.warmup_discard},
            {"divergence_bound", s.divergence_bound}};
}

json to_json(const reservoir::ReservoirParams& p) {
    json j = {{"n_nodes", p.n_nodes},
              {"node_density", p.node_density},
              {"spectral_target", p.spectral_target},
              {"alpha", p.alpha},
              {"input_scale", p.input_scale},
              {"mod_depth", p.mod_depth}};
    if (p.bias.size() == 0) {
        j["bias"] = 0.0;
    } else if ((p.bias.array() == p.bias[0]).all()) {
        j["bias"] = p.bias[0];
    } else {
        j["bias"] = std::vector<double>(p.bias.data(), p.bias.data() + p.bias.size());
    }
    return j;
}

json to_json(const PhaseConfig& p) {
    return {{"omega0", p.omega0},
            {"lambda_density", p.lambda_density},
            {"eps1", p.eps1},
            {"eps2", p.eps2},
            {"gamma", p.gamma},
            {"phase_density", p.phase_density},
            {"step_order", std::string(order_name(p.order))}};
}

json to_json(const learner::TrainConfig& c) {
    return {{"warmup_steps", c.warmup_steps},
            {"train_steps", c.train_steps},
            {"ridge_beta", c.ridge_beta},
            {"predict_warmup_steps", c.predict_warmup_steps},
            {"dt", c.dt}};
}

json to_json(const learner::TargetingConfig& c) {
    return {{"sweep_omega", c.sweep_omega},
            {"sweep_duration", c.sweep_duration},
            {"loss", "rmse"},
            {"r_equilibrium_tol", c.r_equilibrium_tol},
            {"r_window", c.r_window},
            {"loss_window", c.loss_window}};
}

// Readers ----------------------------------------------------------------------

dynsys::SystemSpec system_from_json(const json& j, dynsys::SystemSpec s) {
    require_known_keys(j, {"kind", "sigma", "beta_lorenz", "beta_mg", "gamma_mg", "n_exp"}, "system");
    std::string kind(dynsys::to_string(s.kind));
    read(j, "kind", kind);
    s.kind = dynsys::system_kind_from_string(kind);
    read(j, "sigma", s.sigma);
    read(j, "beta_lorenz", s.beta_lorenz);
    read(j, "beta_mg", s.beta_mg);
    read(j, "gamma_mg", s.gamma_mg);
    read(j, "n_exp", s.n_exp);
    s.validate();
    return s;
}

dynsys::ParamSchedule schedule_from_json(const json& j) {
    require_object(j, "schedule");
    std::string kind;
    read(j, "kind", kind);
    dynsys::ParamSchedule s;
    if (kind == "constant") {
        require_known_keys(j, {"kind", "value"}, "schedule");
        double v = 0.0;
        read(j, "value", v);
        s = dynsys::ParamSchedule::constant(v);
    } else if (kind == "step") {
        require_known_keys(j, {"kind", "base", "switches"}, "schedule");
        double base = 0.0;
        std::vector<std::pair<double, double>> sw;
        read(j, "base", base);
        read(j, "switches", sw);
        s = dynsys::ParamSchedule::step_switch(base, sw);
    } else if (kind == "sinusoid") {
        require_known_keys(j, {"kind", "center", "amplitude", "angular_frequency"}, "schedule");
        double c = 0.0, a = 0.0, w = 0.0;
        read(j, "center", c);
        read(j, "amplitude", a);
        read(j, "angular_frequency", w);
        s = dynsys::ParamSchedule::sinusoid(c, a, w);
    } else {
        throw Error(ErrorKind::ConfigValidation, "schedule.kind must be constant, step or sinusoid");
    }
    s.validate();
    return s;
}

dynsys::SimulationConfig simulation_from_json(const json& j, dynsys::SimulationConfig s) {
    require_known_keys(j, {"dt", "subsample", "warmup_discard", "divergence_bound"}, "simulation");
    read(j, "dt", s.dt);
    read(j, "subsample", s.subsample);
    read(j, "warmup_discard", s.warmup_discard);
    read(j, "divergence_bound", s.divergence_bound);
    if (!(s.dt > 0.0) || s.subsample < 1 || s.warmup_discard < 0 || !(s.divergence_bound > 0.0))
        throw Error(ErrorKind::ConfigValidation, "invalid simulation settings");
    return s;
}

reservoir::ReservoirParams reservoir_from_json(const json& j, reservoir::ReservoirParams p) {
    require_known_keys(j, {"n_nodes", "node_density", "spectral_target", "alpha", "input_scale", "mod_depth", "bias"},
                       "reservoir");
    read(j, "n_nodes", p.n_nodes);
    read(j, "node_density", p.node_density);
    read(j, "spectral_target", p.spectral_target);
    read(j, "alpha", p.alpha);
    read(j, "input_scale", p.input_scale);
    read(j, "mod_depth", p.mod_depth);
    if (j.contains("bias")) {
        const auto& b = j.at("bias");
        if (b.is_number()) {
            p.bias = Vec::Constant(p.n_nodes, b.get<double>());
        } else if (b.is_array()) {
            const auto v = b.get<std::vector<double>>();
            p.bias = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
        } else {
            throw Error(ErrorKind::ConfigValidation, "reservoir.bias must be a number or an array");
        }
    } else if (p.bias.size() != 0 && p.bias.size() != p.n_nodes) {
        p.bias = Vec::Constant(p.n_nodes, p.bias[0]);
    }
    p.validate();
    return p;
}

PhaseConfig phase_from_json(const json& j, PhaseConfig p) {
    require_known_keys(j, {"omega0", "lambda_density", "eps1", "eps2", "gamma", "phase_density", "step_order"},
                       "phase");
    read(j, "omega0", p.omega0);
    read(j, "lambda_density", p.lambda_density);
    read(j, "eps1", p.eps1);
    read(j, "eps2", p.eps2);
    read(j, "gamma", p.gamma);
    read(j, "phase_density", p.phase_density);
    std::string order(order_name(p.order));
    read(j, "step_order", order);
    if (order == "node-then-phase") {
        p.order = learner::StepOrder::NodeThenPhase;
    } else if (order == "phase-then-node") {
        p.order = learner::StepOrder::PhaseThenNode;
    } else {
        throw Error(ErrorKind::ConfigValidation, "phase.step_order must be node-then-phase or phase-then-node");
    }
    p.validate();
    return p;
}

learner::TrainConfig train_from_json(const json& j, learner::TrainConfig c) {
    require_known_keys(j, {"warmup_steps", "train_steps", "ridge_beta", "predict_warmup_steps", "dt"}, "train");
    read(j, "warmup_steps", c.warmup_steps);
    read(j, "train_steps", c.train_steps);
    read(j, "ridge_beta", c.ridge_beta);
    read(j, "predict_warmup_steps", c.predict_warmup_steps);
    read(j, "dt", c.dt);
    c.validate();
    return c;
}

learner::TargetingConfig targeting_from_json(const json& j, learner::TargetingConfig c) {
    require_known_keys(j, {"sweep_omega", "sweep_duration", "loss", "r_equilibrium_tol", "r_window", "loss_window"},
                       "targeting");
    read(j, "sweep_omega", c.sweep_omega);
    read(j, "sweep_duration", c.sweep_duration);
    read(j, "r_equilibrium_tol", c.r_equilibrium_tol);
    read(j, "r_window", c.r_window);
    read(j, "loss_window", c.loss_window);
    std::string loss = "rmse";
    read(j, "loss", loss);
    if (loss != "rmse") throw Error(ErrorKind::ConfigValidation, "targeting.loss supports only \"rmse\" from JSON");
    c.loss = learner::rmse_loss;
    c.validate();
    return c;
}

}  // namespace rhythm::config
