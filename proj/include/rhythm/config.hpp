#pragma once

// JSON mapping of the configuration records. Unknown keys are rejected so a
// typo in a config file fails loudly instead of silently using a default.

#include "rhythm/dynsys.hpp"
#include "rhythm/learner.hpp"
#include "rhythm/reservoir.hpp"

#include <json.hpp>

namespace rhythm::config {

using json = nlohmann::json;

/// Scalar description of the phase network; expands into PhaseParams.
struct PhaseConfig {
    double omega0 = 0.005;
    double lambda_density = 0.5;  // fraction of links with nonzero omega0
    double eps1 = 0.0;
    double eps2 = 0.05;
    double gamma = 0.0;           // uniform phase lag
    double phase_density = 0.01;  // density of the link-to-link adjacency
    learner::StepOrder order = learner::StepOrder::NodeThenPhase;

    void validate() const;
};

json to_json(const dynsys::SystemSpec& s);
json to_json(const dynsys::ParamSchedule& s);
json to_json(const dynsys::SimulationConfig& s);
json to_json(const reservoir::ReservoirParams& p);
json to_json(const PhaseConfig& p);
json to_json(const learner::TrainConfig& c);
json to_json(const learner::TargetingConfig& c);

// Each reader starts from `base` and overrides the keys present in `j`.
dynsys::SystemSpec system_from_json(const json& j, dynsys::SystemSpec base = {});
dynsys::ParamSchedule schedule_from_json(const json& j);
dynsys::SimulationConfig simulation_from_json(const json& j, dynsys::SimulationConfig base);
reservoir::ReservoirParams reservoir_from_json(const json& j, reservoir::ReservoirParams base = {});
PhaseConfig phase_from_json(const json& j, PhaseConfig base = {});
learner::TrainConfig train_from_json(const json& j, learner::TrainConfig base = {});
learner::TargetingConfig targeting_from_json(const json& j, learner::TargetingConfig base = {});

/// Expand into per-link parameters for a network with `n_links` links.
phasenet::PhaseParams make_phase_params(const PhaseConfig& p, int n_links, std::uint64_t seed);

/// Throws ConfigValidation naming the first key of `j` not in `allowed`.
void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const char* where);

/// Parse JSON text, mapping parse errors to ConfigValidation.
json parse(const std::string& text, const char* what);

}  // namespace rhythm::config
