#pragma once

// Configuration-driven experiment protocols: regime detection on R(t), and
// the digital-twin train / target / baseline / steering runs.

#include "rhythm/analysis.hpp"
#include "rhythm/config.hpp"
#include "rhythm/io.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rhythm::experiments {

using config::json;
namespace fs = std::filesystem;

enum class ExperimentKind {
    Simulate,
    DetectThomas,
    DetectMackey,
    DetectLorenz,
    TwinTrain,
    TwinTarget,
    TwinBaseline,
    TwinSteer,
    Predict,
};

std::string_view to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(std::string_view name);

struct DetectConfig {
    analysis::ShiftDetectorConfig detector;
    long plateau_skip = 3000;  // frames after a switch (or the start) excluded from plateau stats
    long smooth_window = 300;  // moving average for the correlation metric
    long corr_skip = 2000;     // leading frames excluded from the correlation
};

struct TwinConfig {
    std::vector<double> state_lambdas{0.18, 0.29};
    long dwell_min = 2000;
    long dwell_max = 4000;
    long test_frames = 4000;       // simulated frames per test state
    long horizon = 6000;           // closed-loop frames
    long classify_frames = 5000;   // trailing frames classified and scored
    long plateau_skip = 1000;      // frames after each training switch excluded from plateau stats
    std::vector<double> steer_phases;  // frozen mean phases for the steering sweep; empty means 6 evenly spaced
    int steer_state = 0;           // training state whose R0 is frozen during steering
    std::string bundle;            // load this bundle instead of training
    std::string predict_mode = "frozen";
    double predict_omega = 0.0;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::DetectThomas;
    std::uint64_t seed = 1;
    dynsys::SystemSpec system;
    dynsys::ParamSchedule schedule = dynsys::ParamSchedule::constant(0.18);
    dynsys::SimulationConfig simulation = dynsys::default_simulation_config(dynsys::SystemKind::Thomas);
    long n_frames = 20000;
    reservoir::ReservoirParams reservoir;
    config::PhaseConfig phase;
    learner::TrainConfig train;
    learner::TargetingConfig targeting;
    DetectConfig detect;
    TwinConfig twin;
    std::string output_dir = "out";

    void validate() const;
};

ExperimentConfig experiment_from_json(const json& j, ExperimentConfig base = {});
ExperimentConfig load_experiment(const fs::path& path);
json to_json(const ExperimentConfig& cfg);

// Reusable stages -------------------------------------------------------------

/// Build the network described by the config. Streams are derived from the
/// master seed so every stage is reproducible on its own.
learner::Model build_model(const ExperimentConfig& cfg);
phasenet::PhaseState initial_phases(const ExperimentConfig& cfg, int n_links, std::uint64_t stream);

struct DetectionResult {
    dynsys::Trajectory trajectory;
    std::vector<phasenet::OrderSample> order;
    std::vector<long> switch_frames;          // frames where lambda changes
    std::optional<long> collapse_onset;       // Lorenz only
    double cycle_frames = 0.0;                // mean cycle length before the first switch
    analysis::ChangeReport report;
    std::vector<analysis::PlateauStats> plateaus;  // one per segment between switches
    std::optional<double> correlation;        // smoothed R vs lambda (sinusoid schedules)
    double separation = 0.0;                  // |mean difference| / pooled std of the first two plateaus
};

DetectionResult run_detection(const ExperimentConfig& cfg);

/// Aperiodic alternation of the training states with seeded dwell times.
dynsys::ParamSchedule training_schedule(const ExperimentConfig& cfg, double frame_dt);

struct TrainResult {
    io::ModelBundle bundle;
    dynsys::Trajectory data;
    learner::Harvest harvest;
    std::vector<long> switch_frames;  // relative to the first fed frame
    std::vector<analysis::PlateauStats> plateaus;
    std::vector<double> plateau_lambdas;
    double train_nrmse = 0.0;
};

TrainResult train_twin(const ExperimentConfig& cfg);

/// Test data for training state `k`, independent of the training run.
dynsys::Trajectory test_data(const ExperimentConfig& cfg, std::size_t k, long n_frames);

struct StateOutcome {
    double lambda_input = 0.0;
    std::optional<learner::TargetingResult> targeting;
    learner::Prediction prediction;
    analysis::AttractorClass predicted_class = analysis::AttractorClass::Dead;
    analysis::AttractorClass input_class = analysis::AttractorClass::Dead;
    std::optional<double> b_estimate;  // Thomas only
    analysis::ClassifierDiagnostics diagnostics;
    std::string error;                 // set when the closed loop blew up
};

/// Targeting followed by a frozen closed loop for each training state.
std::vector<StateOutcome> target_states(const ExperimentConfig& cfg, const io::ModelBundle& bundle);

/// Standard echo state network (m = 0) warmed on each test state, then run
/// closed loop.
std::vector<StateOutcome> baseline_states(const ExperimentConfig& cfg);

struct SteerOutcome {
    double R0 = 0.0;
    std::vector<double> mean_phases;
    std::vector<StateOutcome> runs;
};

/// Freeze R at the equilibrium of one state and step the mean phase through
/// a list of values, running a closed loop at each.
SteerOutcome steer_sweep(const ExperimentConfig& cfg, const io::ModelBundle& bundle);

/// Run the configured protocol and write its artifacts under output_dir.
/// Returns the summary that was written to summary.json.
json run_experiment(const ExperimentConfig& cfg);

inline constexpr const char* kSummarySchema = "rhythm-summary/1";

}  // namespace rhythm::experiments
