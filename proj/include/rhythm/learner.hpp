#pragma once

// Training and prediction lifecycle: warm-up, state harvesting, ridge
// readout, closed-loop prediction and mean-phase targeting.

#include "rhythm/common.hpp"
#include "rhythm/dynsys.hpp"
#include "rhythm/phasenet.hpp"
#include "rhythm/reservoir.hpp"

#include <functional>
#include <string_view>
#include <vector>

namespace rhythm::learner {

enum class PhaseMode { Coupled, Forced, Frozen };

std::string_view to_string(PhaseMode mode);
PhaseMode phase_mode_from_string(std::string_view name);

/// Order of the two updates inside one frame.
enum class StepOrder { NodeThenPhase, PhaseThenNode };

/// Everything that stays fixed once a network is built.
struct Model {
    reservoir::ReservoirTopology topo;
    reservoir::ReservoirParams params;
    phasenet::PhaseTopology phase_topo;
    phasenet::PhaseParams phase_params;
    double dt = 1.0;  // phase Euler step, one frame
    StepOrder order = StepOrder::NodeThenPhase;
};

/// A model together with its evolving node and phase state.
class Twin {
public:
    Twin(Model model, phasenet::PhaseState phases);

    const Model& model() const { return model_; }
    Model& model() { return model_; }
    const reservoir::ReservoirState& nodes() const { return nodes_; }
    const phasenet::PhaseState& phases() const { return phases_; }

    void set_nodes(reservoir::ReservoirState s) { nodes_ = std::move(s); }
    void set_phases(phasenet::PhaseState s) { phases_ = std::move(s); }
    void reset_nodes();

    /// Feed one input frame. In Forced mode every phase advances by g * dt;
    /// in Frozen mode phases do not move.
    void step(const Vec& u, PhaseMode mode, double g = 0.0);

    /// Shift all phases uniformly by `delta` radians (no node update).
    void shift_phases(double delta);

    phasenet::OrderSample order() const { return phasenet::global_order(phases_); }

private:
    void advance_phases(PhaseMode mode, double g);

    Model model_;
    reservoir::ReservoirState nodes_;
    phasenet::PhaseState phases_;
    SpMat modulated_;
};

struct TrainConfig {
    int warmup_steps = 500;
    int train_steps = 10000;
    double ridge_beta = 1e-6;
    int predict_warmup_steps = 3000;
    double dt = 1.0;

    void validate() const;
};

struct Harvest {
    Mat states;   // n_nodes x train_steps
    Mat targets;  // n_inputs x train_steps
    std::vector<phasenet::OrderSample> order_log;  // one entry per fed frame
};

/// Drive the twin open loop with `frames` (coupled phases), discard the
/// warm-up, then record node states and the aligned next-frame targets.
Harvest harvest_states(const Mat& frames, Twin& twin, const TrainConfig& cfg);

/// W_out = U S^T (S S^T + beta I)^-1 via a Cholesky solve.
reservoir::ReadoutMatrix ridge_fit(const Mat& states, const Mat& targets, double beta);

/// Relative residual of the regularized normal equations.
double ridge_residual(const Mat& states, const Mat& targets, double beta, const reservoir::ReadoutMatrix& w);

struct Prediction {
    dynsys::Trajectory trajectory;
    std::vector<phasenet::OrderSample> order;
};

/// Closed loop: each output becomes the next input. Frame k of the result is
/// the readout of the state reached after feeding output k-1 (frame 0 is the
/// readout of the current state).
Prediction closed_loop_predict(Twin& twin, PhaseMode mode, double g, const reservoir::ReadoutMatrix& w,
                               long horizon, double frame_dt = 1.0);

/// Open-loop one-step-ahead normalized RMSE of the readout over `frames`,
/// with phases evolving in `mode`.
double teacher_forced_nrmse(Twin& twin, const reservoir::ReadoutMatrix& w, const Mat& frames, PhaseMode mode,
                            long skip = 0);

using LossFn = std::function<double(const Vec& predicted, const Vec& truth)>;

double rmse_loss(const Vec& predicted, const Vec& truth);

struct TargetingConfig {
    double sweep_omega = 0.02;     // Omega, radians per unit time
    double sweep_duration = 400;   // tau, must exceed 2 pi / Omega
    LossFn loss = rmse_loss;
    double r_equilibrium_tol = 0.01;
    int r_window = 200;
    int loss_window = 50;
    int warmup_frames = 0;  // total open-loop frames to consume; 0 stops at the freeze

    void validate() const;
};

struct SweepSample {
    double mean_phase_unwrapped = 0.0;
    double loss = 0.0;
};

struct TargetingResult {
    double R0 = 0.0;
    double mean_phase0 = 0.0;
    phasenet::PhaseState frozen;
    long t_R0 = 0;
    long frames_used = 0;
    double max_R_drift = 0.0;   // max |R - R0| during forcing
    double sweep_span = 0.0;    // unwrapped mean-phase span covered by the sweep
    std::vector<SweepSample> sweep;
};

/// Lock the twin onto the state of `u_test`: run coupled until R settles,
/// sweep the mean phase under uniform forcing while scoring the readout,
/// then freeze at the best-scoring mean phase.
TargetingResult target_mean_phase(const Mat& u_test, Twin& twin, const reservoir::ReadoutMatrix& w,
                                  const TargetingConfig& cfg);

/// Rolling standard deviation of the last `window` samples.
double rolling_std(const std::vector<double>& xs, std::size_t end, std::size_t window);

}  // namespace rhythm::learner
