#include "rhythm/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rhythm::learner {

std::string_view to_string(PhaseMode mode) {
    switch (mode) {
        case PhaseMode::Coupled: return "coupled";
        case PhaseMode::Forced: return "forced";
        case PhaseMode::Frozen: return "frozen";
    }
    return "unknown";
}

PhaseMode phase_mode_from_string(std::string_view name) {
    if (name == "coupled") return PhaseMode::Coupled;
    if (name == "forced") return PhaseMode::Forced;
    if (name == "frozen") return PhaseMode::Frozen;
    throw Error(ErrorKind::InvalidCommand, "unknown phase mode '" + std::string(name) + "'");
}

// Twin -----------------------------------------------------------------------

Twin::Twin(Model model, phasenet::PhaseState phases)
    : model_(std::move(model)), phases_(std::move(phases)), modulated_(model_.topo.node_adj) {
    if (phases_.phi.size() != model_.topo.n_links())
        throw Error(ErrorKind::IndexMismatch, "initial phases do not match the number of links");
    reset_nodes();
}

void Twin::reset_nodes() {
    nodes_.n = Vec::Zero(model_.topo.n_nodes());
    nodes_.t = 0;
}

void Twin::advance_phases(PhaseMode mode, double g) {
    switch (mode) {
        case PhaseMode::Coupled:
            phases_ = phasenet::phase_step(phases_, nodes_.n, model_.phase_topo, model_.phase_params, model_.dt);
            break;
        case PhaseMode::Forced: phases_ = phasenet::forced_phase_step(phases_, g, model_.dt); break;
        case PhaseMode::Frozen: phases_.t += model_.dt; break;
    }
}

void Twin::step(const Vec& u, PhaseMode mode, double g) {
    if (model_.order == StepOrder::PhaseThenNode) advance_phases(mode, g);
    reservoir::modulated_adjacency(model_.topo, phases_.phi, model_.params.mod_depth, modulated_);
    nodes_ = reservoir::reservoir_step(nodes_, u, modulated_, model_.topo, model_.params);
    if (model_.order == StepOrder::NodeThenPhase) advance_phases(mode, g);
}

void Twin::shift_phases(double delta) {
    phases_.unwrapped.array() += delta;
    phases_.phi = (phases_.phi.array() + delta).unaryExpr([](double x) { return wrap_phase(x); });
}

// Training -------------------------------------------------------------------

void TrainConfig::validate() const {
    if (warmup_steps <= 0 || train_steps <= 0 || predict_warmup_steps <= 0)
        throw Error(ErrorKind::ConfigValidation, "step counts must be positive");
    if (!(ridge_beta >= 0.0)) throw Error(ErrorKind::ConfigValidation, "ridge beta must be non-negative");
    if (!(dt > 0.0)) throw Error(ErrorKind::ConfigValidation, "dt must be positive");
}

Harvest harvest_states(const Mat& frames, Twin& twin, const TrainConfig& cfg) {
    cfg.validate();
    const long needed = static_cast<long>(cfg.warmup_steps) + cfg.train_steps + 1;
    if (frames.rows() < needed)
        throw Error(ErrorKind::InsufficientData, "need " + std::to_string(needed) + " frames, have " +
                                                     std::to_string(frames.rows()));
    if (frames.cols() != twin.model().topo.n_inputs())
        throw Error(ErrorKind::DimensionMismatch, "frame width does not match the input map");

    Harvest h;
    h.states.resize(twin.model().topo.n_nodes(), cfg.train_steps);
    h.targets.resize(frames.cols(), cfg.train_steps);
    h.order_log.reserve(static_cast<std::size_t>(cfg.warmup_steps + cfg.train_steps));
    for (long t = 0; t < cfg.warmup_steps + cfg.train_steps; ++t) {
        twin.step(frames.row(t).transpose(), PhaseMode::Coupled);
        h.order_log.push_back(twin.order());
        if (t >= cfg.warmup_steps) {
            const long k = t - cfg.warmup_steps;
            h.states.col(k) = twin.nodes().n;
            h.targets.col(k) = frames.row(t + 1).transpose();
        }
    }
    return h;
}

reservoir::ReadoutMatrix ridge_fit(const Mat& states, const Mat& targets, double beta) {
    if (states.cols() != targets.cols())
        throw Error(ErrorKind::DimensionMismatch, "state and target column counts differ");
    if (!(beta >= 0.0)) throw Error(ErrorKind::Domain, "ridge beta must be non-negative");
    const Eigen::Index n = states.rows();
    Mat gram = Mat::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(states);
    gram = gram.selfadjointView<Eigen::Lower>();
    gram.diagonal().array() += beta;
    const Mat rhs = states * targets.transpose();

    Eigen::LLT<Mat> llt(gram);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "regularized Gram matrix is not SPD");
    const Vec diag = Mat(llt.matrixL()).diagonal();
    const double ratio = diag.minCoeff() / diag.maxCoeff();
    if (beta == 0.0 && ratio * ratio < 1e-14 * static_cast<double>(n))
        throw Error(ErrorKind::SingularSystem, "state Gram matrix is rank deficient and beta is zero");

    reservoir::ReadoutMatrix w;
    w.w_out = llt.solve(rhs).transpose();
    if (!w.w_out.allFinite()) throw Error(ErrorKind::SingularSystem, "readout solve produced non-finite values");
    return w;
}

double ridge_residual(const Mat& states, const Mat& targets, double beta, const reservoir::ReadoutMatrix& w) {
    const Mat rhs = states * targets.transpose();
    Mat lhs = states * (states.transpose() * w.w_out.transpose());
    lhs += beta * w.w_out.transpose();
    const double denom = rhs.norm();
    return denom == 0.0 ? (lhs - rhs).norm() : (lhs - rhs).norm() / denom;
}

// Prediction -----------------------------------------------------------------

Prediction closed_loop_predict(Twin& twin, PhaseMode mode, double g, const reservoir::ReadoutMatrix& w,
                               long horizon, double frame_dt) {
    Prediction p;
    const auto dim = w.w_out.rows();
    p.trajectory.dt = frame_dt;
    p.trajectory.frames.resize(std::max(horizon, 0L), dim);
    p.trajectory.lambda = Vec::Constant(std::max(horizon, 0L), std::numeric_limits<double>::quiet_NaN());
    p.order.reserve(static_cast<std::size_t>(std::max(horizon, 0L)));
    for (long k = 0; k < horizon; ++k) {
        const Vec out = reservoir::readout(w, twin.nodes());
        if (!out.allFinite() || out.cwiseAbs().maxCoeff() > 1e6)
            throw Error(ErrorKind::Divergence, "closed-loop prediction blew up at frame " + std::to_string(k));
        p.trajectory.frames.row(k) = out.transpose();
        p.order.push_back(twin.order());
        twin.step(out, mode, g);
    }
    return p;
}

double teacher_forced_nrmse(Twin& twin, const reservoir::ReadoutMatrix& w, const Mat& frames, PhaseMode mode,
                            long skip) {
    double err = 0.0;
    long count = 0;
    for (long t = 0; t + 1 < frames.rows(); ++t) {
        twin.step(frames.row(t).transpose(), mode);
        if (t < skip) continue;
        const Vec pred = reservoir::readout(w, twin.nodes());
        err += (pred - frames.row(t + 1).transpose()).squaredNorm();
        ++count;
    }
    if (count == 0) throw Error(ErrorKind::InsufficientData, "no frames scored");
    const Mat scored = frames.bottomRows(frames.rows() - skip - 1);
    const Eigen::RowVectorXd mean = scored.colwise().mean();
    const double var = (scored.rowwise() - mean).squaredNorm() / static_cast<double>(scored.rows());
    return std::sqrt(err / static_cast<double>(count) / var);
}

double rmse_loss(const Vec& predicted, const Vec& truth) {
    return std::sqrt((predicted - truth).squaredNorm() / static_cast<double>(truth.size()));
}

// Targeting ------------------------------------------------------------------

void TargetingConfig::validate() const {
    if (!(sweep_omega != 0.0) || !std::isfinite(sweep_omega))
        throw Error(ErrorKind::ConfigValidation, "sweep omega must be finite and nonzero");
    if (!(sweep_duration * std::abs(sweep_omega) > kTwoPi))
        throw Error(ErrorKind::ConfigValidation, "sweep duration must exceed 2 pi / omega");
    if (r_window < 2 || loss_window < 1 || !(r_equilibrium_tol > 0.0))
        throw Error(ErrorKind::ConfigValidation, "invalid equilibrium detector settings");
    if (!loss) throw Error(ErrorKind::ConfigValidation, "loss function missing");
}

double rolling_std(const std::vector<double>& xs, std::size_t end, std::size_t window) {
    if (window == 0 || end < window) return std::numeric_limits<double>::infinity();
    double mean = 0.0;
    for (std::size_t i = end - window; i < end; ++i) mean += xs[i];
    mean /= static_cast<double>(window);
    double var = 0.0;
    for (std::size_t i = end - window; i < end; ++i) var += (xs[i] - mean) * (xs[i] - mean);
    return std::sqrt(var / static_cast<double>(window));
}

TargetingResult target_mean_phase(const Mat& u_test, Twin& twin, const reservoir::ReadoutMatrix& w,
                                  const TargetingConfig& cfg) {
    cfg.validate();
    const long n_frames = u_test.rows();
    const double dt = twin.model().dt;
    TargetingResult res;
    long t = 0;
    auto need_frame = [&](long idx) {
        if (idx >= n_frames)
            throw Error(ErrorKind::InsufficientData, "test data ended before targeting finished (frame " +
                                                         std::to_string(idx) + ")");
    };

    // (1) coupled dynamics until R settles
    std::vector<double> r_hist;
    bool settled = false;
    for (; t < n_frames; ++t) {
        twin.step(u_test.row(t).transpose(), PhaseMode::Coupled);
        r_hist.push_back(twin.order().R);
        if (r_hist.size() >= static_cast<std::size_t>(cfg.r_window) &&
            rolling_std(r_hist, r_hist.size(), static_cast<std::size_t>(cfg.r_window)) < cfg.r_equilibrium_tol) {
            settled = true;
            ++t;
            break;
        }
    }
    if (!settled) throw Error(ErrorKind::NoEquilibrium, "order parameter never settled on the test data");
    res.t_R0 = t;
    const auto start = twin.order();
    res.R0 = start.R;

    // (2) uniform forcing sweep, scoring the readout against the next frame
    const auto sweep_steps = static_cast<long>(std::ceil(cfg.sweep_duration / dt));
    double unwrapped = start.mean_phase;
    double prev_wrapped = start.mean_phase;
    res.sweep.reserve(static_cast<std::size_t>(sweep_steps));
    for (long k = 0; k < sweep_steps; ++k, ++t) {
        need_frame(t + 1);
        twin.step(u_test.row(t).transpose(), PhaseMode::Forced, cfg.sweep_omega);
        const auto o = twin.order();
        unwrapped += wrap_phase(o.mean_phase - prev_wrapped);
        prev_wrapped = o.mean_phase;
        res.max_R_drift = std::max(res.max_R_drift, std::abs(o.R - res.R0));
        const Vec pred = reservoir::readout(w, twin.nodes());
        res.sweep.push_back({unwrapped, cfg.loss(pred, u_test.row(t + 1).transpose())});
    }
    res.sweep_span = std::abs(unwrapped - start.mean_phase);

    // (3) best trailing-window mean loss; the candidate phase is the window centre
    const auto win = static_cast<std::size_t>(std::min<long>(cfg.loss_window, sweep_steps));
    double best = std::numeric_limits<double>::infinity();
    double best_phase = start.mean_phase;
    double acc = 0.0;
    for (std::size_t k = 0; k < res.sweep.size(); ++k) {
        acc += res.sweep[k].loss;
        if (k >= win) acc -= res.sweep[k - win].loss;
        if (k + 1 < win) continue;
        const double mean_loss = acc / static_cast<double>(win);
        if (mean_loss < best) {
            best = mean_loss;
            best_phase = res.sweep[k + 1 - (win + 1) / 2].mean_phase_unwrapped;
        }
    }
    res.mean_phase0 = wrap_phase(best_phase);

    // keep forcing until the mean phase comes round to the chosen value
    const double step_shift = cfg.sweep_omega * dt;
    const double dir = step_shift > 0.0 ? 1.0 : -1.0;
    double remaining = dir * (res.mean_phase0 - wrap_phase(unwrapped));
    remaining = std::fmod(remaining, kTwoPi);
    if (remaining < 0.0) remaining += kTwoPi;
    while (remaining > 0.0) {
        need_frame(t);
        const double shift = std::min(remaining, std::abs(step_shift));
        twin.step(u_test.row(t).transpose(), PhaseMode::Forced, dir * shift / dt);
        remaining -= shift;
        res.max_R_drift = std::max(res.max_R_drift, std::abs(twin.order().R - res.R0));
        ++t;
    }

    // frozen from here on; finish the open-loop warm-up if requested
    for (; t < cfg.warmup_frames; ++t) {
        need_frame(t);
        twin.step(u_test.row(t).transpose(), PhaseMode::Frozen);
    }
    res.frozen = twin.phases();
    res.frames_used = t;
    return res;
}

}  // namespace rhythm::learner
