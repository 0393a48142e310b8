#pragma once

// Link-phase network: every reservoir link carries an oscillator phase that is
// pulled toward the mean field of its phase-neighbors, with a coupling
// amplitude gated by the activity of the nodes the link touches.

#include "rhythm/common.hpp"

#include <utility>
#include <vector>

namespace rhythm::phasenet {

/// A directed reservoir link: signal flows from node `from` into node `to`.
struct Link {
    int from = 0;
    int to = 0;
};

struct PhaseTopology {
    int n_links = 0;
    int n_nodes = 0;
    SpMat phase_adj;       // binary A_phi, n_links x n_links, zero diagonal
    SpMat phase_adj_norm;  // row-L1-normalized A_phi
    SpMat incidence;       // binary Q, n_nodes x n_links (self-loops touch one node)
    SpMat incidence_norm;  // row-L1-normalized Q^T, n_links x n_nodes
};

struct PhaseParams {
    Vec omega0;             // natural frequency per link
    double eps1 = 0.0;
    double eps2 = 1.0;
    Vec gamma;              // phase lag per link
    double lambda_density = 0.5;
    double omega0_value = 0.05;
};

struct PhaseState {
    Vec phi;        // wrapped to [-pi, pi)
    Vec unwrapped;  // running accumulator, never wrapped
    double t = 0.0;
};

struct OrderSample {
    double R = 0.0;
    double mean_phase = 0.0;
    double t = 0.0;
};

struct LocalField {
    Vec r;
    Vec psi;
};

/// Sample A_phi i.i.d. Bernoulli(phase_density) off the diagonal and build
/// the normalized incidence from the link endpoints.
PhaseTopology build_phase_topology(const std::vector<Link>& links, int n_nodes, double phase_density,
                                   std::uint64_t seed);

/// Build a topology from an explicit binary phase adjacency (used for
/// hand-built instances and when loading a saved model).
PhaseTopology make_phase_topology(const std::vector<Link>& links, int n_nodes, const SpMat& phase_adj);

/// Exactly round(lambda_density * n_links) links, chosen by seeded sampling
/// without replacement, get omega0_value; the rest get zero.
PhaseParams make_phase_params(int n_links, double omega0_value, double lambda_density, double eps1, double eps2,
                              std::uint64_t seed);

/// Phases drawn uniformly from [-pi, pi).
PhaseState random_phase_state(int n_links, std::uint64_t seed);
PhaseState phase_state_from(const Vec& phi, double t = 0.0);

LocalField local_mean_field(const PhaseState& state, const PhaseTopology& topo);

/// Per-link coupling amplitude eps1 + eps2 * (Q^T_norm n*), with n* = (n + 1) / 2.
Vec coupling_amplitude(const Vec& node_states, const PhaseTopology& topo, const PhaseParams& params);

/// One forward-Euler step of the coupled phase dynamics.
PhaseState phase_step(const PhaseState& state, const Vec& node_states, const PhaseTopology& topo,
                      const PhaseParams& params, double dt);

OrderSample global_order(const PhaseState& state);

/// Uniform forcing: every phase advances by g * dt.
PhaseState forced_phase_step(const PhaseState& state, double g, double dt);

/// Closed-form phase of an isolated link obeying
///   dphi/dt = omega0 + eps * sin(psi0 - phi),
/// returned unwrapped (continuous in t, starting at phi0).
double isolated_phase_analytic(double omega0, double eps, double psi0, double phi0, double t);

}  // namespace rhythm::phasenet
