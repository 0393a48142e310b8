#pragma once

// Echo state network whose link strengths are modulated by per-link phases.

#include "rhythm/common.hpp"
#include "rhythm/phasenet.hpp"

#include <utility>
#include <vector>

namespace rhythm::reservoir {

struct ReservoirParams {
    int n_nodes = 300;
    double node_density = 0.02;
    double spectral_target = 0.9;
    double alpha = 0.2;        // leakage
    double input_scale = 0.5;  // delta
    double mod_depth = 0.4;    // m
    Vec bias;                  // xi; empty means zero

    void validate() const;
};

/// Static network structure. Link k is the k-th stored nonzero of the
/// row-major `node_adj`, so link_index is the storage order itself.
struct ReservoirTopology {
    SpMat node_adj;  // A_n, spectrally scaled
    Mat input_map;   // W_in, n_nodes x n_inputs
    std::vector<phasenet::Link> links;

    int n_nodes() const { return static_cast<int>(node_adj.rows()); }
    int n_links() const { return static_cast<int>(links.size()); }
    int n_inputs() const { return static_cast<int>(input_map.cols()); }
};

struct ReservoirState {
    Vec n;
    long t = 0;
};

struct ReadoutMatrix {
    Mat w_out;  // n_inputs x n_nodes
};

/// Enumerate the links of a row-major adjacency in storage order.
std::vector<phasenet::Link> enumerate_links(const SpMat& adj);

/// Wrap a hand-built adjacency and input map into a topology.
ReservoirTopology make_topology(SpMat node_adj, Mat input_map);

/// Dominant eigenvalue of |A| by power iteration from a seeded positive start.
double spectral_radius(const SpMat& a, int iters = 20000, double tol = 1e-13, std::uint64_t seed = 7);

std::pair<ReservoirTopology, phasenet::PhaseTopology> build_reservoir(const ReservoirParams& params,
                                                                      int input_dim, double phase_density,
                                                                      std::uint64_t seed);

/// Multiplicative factor 1 - (m/2)(1 + sin(phi)) applied to each link.
double modulation_factor(double phi, double m);

/// A_n with each nonzero scaled by its modulation factor. `scratch` must share
/// the sparsity pattern of `topo.node_adj`; only its values are rewritten.
void modulated_adjacency(const ReservoirTopology& topo, const Vec& phi, double m, SpMat& scratch);
SpMat modulated_adjacency(const ReservoirTopology& topo, const phasenet::PhaseState& phases, double m);

/// n' = alpha n + (1 - alpha) tanh(A_mod n + W_in u + xi).
ReservoirState reservoir_step(const ReservoirState& state, const Vec& u, const phasenet::PhaseState& phases,
                              const ReservoirTopology& topo, const ReservoirParams& params);

/// Same update against a precomputed modulated adjacency.
ReservoirState reservoir_step(const ReservoirState& state, const Vec& u, const SpMat& modulated,
                              const ReservoirTopology& topo, const ReservoirParams& params);

Vec readout(const ReadoutMatrix& w, const ReservoirState& state);

}  // namespace rhythm::reservoir
