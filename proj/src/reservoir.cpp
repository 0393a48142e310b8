#include "rhythm/reservoir.hpp"

#include <algorithm>
#include <cmath>

namespace rhythm::reservoir {

void ReservoirParams::validate() const {
    if (n_nodes < 2) throw Error(ErrorKind::ConfigValidation, "n_nodes must be at least 2");
    if (!(node_density > 0.0 && node_density <= 1.0))
        throw Error(ErrorKind::ConfigValidation, "node_density must lie in (0, 1]");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::ConfigValidation, "alpha must lie in [0, 1]");
    if (!(mod_depth >= 0.0 && mod_depth <= 1.0))
        throw Error(ErrorKind::ConfigValidation, "mod_depth must lie in [0, 1]");
    if (!(spectral_target > 0.0) || !(input_scale >= 0.0))
        throw Error(ErrorKind::ConfigValidation, "spectral_target and input_scale must be positive");
    if (bias.size() != 0 && bias.size() != n_nodes)
        throw Error(ErrorKind::ConfigValidation, "bias length must equal n_nodes");
}

std::vector<phasenet::Link> enumerate_links(const SpMat& adj) {
    std::vector<phasenet::Link> links;
    links.reserve(static_cast<std::size_t>(adj.nonZeros()));
    for (Eigen::Index r = 0; r < adj.outerSize(); ++r) {
        for (SpMat::InnerIterator it(adj, r); it; ++it) {
            links.push_back({static_cast<int>(it.col()), static_cast<int>(it.row())});
        }
    }
    return links;
}

ReservoirTopology make_topology(SpMat node_adj, Mat input_map) {
    if (node_adj.rows() != node_adj.cols()) throw Error(ErrorKind::DimensionMismatch, "adjacency must be square");
    if (input_map.rows() != node_adj.rows())
        throw Error(ErrorKind::DimensionMismatch, "input map rows must equal n_nodes");
    node_adj.prune(0.0);
    node_adj.makeCompressed();
    ReservoirTopology topo;
    topo.links = enumerate_links(node_adj);
    topo.node_adj = std::move(node_adj);
    topo.input_map = std::move(input_map);
    return topo;
}

double spectral_radius(const SpMat& a, int iters, double tol, std::uint64_t seed) {
    if (a.rows() != a.cols()) throw Error(ErrorKind::DimensionMismatch, "spectral radius needs a square matrix");
    const Eigen::Index n = a.rows();
    if (n == 0) return 0.0;
    const SpMat abs_a = a.cwiseAbs();
    // Shift by c*I: the Perron root of |A| + cI is strictly dominant, so
    // cyclic structure in |A| cannot stall the iteration.
    const double shift = abs_a.sum() / static_cast<double>(n);
    if (shift == 0.0) return 0.0;
    Rng rng(seed);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = 0.5 + rng.uniform();
    v /= v.norm();
    double estimate = 0.0;
    double delta = 0.0;
    int settled = 0;
    for (int k = 0; k < iters; ++k) {
        Vec w = abs_a * v + shift * v;
        const double norm = w.norm();
        delta = std::abs(norm - estimate);
        estimate = norm;
        v = w / norm;
        settled = (k > 0 && delta <= tol * estimate) ? settled + 1 : 0;
        if (settled >= 3) return std::max(0.0, estimate - shift);
    }
    throw Error(ErrorKind::NonConvergence,
                "power iteration did not converge (last delta " + std::to_string(delta) + ")");
}

std::pair<ReservoirTopology, phasenet::PhaseTopology> build_reservoir(const ReservoirParams& params,
                                                                      int input_dim, double phase_density,
                                                                      std::uint64_t seed) {
    params.validate();
    if (input_dim < 1) throw Error(ErrorKind::ConfigValidation, "input_dim must be positive");
    const int n = params.n_nodes;

    Rng adj_rng(derive_seed(seed, 1));
    std::vector<Triplet> trips;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (adj_rng.bernoulli(params.node_density)) {
                double w = adj_rng.uniform_closed(-1.0, 1.0);
                if (w == 0.0) w = 1e-3;
                trips.emplace_back(i, j, w);
            }
        }
    }
    SpMat adj(n, n);
    adj.setFromTriplets(trips.begin(), trips.end());
    const double radius = spectral_radius(adj);
    if (radius < 1e-12) throw Error(ErrorKind::Nilpotent, "sampled adjacency has zero spectral radius");
    adj *= params.spectral_target / radius;

    Rng in_rng(derive_seed(seed, 2));
    Mat w_in(n, input_dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < input_dim; ++j) w_in(i, j) = in_rng.uniform_closed(-params.input_scale, params.input_scale);

    ReservoirTopology topo = make_topology(std::move(adj), std::move(w_in));
    phasenet::PhaseTopology ptopo =
        phasenet::build_phase_topology(topo.links, n, phase_density, derive_seed(seed, 3));
    return {std::move(topo), std::move(ptopo)};
}

double modulation_factor(double phi, double m) { return 1.0 - 0.5 * m * (1.0 + std::sin(phi)); }

void modulated_adjacency(const ReservoirTopology& topo, const Vec& phi, double m, SpMat& scratch) {
    if (phi.size() != topo.n_links())
        throw Error(ErrorKind::IndexMismatch, "phase count does not match the number of links");
    if (scratch.nonZeros() != topo.node_adj.nonZeros()) scratch = topo.node_adj;
    const double* base = topo.node_adj.valuePtr();
    double* out = scratch.valuePtr();
    const auto nnz = topo.node_adj.nonZeros();
    if (m == 0.0) {
        std::copy(base, base + nnz, out);
        return;
    }
    for (Eigen::Index k = 0; k < nnz; ++k) out[k] = base[k] * modulation_factor(phi[k], m);
}

SpMat modulated_adjacency(const ReservoirTopology& topo, const phasenet::PhaseState& phases, double m) {
    SpMat out = topo.node_adj;
    modulated_adjacency(topo, phases.phi, m, out);
    return out;
}

ReservoirState reservoir_step(const ReservoirState& state, const Vec& u, const SpMat& modulated,
                              const ReservoirTopology& topo, const ReservoirParams& params) {
    if (u.size() != topo.n_inputs()) throw Error(ErrorKind::DimensionMismatch, "input dimension mismatch");
    if (state.n.size() != topo.n_nodes()) throw Error(ErrorKind::DimensionMismatch, "state dimension mismatch");
    Vec pre = modulated * state.n + topo.input_map * u;
    if (params.bias.size() != 0) pre += params.bias;
    ReservoirState next;
    next.n = params.alpha * state.n.array() + (1.0 - params.alpha) * pre.array().tanh();
    next.t = state.t + 1;
    return next;
}

ReservoirState reservoir_step(const ReservoirState& state, const Vec& u, const phasenet::PhaseState& phases,
                              const ReservoirTopology& topo, const ReservoirParams& params) {
    return reservoir_step(state, u, modulated_adjacency(topo, phases, params.mod_depth), topo, params);
}

Vec readout(const ReadoutMatrix& w, const ReservoirState& state) {
    if (w.w_out.cols() != state.n.size()) throw Error(ErrorKind::DimensionMismatch, "readout dimension mismatch");
    return w.w_out * state.n;
}

}  // namespace rhythm::reservoir
