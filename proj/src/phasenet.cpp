#include "rhythm/phasenet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rhythm::phasenet {

namespace {

SpMat row_normalized(const SpMat& m) {
    SpMat out = m;
    for (Eigen::Index r = 0; r < out.outerSize(); ++r) {
        double sum = 0.0;
        for (SpMat::InnerIterator it(out, r); it; ++it) sum += std::abs(it.value());
        if (sum == 0.0) continue;
        for (SpMat::InnerIterator it(out, r); it; ++it) it.valueRef() /= sum;
    }
    return out;
}

SpMat build_incidence(const std::vector<Link>& links, int n_nodes) {
    std::vector<Triplet> trips;
    trips.reserve(links.size() * 2);
    for (std::size_t l = 0; l < links.size(); ++l) {
        const auto& link = links[l];
        if (link.from < 0 || link.from >= n_nodes || link.to < 0 || link.to >= n_nodes)
            throw Error(ErrorKind::IndexMismatch, "link endpoint outside node range");
        const auto col = static_cast<int>(l);
        trips.emplace_back(link.to, col, 1.0);
        if (link.from != link.to) trips.emplace_back(link.from, col, 1.0);
    }
    SpMat q(n_nodes, static_cast<Eigen::Index>(links.size()));
    q.setFromTriplets(trips.begin(), trips.end());
    return q;
}

}  // namespace

PhaseTopology make_phase_topology(const std::vector<Link>& links, int n_nodes, const SpMat& phase_adj) {
    if (links.empty()) throw Error(ErrorKind::EmptyLinks, "phase topology needs at least one link");
    const auto n = static_cast<Eigen::Index>(links.size());
    if (phase_adj.rows() != n || phase_adj.cols() != n)
        throw Error(ErrorKind::DimensionMismatch, "phase adjacency must be n_links x n_links");
    PhaseTopology topo;
    topo.n_links = static_cast<int>(n);
    topo.n_nodes = n_nodes;
    topo.phase_adj = phase_adj;
    topo.phase_adj.makeCompressed();
    topo.phase_adj_norm = row_normalized(topo.phase_adj);
    topo.incidence = build_incidence(links, n_nodes);
    SpMat qt = topo.incidence.transpose();
    topo.incidence_norm = row_normalized(qt);
    return topo;
}

PhaseTopology build_phase_topology(const std::vector<Link>& links, int n_nodes, double phase_density,
                                   std::uint64_t seed) {
    if (links.empty()) throw Error(ErrorKind::EmptyLinks, "phase topology needs at least one link");
    if (!(phase_density > 0.0 && phase_density <= 1.0))
        throw Error(ErrorKind::ConfigValidation, "phase_density must lie in (0, 1]");
    const auto n = static_cast<int>(links.size());
    Rng rng(seed);
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(phase_density * n * n * 1.1) + 16);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if (rng.bernoulli(phase_density)) trips.emplace_back(i, j, 1.0);
        }
    }
    SpMat adj(n, n);
    adj.setFromTriplets(trips.begin(), trips.end());
    return make_phase_topology(links, n_nodes, adj);
}

PhaseParams make_phase_params(int n_links, double omega0_value, double lambda_density, double eps1, double eps2,
                              std::uint64_t seed) {
    if (n_links <= 0) throw Error(ErrorKind::EmptyLinks, "phase params need at least one link");
    if (!(lambda_density > 0.0 && lambda_density <= 1.0))
        throw Error(ErrorKind::ConfigValidation, "lambda_density must lie in (0, 1]");
    PhaseParams p;
    p.eps1 = eps1;
    p.eps2 = eps2;
    p.lambda_density = lambda_density;
    p.omega0_value = omega0_value;
    p.omega0 = Vec::Zero(n_links);
    p.gamma = Vec::Zero(n_links);
    const auto active = static_cast<int>(std::lround(lambda_density * n_links));
    std::vector<int> idx(static_cast<std::size_t>(n_links));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    // partial Fisher-Yates
    for (int i = 0; i < active; ++i) {
        const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_links - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        p.omega0[idx[static_cast<std::size_t>(i)]] = omega0_value;
    }
    return p;
}

PhaseState random_phase_state(int n_links, std::uint64_t seed) {
    Rng rng(seed);
    PhaseState s;
    s.phi.resize(n_links);
    for (int i = 0; i < n_links; ++i) s.phi[i] = wrap_phase(rng.uniform(-kPi, kPi));
    s.unwrapped = s.phi;
    return s;
}

PhaseState phase_state_from(const Vec& phi, double t) {
    PhaseState s;
    s.phi = phi.unaryExpr([](double x) { return wrap_phase(x); });
    s.unwrapped = phi;
    s.t = t;
    return s;
}

LocalField local_mean_field(const PhaseState& state, const PhaseTopology& topo) {
    const Vec c = state.phi.array().cos();
    const Vec s = state.phi.array().sin();
    const Vec re = topo.phase_adj_norm * c;
    const Vec im = topo.phase_adj_norm * s;
    LocalField f;
    f.r.resize(re.size());
    f.psi.resize(re.size());
    for (Eigen::Index i = 0; i < re.size(); ++i) {
        f.r[i] = std::min(1.0, std::hypot(re[i], im[i]));
        f.psi[i] = safe_arg(im[i], re[i]);
    }
    return f;
}

Vec coupling_amplitude(const Vec& node_states, const PhaseTopology& topo, const PhaseParams& params) {
    if (node_states.size() != topo.n_nodes)
        throw Error(ErrorKind::DimensionMismatch, "node vector does not match topology");
    const Vec active = (node_states.array() + 1.0) * 0.5;
    return (params.eps1 + params.eps2 * (topo.incidence_norm * active).array()).matrix();
}

PhaseState phase_step(const PhaseState& state, const Vec& node_states, const PhaseTopology& topo,
                      const PhaseParams& params, double dt) {
    if (state.phi.size() != topo.n_links || params.omega0.size() != topo.n_links ||
        params.gamma.size() != topo.n_links)
        throw Error(ErrorKind::IndexMismatch, "phase vector does not match topology");
    const LocalField field = local_mean_field(state, topo);
    const Vec amp = coupling_amplitude(node_states, topo, params);
    const Vec rate =
        params.omega0.array() + amp.array() * (field.psi - state.phi + params.gamma).array().sin();
    PhaseState next;
    next.unwrapped = state.unwrapped + dt * rate;
    next.phi = (state.phi + dt * rate).unaryExpr([](double x) { return wrap_phase(x); });
    next.t = state.t + dt;
    return next;
}

OrderSample global_order(const PhaseState& state) {
    OrderSample o;
    o.t = state.t;
    const auto n = state.phi.size();
    if (n == 0) return o;
    const double re = state.phi.array().cos().sum() / static_cast<double>(n);
    const double im = state.phi.array().sin().sum() / static_cast<double>(n);
    o.R = std::min(1.0, std::hypot(re, im));
    o.mean_phase = wrap_phase(safe_arg(im, re));
    return o;
}

PhaseState forced_phase_step(const PhaseState& state, double g, double dt) {
    PhaseState next;
    const double shift = g * dt;
    next.unwrapped = state.unwrapped.array() + shift;
    next.phi = (state.phi.array() + shift).unaryExpr([](double x) { return wrap_phase(x); });
    next.t = state.t + dt;
    return next;
}

// Isolated link -------------------------------------------------------------
//
// With theta = phi - psi0 the equation is theta' = omega0 - eps sin(theta).
// The half-angle substitution u = tan(theta / 2) turns it into the Riccati
// equation u' = (omega0/2) u^2 - eps u + omega0/2, whose flow is the Moebius
// action of exp(t M) with M = [[-eps/2, omega0/2], [-omega0/2, eps/2]] on
// (sin(theta/2), cos(theta/2)). This is the tan / tanh closed form written so
// that it stays finite through the poles of tan.

double isolated_phase_analytic(double omega0, double eps, double psi0, double phi0, double t) {
    if (omega0 == 0.0 && eps == 0.0) throw Error(ErrorKind::Domain, "omega0 and eps cannot both be zero");
    if (!(t >= 0.0)) throw Error(ErrorKind::Domain, "time must be non-negative");

    const double theta0 = wrap_phase(phi0 - psi0);
    const double base = phi0 - theta0;  // psi0 plus the branch offset of phi0
    const double s2 = 0.25 * (eps * eps - omega0 * omega0);

    // Direction of exp(t M) v without overflowing cosh for large t.
    auto flow_angle = [&](double tt) {
        double c = 1.0;
        double sfac = tt;
        if (s2 > 0.0) {
            const double s = std::sqrt(s2);
            c = 1.0;
            sfac = std::tanh(s * tt) / s;
        } else if (s2 < 0.0) {
            const double nu = std::sqrt(-s2);
            c = std::cos(nu * tt);
            sfac = std::sin(nu * tt) / nu;
        }
        const double v0 = std::sin(0.5 * theta0);
        const double v1 = std::cos(0.5 * theta0);
        const double p = c * v0 + sfac * (-0.5 * eps * v0 + 0.5 * omega0 * v1);
        const double q = c * v1 + sfac * (-0.5 * omega0 * v0 + 0.5 * eps * v1);
        return 2.0 * std::atan2(p, q);
    };

    auto forward_gap = [](double from, double to) {
        double d = std::fmod(to - from, kTwoPi);
        if (d < 0.0) d += kTwoPi;
        if (d > kTwoPi - 1e-9) d = 0.0;
        return d;
    };

    if (s2 < 0.0) {
        // Running solution: theta advances by 2 pi per period, monotonically.
        const double period = kTwoPi / std::sqrt(omega0 * omega0 - eps * eps);
        const double whole = std::floor(t / period);
        const double rem = t - whole * period;
        const double theta_rem = flow_angle(rem);
        const double sign = omega0 > 0.0 ? 1.0 : -1.0;
        const double gap = sign > 0.0 ? forward_gap(theta0, theta_rem) : -forward_gap(theta_rem, theta0);
        return base + theta0 + sign * kTwoPi * whole + gap;
    }

    // Oscillation death (or the marginal case): monotone approach to a fixed
    // point, total travel below one turn.
    const double rate0 = omega0 - eps * std::sin(theta0);
    if (rate0 == 0.0) return phi0;
    const double theta_t = flow_angle(t);
    const double gap = rate0 > 0.0 ? forward_gap(theta0, theta_t) : -forward_gap(theta_t, theta0);
    return base + theta0 + gap;
}

}  // namespace rhythm::phasenet
