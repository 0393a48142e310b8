#include "rhythm/phasenet.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace rhythm;
using namespace rhythm::phasenet;
using Catch::Approx;

namespace {

std::vector<Link> ring_links(int n_links, int n_nodes) {
    std::vector<Link> links;
    for (int k = 0; k < n_links; ++k) links.push_back({k % n_nodes, (k * 7 + 3) % n_nodes});
    return links;
}

SpMat binary(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<Triplet> t;
    for (auto [i, j] : edges) t.emplace_back(i, j, 1.0);
    SpMat m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

PhaseParams params(int n, double omega0, double eps1, double eps2) {
    PhaseParams p;
    p.omega0 = Vec::Constant(n, omega0);
    p.gamma = Vec::Zero(n);
    p.eps1 = eps1;
    p.eps2 = eps2;
    return p;
}

// Single link with no phase neighbours: psi is 0, so the link obeys
// dphi/dt = omega0 + eps1 sin(-phi).
PhaseTopology isolated_topology() { return make_phase_topology({{0, 0}}, 1, SpMat(1, 1)); }

// Fine-step Euler of dphi/dt = omega0 + eps sin(psi0 - phi), written
// independently of phase_step.
double euler_isolated(double omega0, double eps, double psi0, double phi0, double t_end, double h,
                      std::vector<double>* samples = nullptr, long every = 0) {
    double phi = phi0;
    const long steps = std::lround(t_end / h);
    for (long i = 0; i < steps; ++i) {
        if (samples && i % every == 0) samples->push_back(phi);
        phi += h * (omega0 + eps * std::sin(psi0 - phi));
    }
    if (samples) samples->push_back(phi);
    return phi;
}

}  // namespace

TEST_CASE("full phase coupling normalizes rows to one half", "[phasenet]") {
    const auto topo = build_phase_topology(ring_links(3, 3), 3, 1.0, 1);
    for (int i = 0; i < 3; ++i) {
        int count = 0;
        for (SpMat::InnerIterator it(topo.phase_adj_norm, i); it; ++it) {
            CHECK(it.value() == 0.5);
            CHECK(it.col() != i);
            ++count;
        }
        CHECK(count == 2);
    }
}

TEST_CASE("incidence rows sum to one and phase adjacency is binary", "[phasenet]") {
    const auto topo = build_phase_topology(ring_links(60, 15), 15, 0.2, 9);
    const Vec ones = Vec::Ones(topo.n_nodes);
    const Vec sums = topo.incidence_norm * ones;
    for (Eigen::Index i = 0; i < sums.size(); ++i) CHECK(sums[i] == Approx(1.0).epsilon(1e-15));
    for (int k = 0; k < topo.phase_adj.outerSize(); ++k)
        for (SpMat::InnerIterator it(topo.phase_adj, k); it; ++it) {
            CHECK(it.value() == 1.0);
            CHECK(it.row() != it.col());
        }
    // self-loop touches one node
    const auto self = make_phase_topology({{2, 2}}, 4, SpMat(1, 1));
    CHECK(self.incidence.nonZeros() == 1);
}

TEST_CASE("phase adjacency density matches a binomial draw", "[phasenet]") {
    const auto topo = build_phase_topology(ring_links(100, 20), 20, 0.1, 2024);
    const double n = 9900, p = 0.1;
    const double mean = n * p, sd = std::sqrt(n * p * (1 - p));
    const auto nnz = static_cast<double>(topo.phase_adj.nonZeros());
    CHECK(std::abs(nnz - mean) <= 3 * sd);
    CHECK(topo.phase_adj.nonZeros() == 946);  // golden count for seed 2024
}

TEST_CASE("empty link list is rejected", "[phasenet]") {
    try {
        build_phase_topology({}, 3, 0.5, 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyLinks);
    }
}

TEST_CASE("local mean field examples", "[phasenet]") {
    // link 0 listens to link 1; link 2 listens to links 0 and 1
    const auto topo = make_phase_topology(ring_links(3, 3), 3, binary(3, {{0, 1}, {2, 0}, {2, 1}, {1, 0}}));
    SECTION("single neighbour") {
        const auto f = local_mean_field(phase_state_from(Vec::Map(std::vector<double>{0.0, 1.2, 0.0}.data(), 3)), topo);
        CHECK(f.r[0] == Approx(1.0));
        CHECK(f.psi[0] == Approx(1.2));
    }
    SECTION("antipodal neighbours cancel") {
        const auto f = local_mean_field(phase_state_from(Vec::Map(std::vector<double>{0.0, -kPi, 0.3}.data(), 3)), topo);
        CHECK(f.r[2] == Approx(0.0).margin(1e-15));
        CHECK(f.psi[2] == 0.0);
    }
    SECTION("quarter-turn neighbours") {
        const auto f = local_mean_field(phase_state_from(Vec::Map(std::vector<double>{0.0, kPi / 2, 0.3}.data(), 3)), topo);
        CHECK(f.r[2] == Approx(std::sqrt(2.0) / 2));
        CHECK(f.psi[2] == Approx(kPi / 4));
    }
}

TEST_CASE("phase step without coupling is pure drift", "[phasenet]") {
    const auto topo = build_phase_topology(ring_links(20, 6), 6, 0.5, 4);
    const auto p_off = params(20, 0.3, 0.0, 0.0);
    const auto s = random_phase_state(20, 8);
    const Vec nodes = Vec::Constant(6, 0.4);
    const auto next = phase_step(s, nodes, topo, p_off, 0.5);
    for (int i = 0; i < 20; ++i) CHECK(next.phi[i] == Approx(wrap_phase(s.phi[i] + 0.15)).margin(1e-15));

    // eps1 = 0 and every node at -1 switches the coupling off too
    const auto p_gated = params(20, 0.3, 0.0, 2.0);
    const auto gated = phase_step(s, Vec::Constant(6, -1.0), topo, p_gated, 0.5);
    for (int i = 0; i < 20; ++i) CHECK(gated.phi[i] == Approx(wrap_phase(s.phi[i] + 0.15)).margin(1e-15));
}

TEST_CASE("three-link chain golden euler step", "[phasenet]") {
    const auto topo = make_phase_topology(ring_links(3, 3), 3, binary(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}}));
    const auto p = params(3, 0.0, 0.5, 0.0);
    const auto s = phase_state_from(Vec::Map(std::vector<double>{0.0, kPi / 2, kPi - 1e-15}.data(), 3));
    const auto next = phase_step(s, Vec::Zero(3), topo, p, 0.01);
    // worked by hand: ends see psi = pi/2, the middle sees an antipodal pair (psi = 0)
    const double golden[3] = {0.005, 1.5657963267948966, 3.1365926535897921};
    for (int i = 0; i < 3; ++i) CHECK(next.phi[i] == Approx(golden[i]).margin(1e-12));
    CHECK(next.t == Approx(0.01));
}

TEST_CASE("global order examples", "[phasenet]") {
    const auto all_zero = global_order(phase_state_from(Vec::Zero(5)));
    CHECK(all_zero.R == 1.0);
    CHECK(all_zero.mean_phase == 0.0);

    const auto tri = global_order(phase_state_from(Vec::Map(std::vector<double>{0, 2 * kPi / 3, -2 * kPi / 3}.data(), 3)));
    CHECK(tri.R == Approx(0.0).margin(1e-15));
    CHECK(tri.mean_phase == 0.0);

    const auto quarter = global_order(phase_state_from(Vec::Map(std::vector<double>{0, kPi / 2}.data(), 2)));
    CHECK(quarter.R == Approx(std::sqrt(2.0) / 2));
    CHECK(quarter.mean_phase == Approx(kPi / 4));
}

TEST_CASE("forced steps shift every phase uniformly", "[phasenet]") {
    const auto s = random_phase_state(50, 3);
    const auto same = forced_phase_step(s, 0.0, 1.0);
    CHECK(same.phi == s.phi);

    const auto one = forced_phase_step(s, 0.7, 0.1);
    for (int i = 0; i < 50; ++i) CHECK(one.phi[i] == Approx(wrap_phase(s.phi[i] + 0.07)).margin(1e-14));
}

TEST_CASE("uniform forcing preserves R and pairwise differences", "[phasenet][property]") {
    const auto s0 = random_phase_state(400, 17);
    const auto o0 = global_order(s0);
    auto s = s0;
    double max_dr = 0.0;
    for (int k = 0; k < 10000; ++k) {
        s = forced_phase_step(s, 0.013, 1.0);
        max_dr = std::max(max_dr, std::abs(global_order(s).R - o0.R));
    }
    CHECK(max_dr <= 1e-9);
    for (int i = 1; i < 400; ++i) {
        const double d0 = wrap_phase(s0.phi[i] - s0.phi[0]);
        const double d1 = wrap_phase(s.phi[i] - s.phi[0]);
        CHECK(std::abs(wrap_phase(d1 - d0)) <= 1e-9);
    }
    CHECK(global_order(s).mean_phase == Approx(wrap_phase(o0.mean_phase + 130.0)).margin(1e-8));
}

TEST_CASE("phases, local and global order stay in range", "[phasenet][property]") {
    const int n_links = 120, n_nodes = 30;
    const auto topo = build_phase_topology(ring_links(n_links, n_nodes), n_nodes, 0.05, 5);
    auto p = params(n_links, 0.0, 0.1, 0.9);
    Rng rng(99);
    for (int i = 0; i < n_links; ++i) p.omega0[i] = rng.uniform(-0.5, 0.5), p.gamma[i] = rng.uniform(-1, 1);
    auto s = random_phase_state(n_links, 6);
    for (int step = 0; step < 2000; ++step) {
        Vec nodes(n_nodes);
        for (int i = 0; i < n_nodes; ++i) nodes[i] = rng.uniform(-0.999, 0.999);
        const Vec amp = coupling_amplitude(nodes, topo, p);
        CHECK(amp.minCoeff() >= p.eps1 - 1e-15);
        CHECK(amp.maxCoeff() <= p.eps1 + p.eps2 + 1e-15);
        s = phase_step(s, nodes, topo, p, 0.3);
        CHECK(s.phi.minCoeff() >= -kPi);
        CHECK(s.phi.maxCoeff() < kPi);
        const auto f = local_mean_field(s, topo);
        CHECK(f.r.minCoeff() >= 0.0);
        CHECK(f.r.maxCoeff() <= 1.0);
        const auto o = global_order(s);
        CHECK(o.R >= 0.0);
        CHECK(o.R <= 1.0);
    }
}

TEST_CASE("synchronized state is a fixed point of the coupling", "[phasenet][property]") {
    const auto topo = build_phase_topology(ring_links(80, 20), 20, 0.1, 12);
    const auto p = params(80, 0.02, 0.2, 0.6);
    auto s = phase_state_from(Vec::Constant(80, 1.1));
    for (int k = 0; k < 500; ++k) s = phase_step(s, Vec::Constant(20, 0.3), topo, p, 1.0);
    CHECK(global_order(s).R == Approx(1.0).margin(1e-12));
}

TEST_CASE("frequency assignment matches the density exactly", "[phasenet]") {
    const auto p = make_phase_params(101, 0.05, 0.5, 0.0, 1.0, 3);
    int active = 0;
    for (int i = 0; i < 101; ++i) {
        CHECK((p.omega0[i] == 0.0 || p.omega0[i] == 0.05));
        active += p.omega0[i] != 0.0;
    }
    CHECK(active == 51);  // round(50.5) rounds half away from zero
    CHECK_THROWS_AS(make_phase_params(10, 0.05, 0.0, 0, 1, 1), Error);
    CHECK_THROWS_AS(make_phase_params(10, 0.05, 1.5, 0, 1, 1), Error);
}

TEST_CASE("oscillation death and winding for an isolated link", "[phasenet][property]") {
    const auto topo = isolated_topology();
    SECTION("drift below coupling stops") {
        const auto p = params(1, 0.3, 0.5, 0.0);
        auto s = phase_state_from(Vec::Constant(1, -2.5));
        double rate = 0.0;
        for (int k = 0; k < 20000; ++k) {
            const auto next = phase_step(s, Vec::Zero(1), topo, p, 0.01);
            rate = std::abs(next.unwrapped[0] - s.unwrapped[0]) / 0.01;
            s = next;
        }
        CHECK(rate < 1e-6);
        CHECK(s.phi[0] == Approx(std::asin(0.6)).margin(1e-6));
    }
    SECTION("drift above coupling winds") {
        const auto p = params(1, 0.6, 0.5, 0.0);
        auto s = phase_state_from(Vec::Constant(1, 0.0));
        double prev = s.unwrapped[0];
        bool monotone = true;
        for (int k = 0; k < 200000; ++k) {
            s = phase_step(s, Vec::Zero(1), topo, p, 0.01);
            monotone &= s.unwrapped[0] > prev;
            prev = s.unwrapped[0];
        }
        CHECK(monotone);
        CHECK(s.unwrapped[0] > 100.0);
    }
}

TEST_CASE("closed form special cases", "[phasenet]") {
    for (double t : {0.0, 1.0, 50.0}) CHECK(isolated_phase_analytic(0.0, 1.0, 0.4, 0.4, t) == Approx(0.4).margin(1e-12));
    CHECK(isolated_phase_analytic(0.5, 1.0, 0.0, -1.0, 200.0) == Approx(kPi / 6).margin(1e-9));
    CHECK(isolated_phase_analytic(0.3, 1.0, 0.7, -2.0, 0.0) == Approx(-2.0).margin(1e-12));
    try {
        isolated_phase_analytic(0.0, 0.0, 0.0, 0.0, 1.0);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Domain);
    }
}

TEST_CASE("closed form matches fine euler for the documented case", "[phasenet]") {
    std::vector<double> ref;
    euler_isolated(0.3, 1.0, 0.7, -2.0, 50.0, 1e-4, &ref, 1000);
    double sup = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
        sup = std::max(sup, std::abs(isolated_phase_analytic(0.3, 1.0, 0.7, -2.0, 0.1 * static_cast<double>(i)) - ref[i]));
    CHECK(sup <= 1e-3);
}
