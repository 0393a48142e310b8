#include "rhythm/experiments.hpp"
#include "rhythm/io.hpp"

#include <catch_amalgamated.hpp>

#include <cstring>
#include <unistd.h>
#include <fstream>
#include <sstream>

using namespace rhythm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("rhythm_io_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

io::ModelBundle small_bundle() {
    experiments::ExperimentConfig cfg;
    cfg.reservoir.n_nodes = 40;
    cfg.reservoir.node_density = 0.1;
    cfg.phase.phase_density = 0.05;
    io::ModelBundle b;
    b.model = experiments::build_model(cfg);
    b.phases = phasenet::random_phase_state(b.model.topo.n_links(), 7);
    b.phases.t = 123.0;
    b.readout.w_out = Mat::Random(3, 40);
    b.info.system = cfg.system;
    b.info.state_lambdas = {0.18, 0.29};
    b.info.seed = cfg.seed;
    b.info.phase_density = cfg.phase.phase_density;
    b.info.train = cfg.train;
    b.info.frame_dt = 0.1;
    b.info.simulation = cfg.simulation;
    return b;
}

}  // namespace

TEST_CASE("sparse triplets round trip exactly", "[io]") {
    Mat d = Mat::Zero(4, 5);
    d(0, 1) = 1.0 / 3.0;
    d(2, 4) = -1e-300;
    d(3, 0) = 12345.678901234567;
    SpMat s = d.sparseView();
    s.makeCompressed();
    std::stringstream ss;
    io::write_triplets(ss, s);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "4 5 3");
    ss.seekg(0);
    const SpMat back = io::read_triplets(ss);
    CHECK(Mat(back) == d);

    std::istringstream truncated("3 3 2\n0 0 1.0\n");
    CHECK_THROWS_AS(io::read_triplets(truncated), Error);
    std::istringstream out_of_range("2 2 1\n5 0 1.0\n");
    CHECK_THROWS_AS(io::read_triplets(out_of_range), Error);
}

TEST_CASE("binary matrices round trip bit for bit", "[io]") {
    Mat m(2, 3);
    m << 1.0, -0.0, 3.5, 1e-310, std::numeric_limits<double>::max(), -2.25;
    std::stringstream ss;
    io::write_binary(ss, m);
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() == 8 + 16 + 6 * 8);
    CHECK(bytes.substr(0, 8) == "RHYMAT01");
    // row-major: the second stored double is m(0, 1)
    double second;
    std::memcpy(&second, bytes.data() + 24 + 8, 8);
    CHECK(std::signbit(second));
    const Mat back = io::read_binary(ss);
    CHECK(std::memcmp(back.data(), m.data(), sizeof(double) * 6) == 0);

    std::istringstream bad("NOTAMAT!xxxxxxxxxxxxxxxx");
    CHECK_THROWS_AS(io::read_binary(bad), Error);
    std::istringstream short_data(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(io::read_binary(short_data), Error);
}

TEST_CASE("order csv layout", "[io]") {
    std::vector<phasenet::OrderSample> xs(2);
    xs[0] = {0.5, -1.25, 0.0};
    xs[1] = {0.75, 2.5, 1.0};
    std::ostringstream os;
    io::write_order_csv(os, xs);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,R,mean_phase");
    std::getline(is, line);
    CHECK(line.rfind("0,0.5,-1.25", 0) == 0);
}

TEST_CASE("bundle round trip restores an identical twin", "[io]") {
    const auto dir = scratch_dir("bundle");
    const auto b = small_bundle();
    io::save_bundle(dir, b);
    const auto back = io::load_bundle(dir);

    CHECK(Mat(back.model.topo.node_adj) == Mat(b.model.topo.node_adj));
    CHECK(back.model.topo.input_map == b.model.topo.input_map);
    CHECK(back.readout.w_out == b.readout.w_out);
    CHECK(back.phases.phi == b.phases.phi);
    CHECK(back.phases.t == b.phases.t);
    CHECK(back.model.phase_params.omega0 == b.model.phase_params.omega0);
    CHECK(back.info.state_lambdas == b.info.state_lambdas);

    learner::Twin x(b.model, b.phases), y(back.model, back.phases);
    for (int t = 0; t < 200; ++t) {
        const Vec u = Vec::Constant(3, std::sin(0.1 * t));
        x.step(u, learner::PhaseMode::Coupled);
        y.step(u, learner::PhaseMode::Coupled);
    }
    CHECK(x.nodes().n == y.nodes().n);
    CHECK(x.phases().phi == y.phases().phi);
    fs::remove_all(dir);
}

TEST_CASE("damaged bundles are rejected as incompatible", "[io]") {
    const auto b = small_bundle();
    auto expect_incompatible = [](const fs::path& dir) {
        try {
            io::load_bundle(dir);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::BundleIncompatible);
        }
    };

    const auto missing = scratch_dir("missing");
    expect_incompatible(missing);

    const auto garbled = scratch_dir("garbled");
    io::save_bundle(garbled, b);
    io::write_text(garbled / "manifest.json", "{ not json");
    expect_incompatible(garbled);

    const auto version = scratch_dir("version");
    io::save_bundle(version, b);
    auto manifest = nlohmann::json::parse(io::read_text(version / "manifest.json"));
    manifest["format"] = io::kBundleFormat + 1;
    io::write_text(version / "manifest.json", manifest.dump());
    expect_incompatible(version);

    const auto shape = scratch_dir("shape");
    io::save_bundle(shape, b);
    manifest = nlohmann::json::parse(io::read_text(shape / "manifest.json"));
    manifest["n_nodes"] = 41;
    io::write_text(shape / "manifest.json", manifest.dump());
    expect_incompatible(shape);

    const auto readout = scratch_dir("readout");
    io::save_bundle(readout, b);
    io::save_binary(readout / "w_out.bin", Mat::Zero(3, 39));
    expect_incompatible(readout);

    for (const auto& d : {missing, garbled, version, shape, readout}) fs::remove_all(d);
}
