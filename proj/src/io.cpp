#include "rhythm/io.hpp"

#include "rhythm/config.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace rhythm::io {

using config::json;

namespace {

constexpr char kMagic[8] = {'R', 'H', 'Y', 'M', 'A', 'T', '0', '1'};

template <typename T>
void put_le(std::ostream& os, T value) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    os.write(reinterpret_cast<const char*>(&bits), 8);
}

template <typename T>
T get_le(std::istream& is) {
    static_assert(sizeof(T) == 8);
    std::uint64_t bits = 0;
    if (!is.read(reinterpret_cast<char*>(&bits), 8)) throw Error(ErrorKind::Io, "truncated binary matrix");
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, mode);
    if (!os) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
    return os;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream is(path, mode);
    if (!is) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    return is;
}

void finish(std::ostream& os, const fs::path& path) {
    os.flush();
    if (!os) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

Mat as_column(const Vec& v) { return Mat(v); }

Vec to_vec(const Mat& m, const char* what) {
    if (m.cols() != 1) throw Error(ErrorKind::BundleIncompatible, std::string(what) + " must be a column");
    return m.col(0);
}

}  // namespace

// Sparse triplets --------------------------------------------------------------

void write_triplets(std::ostream& os, const SpMat& m) {
    os << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n' << std::setprecision(17);
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
        for (SpMat::InnerIterator it(m, r); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

SpMat read_triplets(std::istream& is) {
    long rows = 0, cols = 0, nnz = 0;
    if (!(is >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
        throw Error(ErrorKind::Io, "bad sparse matrix header");
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(nnz));
    for (long k = 0; k < nnz; ++k) {
        long r = 0, c = 0;
        double v = 0.0;
        if (!(is >> r >> c >> v)) throw Error(ErrorKind::Io, "sparse matrix ended after " + std::to_string(k) + " entries");
        if (r < 0 || r >= rows || c < 0 || c >= cols) throw Error(ErrorKind::Io, "sparse entry out of range");
        trips.emplace_back(r, c, v);
    }
    SpMat m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

void save_triplets(const fs::path& path, const SpMat& m) {
    auto os = open_out(path);
    write_triplets(os, m);
    finish(os, path);
}

SpMat load_triplets(const fs::path& path) {
    auto is = open_in(path);
    return read_triplets(is);
}

// Binary matrices --------------------------------------------------------------

void write_binary(std::ostream& os, const Mat& m) {
    os.write(kMagic, sizeof kMagic);
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<double>(os, m(r, c));
}

Mat read_binary(std::istream& is) {
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw Error(ErrorKind::Io, "not a binary matrix (bad magic)");
    const auto rows = get_le<std::uint64_t>(is);
    const auto cols = get_le<std::uint64_t>(is);
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw Error(ErrorKind::Io, "implausible matrix dimensions");
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_le<double>(is);
    return m;
}

void save_binary(const fs::path& path, const Mat& m) {
    auto os = open_out(path, std::ios::out | std::ios::binary);
    write_binary(os, m);
    finish(os, path);
}

Mat load_binary(const fs::path& path) {
    auto is = open_in(path, std::ios::in | std::ios::binary);
    return read_binary(is);
}

// CSV ----------------------------------------------------------------------------

void write_order_csv(std::ostream& os, const std::vector<phasenet::OrderSample>& samples) {
    os << "t,R,mean_phase\n" << std::setprecision(17);
    for (const auto& s : samples) os << s.t << ',' << s.R << ',' << s.mean_phase << '\n';
}

void save_order_csv(const fs::path& path, const std::vector<phasenet::OrderSample>& samples) {
    auto os = open_out(path);
    write_order_csv(os, samples);
    finish(os, path);
}

void save_trajectory_csv(const fs::path& path, const dynsys::Trajectory& traj) {
    auto os = open_out(path);
    dynsys::write_csv(os, traj);
    finish(os, path);
}

void write_text(const fs::path& path, const std::string& text) {
    auto os = open_out(path, std::ios::out | std::ios::binary);
    os << text;
    finish(os, path);
}

std::string read_text(const fs::path& path) {
    auto is = open_in(path, std::ios::in | std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Model bundle -------------------------------------------------------------------

void save_bundle(const fs::path& dir, const ModelBundle& b) {
    fs::create_directories(dir);
    const auto& m = b.model;
    save_triplets(dir / "node_adj.txt", m.topo.node_adj);
    save_triplets(dir / "phase_adj.txt", m.phase_topo.phase_adj);
    save_binary(dir / "w_in.bin", m.topo.input_map);
    save_binary(dir / "w_out.bin", b.readout.w_out);
    save_binary(dir / "omega0.bin", as_column(m.phase_params.omega0));
    save_binary(dir / "gamma.bin", as_column(m.phase_params.gamma));
    save_binary(dir / "phases.bin", as_column(b.phases.phi));
    save_binary(dir / "phases_unwrapped.bin", as_column(b.phases.unwrapped));

    auto res = config::to_json(m.params);
    json manifest = {
        {"format", kBundleFormat},
        {"version", std::string(kVersion)},
        {"n_nodes", m.topo.n_nodes()},
        {"n_inputs", m.topo.n_inputs()},
        {"n_links", m.topo.n_links()},
        {"reservoir", res},
        {"phase",
         {{"eps1", m.phase_params.eps1},
          {"eps2", m.phase_params.eps2},
          {"omega0", m.phase_params.omega0_value},
          {"lambda_density", m.phase_params.lambda_density},
          {"phase_density", b.info.phase_density},
          {"step_order", m.order == learner::StepOrder::NodeThenPhase ? "node-then-phase" : "phase-then-node"}}},
        {"phase_dt", m.dt},
        {"phase_time", b.phases.t},
        {"system", config::to_json(b.info.system)},
        {"state_lambdas", b.info.state_lambdas},
        {"seed", b.info.seed},
        {"train", config::to_json(b.info.train)},
        {"frame_dt", b.info.frame_dt},
        {"simulation", config::to_json(b.info.simulation)},
        {"files",
         {"node_adj.txt", "phase_adj.txt", "w_in.bin", "w_out.bin", "omega0.bin", "gamma.bin", "phases.bin",
          "phases_unwrapped.bin"}},
    };
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelBundle load_bundle(const fs::path& dir) {
    auto incompatible = [&](const std::string& why) {
        return Error(ErrorKind::BundleIncompatible, "bundle '" + dir.string() + "': " + why);
    };
    json manifest;
    try {
        manifest = json::parse(read_text(dir / "manifest.json"));
    } catch (const Error& e) {
        throw incompatible(e.what());
    } catch (const json::exception& e) {
        throw incompatible(std::string("manifest is not valid JSON: ") + e.what());
    }

    ModelBundle b;
    try {
        if (!manifest.is_object()) throw incompatible("manifest is not an object");
        if (manifest.at("format").get<int>() != kBundleFormat)
            throw incompatible("format " + manifest.at("format").dump() + " is not supported (expected " +
                               std::to_string(kBundleFormat) + ")");
        auto& m = b.model;
        m.params = config::reservoir_from_json(manifest.at("reservoir"));
        SpMat adj = load_triplets(dir / "node_adj.txt");
        Mat w_in = load_binary(dir / "w_in.bin");
        m.topo = reservoir::make_topology(std::move(adj), std::move(w_in));
        if (m.topo.n_nodes() != manifest.at("n_nodes").get<int>() ||
            m.topo.n_inputs() != manifest.at("n_inputs").get<int>() ||
            m.topo.n_links() != manifest.at("n_links").get<int>())
            throw incompatible("matrix shapes disagree with the manifest");

        const auto& ph = manifest.at("phase");
        m.phase_topo = phasenet::make_phase_topology(m.topo.links, m.topo.n_nodes(), load_triplets(dir / "phase_adj.txt"));
        m.phase_params.eps1 = ph.at("eps1").get<double>();
        m.phase_params.eps2 = ph.at("eps2").get<double>();
        m.phase_params.omega0_value = ph.at("omega0").get<double>();
        m.phase_params.lambda_density = ph.at("lambda_density").get<double>();
        m.phase_params.omega0 = to_vec(load_binary(dir / "omega0.bin"), "omega0");
        m.phase_params.gamma = to_vec(load_binary(dir / "gamma.bin"), "gamma");
        const auto order = ph.at("step_order").get<std::string>();
        if (order == "node-then-phase") {
            m.order = learner::StepOrder::NodeThenPhase;
        } else if (order == "phase-then-node") {
            m.order = learner::StepOrder::PhaseThenNode;
        } else {
            throw incompatible("unknown step order '" + order + "'");
        }
        m.dt = manifest.at("phase_dt").get<double>();

        b.readout.w_out = load_binary(dir / "w_out.bin");
        b.phases.phi = to_vec(load_binary(dir / "phases.bin"), "phases");
        b.phases.unwrapped = to_vec(load_binary(dir / "phases_unwrapped.bin"), "phases");
        b.phases.t = manifest.at("phase_time").get<double>();

        const auto n_links = static_cast<Eigen::Index>(m.topo.n_links());
        if (m.phase_params.omega0.size() != n_links || m.phase_params.gamma.size() != n_links ||
            b.phases.phi.size() != n_links || b.phases.unwrapped.size() != n_links)
            throw incompatible("per-link arrays do not match the link count");
        if (b.readout.w_out.rows() != m.topo.n_inputs() || b.readout.w_out.cols() != m.topo.n_nodes())
            throw incompatible("readout shape does not match the reservoir");

        b.info.system = config::system_from_json(manifest.at("system"));
        b.info.state_lambdas = manifest.at("state_lambdas").get<std::vector<double>>();
        b.info.seed = manifest.at("seed").get<std::uint64_t>();
        b.info.phase_density = ph.at("phase_density").get<double>();
        b.info.train = config::train_from_json(manifest.at("train"));
        b.info.frame_dt = manifest.at("frame_dt").get<double>();
        b.info.simulation = config::simulation_from_json(manifest.at("simulation"),
                                                         dynsys::default_simulation_config(b.info.system.kind));
        if (b.info.system.dim() != m.topo.n_inputs()) throw incompatible("system dimension does not match W_in");
    } catch (const json::exception& e) {
        throw incompatible(std::string("manifest field error: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::BundleIncompatible) throw;
        throw incompatible(e.what());
    }
    return b;
}

}  // namespace rhythm::io
