#pragma once

// On-disk formats: sparse triplet text, little-endian binary matrices, the
// order-parameter CSV and the model bundle directory.

#include "rhythm/common.hpp"
#include "rhythm/dynsys.hpp"
#include "rhythm/learner.hpp"
#include "rhythm/phasenet.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace rhythm::io {

namespace fs = std::filesystem;

/// Header line "rows cols nnz", then one "row col value" line per nonzero in
/// row-major storage order. Values use 17 significant digits.
void write_triplets(std::ostream& os, const SpMat& m);
SpMat read_triplets(std::istream& is);
void save_triplets(const fs::path& path, const SpMat& m);
SpMat load_triplets(const fs::path& path);

/// 8-byte magic "RHYMAT01", uint64 rows, uint64 cols, then rows*cols
/// IEEE-754 doubles in row-major order. Everything is little-endian.
void write_binary(std::ostream& os, const Mat& m);
Mat read_binary(std::istream& is);
void save_binary(const fs::path& path, const Mat& m);
Mat load_binary(const fs::path& path);

/// "t,R,mean_phase" with one row per sample.
void write_order_csv(std::ostream& os, const std::vector<phasenet::OrderSample>& samples);
void save_order_csv(const fs::path& path, const std::vector<phasenet::OrderSample>& samples);

void save_trajectory_csv(const fs::path& path, const dynsys::Trajectory& traj);

/// Everything needed to rebuild a trained twin, plus provenance.
struct BundleInfo {
    dynsys::SystemSpec system;
    std::vector<double> state_lambdas;  // parameter values of the training states
    std::uint64_t seed = 0;
    double phase_density = 0.0;
    learner::TrainConfig train;
    double frame_dt = 1.0;  // time between recorded input frames
    dynsys::SimulationConfig simulation;
};

struct ModelBundle {
    learner::Model model;
    reservoir::ReadoutMatrix readout;
    phasenet::PhaseState phases;  // phase state at the end of training
    BundleInfo info;
};

inline constexpr int kBundleFormat = 1;

/// Writes manifest.json next to the matrix files. Creates `dir` if needed.
void save_bundle(const fs::path& dir, const ModelBundle& bundle);

/// Throws BundleIncompatible when the manifest is missing, unparsable, of a
/// different format version, or disagrees with the matrix files.
ModelBundle load_bundle(const fs::path& dir);

/// Write a whole string to a file, throwing Io on failure.
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace rhythm::io
