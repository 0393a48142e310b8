#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rhythm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

inline constexpr std::string_view kVersion = "0.1.0";

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Error categories. The CLI maps each category onto a distinct exit code.
enum class ErrorKind {
    IntegrationFailure,
    HistoryUnderflow,
    DegenerateTrajectory,
    EmptyLinks,
    Domain,
    Nilpotent,
    NonConvergence,
    IndexMismatch,
    DimensionMismatch,
    InsufficientData,
    SingularSystem,
    Divergence,
    NoEquilibrium,
    WindowTooLarge,
    TooShort,
    ConfigValidation,
    BundleIncompatible,
    UnknownSession,
    InvalidCommand,
    Io,
    PortInUse,
};

std::string_view to_string(ErrorKind kind);

/// Process exit code for an error category (0 is success, 1 an unexpected
/// failure, 2 a usage error).
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Wrap an angle into [-pi, pi).
inline double wrap_phase(double x) {
    double w = x - kTwoPi * std::floor((x + kPi) / kTwoPi);
    // floor rounding can land exactly on +pi
    if (w >= kPi) w -= kTwoPi;
    if (w < -kPi) w = -kPi;
    return w;
}

/// Below this modulus a mean of unit phasors counts as zero (cancellation
/// leaves residues around 1e-16).
inline constexpr double kZeroModulus = 1e-12;

/// Argument of a mean phasor with the convention arg(0) = 0.
inline double safe_arg(double im, double re) {
    if (std::hypot(im, re) < kZeroModulus) return 0.0;
    return std::atan2(im, re);
}

/// Seeded generator used everywhere randomness is needed. Conversions to
/// doubles and bounded integers are done by hand so streams are identical
/// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform on the closed interval [lo, hi].
    double uniform_closed(double lo, double hi) {
        double u = static_cast<double>(engine_() >> 11) / static_cast<double>((1ULL << 53) - 1);
        return lo + (hi - lo) * u;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Lemire-style rejection keeps the draw unbiased.
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Derive an independent sub-seed from a master seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace rhythm
