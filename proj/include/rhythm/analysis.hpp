#pragma once

// Post-processing of order-parameter series and trajectories: plateau-shift
// detection, attractor classification and a few series statistics.

#include "rhythm/common.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace rhythm::analysis {

struct ChangePoint {
    long frame = 0;  // frame at which the alarm fired
    double R_before = 0.0;
    double R_after = 0.0;
};

struct ChangeReport {
    std::vector<ChangePoint> change_points;
    // One entry per supplied ground-truth switch: frames from the switch to the
    // first alarm at or after it (and before the next switch), if any.
    std::vector<std::optional<long>> latency_frames;
};

struct ShiftDetectorConfig {
    long window = 100;
    double k_sigma = 4.0;
    double min_std = 1e-4;  // floor on the plateau spread
    long start = 0;         // ignore samples before this index
    long settle = -1;       // frames skipped after an alarm; -1 means `window`
};

/// Alarm when the rolling mean of the last `window` samples leaves the
/// [mean +- k * std] band of the plateau accumulated since the previous alarm.
ChangeReport detect_equilibrium_shift(const std::vector<double>& series, const ShiftDetectorConfig& cfg,
                                      const std::vector<long>& true_switches = {});

enum class AttractorClass { Dead, Periodic, Chaotic };

std::string_view to_string(AttractorClass c);

struct ClassifierConfig {
    long min_frames = 4000;
    long window = 4000;              // trailing frames examined
    double dead_variance = 1e-8;
    double periodic_correlation = 0.98;
    double lyapunov_threshold = 0.0;
};

struct ClassifierDiagnostics {
    double trailing_variance = 0.0;
    double best_return_correlation = 0.0;
    long best_return_lag = 0;
    double lyapunov_proxy = 0.0;
};

/// Dead / Periodic / Chaotic from the trailing window of a trajectory
/// (rows are frames).
AttractorClass classify_attractor(const Mat& frames, const ClassifierConfig& cfg = {},
                                  ClassifierDiagnostics* diag = nullptr);

/// Largest-Lyapunov proxy per frame: slope of the mean log separation of
/// initially nearest neighbours (Rosenstein style).
double lyapunov_proxy(const Mat& points, long theiler, long horizon);

/// Delay embedding of a scalar series.
Mat delay_embed(const Vec& x, int dim, int lag);

double pearson(const Vec& a, const Vec& b);

/// Centred moving average; the window shrinks at the ends.
Vec moving_average(const Vec& x, long window);

struct PlateauStats {
    double mean = 0.0;
    double stddev = 0.0;
    long count = 0;
};

PlateauStats plateau_stats(const std::vector<double>& series, long begin, long end);

/// Frame after which a Lorenz trajectory never switches lobes again: the last
/// sign change of x. Returns nullopt when x never changes sign after `from`.
std::optional<long> last_lobe_switch(const Mat& frames, long from = 0);

/// First frame at or after `from` from which a Lorenz trajectory stays closer
/// to one of the fixed points C+- (for the given rho, beta) than it ever came
/// during the reference segment [ref_begin, ref_end). nullopt if it never
/// settles.
std::optional<long> lorenz_collapse_onset(const Mat& frames, double rho, double beta, long ref_begin, long ref_end,
                                          long from);

}  // namespace rhythm::analysis
