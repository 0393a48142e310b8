#include "rhythm/analysis.hpp"

#include "rhythm/dynsys.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rhythm::analysis {

// Plateau shifts ---------------------------------------------------------------

ChangeReport detect_equilibrium_shift(const std::vector<double>& series, const ShiftDetectorConfig& cfg,
                                      const std::vector<long>& true_switches) {
    const auto n = static_cast<long>(series.size());
    if (cfg.window < 1) throw Error(ErrorKind::WindowTooLarge, "window must be positive");
    if (n - cfg.start <= 2 * cfg.window)
        throw Error(ErrorKind::WindowTooLarge, "series shorter than two windows");
    const long settle = cfg.settle < 0 ? cfg.window : cfg.settle;

    ChangeReport report;
    long ref_start = cfg.start;
    // running sums over the reference plateau [ref_start, ref_end)
    double ref_sum = 0.0;
    double ref_sq = 0.0;
    long ref_end = ref_start;
    double roll_sum = 0.0;
    bool pending_after = false;

    auto extend_ref = [&](long to) {
        for (; ref_end < to; ++ref_end) {
            ref_sum += series[static_cast<std::size_t>(ref_end)];
            ref_sq += series[static_cast<std::size_t>(ref_end)] * series[static_cast<std::size_t>(ref_end)];
        }
    };

    long t = ref_start + 2 * cfg.window - 1;
    // rolling window (t - window, t]
    for (long i = t - cfg.window + 1; i <= t && i < n; ++i) roll_sum += series[static_cast<std::size_t>(i)];
    while (t < n) {
        extend_ref(t - cfg.window + 1);
        const auto ref_n = static_cast<double>(ref_end - ref_start);
        const double ref_mean = ref_sum / ref_n;
        const double ref_var = std::max(0.0, ref_sq / ref_n - ref_mean * ref_mean);
        const double band = cfg.k_sigma * std::max(std::sqrt(ref_var), cfg.min_std);
        const double roll_mean = roll_sum / static_cast<double>(cfg.window);

        if (pending_after && ref_end - ref_start >= cfg.window) {
            report.change_points.back().R_after = ref_mean;
            pending_after = false;
        }

        if (std::abs(roll_mean - ref_mean) > band) {
            ChangePoint cp;
            cp.frame = t;
            cp.R_before = ref_mean;
            report.change_points.push_back(cp);
            pending_after = true;
            ref_start = t + 1 + settle;
            ref_end = ref_start;
            ref_sum = 0.0;
            ref_sq = 0.0;
            const long next_t = ref_start + 2 * cfg.window - 1;
            if (next_t >= n) break;
            roll_sum = 0.0;
            for (long i = next_t - cfg.window + 1; i <= next_t; ++i) roll_sum += series[static_cast<std::size_t>(i)];
            t = next_t;
            continue;
        }
        ++t;
        if (t < n) {
            roll_sum += series[static_cast<std::size_t>(t)];
            roll_sum -= series[static_cast<std::size_t>(t - cfg.window)];
        }
    }
    if (pending_after) {
        // plateau after the last alarm was too short for a full reference
        const long from = std::min(report.change_points.back().frame + 1, n - 1);
        double s = 0.0;
        for (long i = from; i < n; ++i) s += series[static_cast<std::size_t>(i)];
        report.change_points.back().R_after = s / static_cast<double>(n - from);
    }

    for (std::size_t k = 0; k < true_switches.size(); ++k) {
        const long sw = true_switches[k];
        const long next = k + 1 < true_switches.size() ? true_switches[k + 1] : std::numeric_limits<long>::max();
        std::optional<long> latency;
        for (const auto& cp : report.change_points) {
            if (cp.frame >= sw && cp.frame < next) {
                latency = cp.frame - sw;
                break;
            }
        }
        report.latency_frames.push_back(latency);
    }
    return report;
}

// Attractor classification -----------------------------------------------------

std::string_view to_string(AttractorClass c) {
    switch (c) {
        case AttractorClass::Dead: return "dead";
        case AttractorClass::Periodic: return "periodic";
        case AttractorClass::Chaotic: return "chaotic";
    }
    return "unknown";
}

Mat delay_embed(const Vec& x, int dim, int lag) {
    const long rows = x.size() - static_cast<long>(dim - 1) * lag;
    if (rows <= 0) throw Error(ErrorKind::TooShort, "series too short for the embedding");
    Mat out(rows, dim);
    for (long i = 0; i < rows; ++i)
        for (int d = 0; d < dim; ++d) out(i, d) = x[i + static_cast<long>(d) * lag];
    return out;
}

double lyapunov_proxy(const Mat& points, long theiler, long horizon) {
    const long n = points.rows();
    const long usable = n - horizon;
    if (usable <= theiler + 1) throw Error(ErrorKind::TooShort, "not enough points for the divergence estimate");
    const long stride = std::max(1L, usable / 500);

    std::vector<double> mean_log(static_cast<std::size_t>(horizon + 1), 0.0);
    std::vector<long> counts(static_cast<std::size_t>(horizon + 1), 0);
    for (long i = 0; i < usable; i += stride) {
        long best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (long j = 0; j < usable; ++j) {
            if (std::abs(i - j) <= theiler) continue;
            const double d = (points.row(i) - points.row(j)).squaredNorm();
            if (d > 0.0 && d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best < 0) continue;
        for (long k = 0; k <= horizon; ++k) {
            const double d = (points.row(i + k) - points.row(best + k)).norm();
            if (d <= 0.0) continue;
            mean_log[static_cast<std::size_t>(k)] += std::log(d);
            ++counts[static_cast<std::size_t>(k)];
        }
    }
    // least-squares slope of the mean log separation
    double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
    for (long k = 0; k <= horizon; ++k) {
        if (counts[static_cast<std::size_t>(k)] == 0) continue;
        const double y = mean_log[static_cast<std::size_t>(k)] / static_cast<double>(counts[static_cast<std::size_t>(k)]);
        const auto x = static_cast<double>(k);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        m += 1.0;
    }
    const double den = m * sxx - sx * sx;
    return den > 0.0 ? (m * sxy - sx * sy) / den : 0.0;
}

AttractorClass classify_attractor(const Mat& frames, const ClassifierConfig& cfg, ClassifierDiagnostics* diag) {
    if (frames.rows() < cfg.min_frames)
        throw Error(ErrorKind::TooShort, "classification needs at least " + std::to_string(cfg.min_frames) + " frames");
    const long w = std::min<long>(cfg.window, frames.rows());
    const Mat tail = frames.bottomRows(w);
    const Eigen::RowVectorXd mean = tail.colwise().mean();
    const Mat centred = tail.rowwise() - mean;

    ClassifierDiagnostics d;
    const long dead_w = std::min<long>(w, 1000);
    {
        const Mat last = frames.bottomRows(dead_w);
        const Eigen::RowVectorXd m = last.colwise().mean();
        d.trailing_variance = (last.rowwise() - m).squaredNorm() / static_cast<double>(dead_w);
    }
    auto finish = [&](AttractorClass c) {
        if (diag) *diag = d;
        return c;
    };
    if (d.trailing_variance < cfg.dead_variance) return finish(AttractorClass::Dead);

    // Return correlation: Pearson correlation between the window and itself
    // shifted by `lag`, pooled over channels. A periodic orbit returns close to
    // itself after one period.
    auto corr_at = [&](long lag) {
        const long len = w - lag;
        const auto a = centred.topRows(len);
        const auto b = centred.bottomRows(len);
        const Eigen::RowVectorXd ma = a.colwise().mean();
        const Eigen::RowVectorXd mb = b.colwise().mean();
        const Mat ac = a.rowwise() - ma;
        const Mat bc = b.rowwise() - mb;
        const double den = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
        return den > 0.0 ? (ac.array() * bc.array()).sum() / den : 0.0;
    };
    bool decorrelated = false;
    long first_low = 0;
    for (long lag = 1; lag < w / 2; ++lag) {
        const double c = corr_at(lag);
        if (!decorrelated) {
            if (c < 0.5) {
                decorrelated = true;
                first_low = lag;
            }
            continue;
        }
        if (c > d.best_return_correlation) {
            d.best_return_correlation = c;
            d.best_return_lag = lag;
        }
    }
    if (decorrelated && d.best_return_correlation > cfg.periodic_correlation) return finish(AttractorClass::Periodic);

    // divergence of nearest neighbours in the state (or delay) space
    Mat pts;
    long theiler = std::max(10L, 2 * first_low);
    if (frames.cols() == 1) {
        const int lag = static_cast<int>(std::max(1L, first_low / 2));
        pts = delay_embed(tail.col(0), 4, lag);
    } else {
        pts = tail;
    }
    const long horizon = std::max(20L, std::min(4 * first_low, w / 8));
    theiler = std::min(theiler, pts.rows() / 4);
    d.lyapunov_proxy = lyapunov_proxy(pts, theiler, horizon);
    if (d.lyapunov_proxy > cfg.lyapunov_threshold) return finish(AttractorClass::Chaotic);
    return finish(AttractorClass::Periodic);
}

// Series statistics --------------------------------------------------------------

double pearson(const Vec& a, const Vec& b) {
    if (a.size() != b.size() || a.size() < 2) throw Error(ErrorKind::DimensionMismatch, "pearson needs equal lengths");
    const Vec ac = a.array() - a.mean();
    const Vec bc = b.array() - b.mean();
    const double den = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
    return den > 0.0 ? ac.dot(bc) / den : 0.0;
}

Vec moving_average(const Vec& x, long window) {
    const long n = x.size();
    Vec out(n);
    if (n == 0) return out;
    Vec prefix(n + 1);
    prefix[0] = 0.0;
    for (long i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
    const long half = std::max(0L, window / 2);
    for (long i = 0; i < n; ++i) {
        const long lo = std::max(0L, i - half);
        const long hi = std::min(n, i - half + std::max(1L, window));
        out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

PlateauStats plateau_stats(const std::vector<double>& series, long begin, long end) {
    PlateauStats s;
    begin = std::max(0L, begin);
    end = std::min(static_cast<long>(series.size()), end);
    if (end <= begin) return s;
    s.count = end - begin;
    double sum = 0.0;
    for (long i = begin; i < end; ++i) sum += series[static_cast<std::size_t>(i)];
    s.mean = sum / static_cast<double>(s.count);
    double var = 0.0;
    for (long i = begin; i < end; ++i) var += (series[static_cast<std::size_t>(i)] - s.mean) * (series[static_cast<std::size_t>(i)] - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(s.count));
    return s;
}

std::optional<long> last_lobe_switch(const Mat& frames, long from) {
    std::optional<long> last;
    for (long i = std::max(1L, from); i < frames.rows(); ++i) {
        if ((frames(i - 1, 0) < 0.0) != (frames(i, 0) < 0.0)) last = i;
    }
    return last;
}

std::optional<long> lorenz_collapse_onset(const Mat& frames, double rho, double beta, long ref_begin, long ref_end,
                                          long from) {
    if (rho <= 1.0 || beta <= 0.0) throw Error(ErrorKind::Domain, "fixed points C+- need rho > 1 and beta > 0");
    if (frames.cols() != 3) throw Error(ErrorKind::DimensionMismatch, "Lorenz frames must have three columns");
    const long n = frames.rows();
    ref_begin = std::max(0L, ref_begin);
    ref_end = std::min(n, ref_end);
    if (ref_end <= ref_begin) throw Error(ErrorKind::TooShort, "empty reference segment");
    const double c = std::sqrt(beta * (rho - 1.0));
    const Eigen::RowVector3d plus(c, c, rho - 1.0);
    const Eigen::RowVector3d minus(-c, -c, rho - 1.0);
    auto dist = [&](long i) {
        return std::min((frames.row(i) - plus).norm(), (frames.row(i) - minus).norm());
    };
    double dmin = std::numeric_limits<double>::infinity();
    for (long i = ref_begin; i < ref_end; ++i) dmin = std::min(dmin, dist(i));
    long onset = n;
    for (long i = n - 1; i >= std::max(0L, from); --i) {
        if (dist(i) >= dmin) break;
        onset = i;
    }
    if (onset >= n) return std::nullopt;
    return onset;
}

}  // namespace rhythm::analysis
