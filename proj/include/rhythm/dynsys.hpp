#pragma once

// Benchmark dynamical systems (Thomas, Lorenz, Mackey-Glass) driven by
// time-varying parameter schedules.

#include "rhythm/common.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rhythm::dynsys {

enum class SystemKind { Thomas, Lorenz, MackeyGlass };

std::string_view to_string(SystemKind kind);
SystemKind system_kind_from_string(std::string_view name);

struct SystemSpec {
    SystemKind kind = SystemKind::Thomas;
    // Lorenz
    double sigma = 10.0;
    double beta_lorenz = 8.0 / 3.0;
    // Mackey-Glass
    double beta_mg = 0.2;
    double gamma_mg = 0.1;
    double n_exp = 10.0;

    int dim() const { return kind == SystemKind::MackeyGlass ? 1 : 3; }
    void validate() const;
};

/// The bifurcation parameter as a function of time: b for Thomas, rho for
/// Lorenz, tau for Mackey-Glass. Time zero is the first recorded frame;
/// negative times (warm-up) evaluate to the pre-switch value.
struct ParamSchedule {
    enum class Kind { Constant, StepSwitch, Sinusoid };

    Kind kind = Kind::Constant;
    double base_value = 0.0;
    std::vector<std::pair<double, double>> switches;  // (t_switch, value)
    double center = 0.0;
    double amplitude = 0.0;
    double angular_frequency = 0.0;

    static ParamSchedule constant(double value);
    static ParamSchedule step_switch(double base, std::vector<std::pair<double, double>> switches);
    static ParamSchedule sinusoid(double center, double amplitude, double angular_frequency);

    double at(double t) const;
    double max_value() const;
    double min_value() const;
    void validate() const;
};

struct Trajectory {
    double dt = 0.0;  // spacing between recorded frames
    Mat frames;       // n_frames x dim
    Vec lambda;       // schedule value at each frame

    Eigen::Index size() const { return frames.rows(); }
    int dim() const { return static_cast<int>(frames.cols()); }
    double time(Eigen::Index frame) const { return dt * static_cast<double>(frame); }
};

using Vec3 = Eigen::Vector3d;

Vec3 thomas_deriv(const Vec3& s, double b);
Vec3 lorenz_deriv(const Vec3& s, double sigma, double rho, double beta);

using VectorField = std::function<Vec(const Vec&)>;

/// One classic fourth-order Runge-Kutta step. Throws IntegrationFailure on a
/// non-finite result.
Vec rk4_step(const VectorField& f, const Vec& state, double dt);

/// Uniformly sampled delay line for the Mackey-Glass integrator. Keeps enough
/// samples to look back `span` time units.
class DelayHistory {
public:
    DelayHistory(double t0, double dt, double span);

    /// Fill with samples of `init` on [t0 - span, t0].
    void fill(const std::function<double(double)>& init);
    void push(double x);

    double t_back() const;  // earliest stored time
    double t_now() const;   // latest stored time
    double dt() const { return dt_; }
    double latest() const { return values_.back(); }
    std::size_t size() const { return values_.size(); }

    /// Linearly interpolated value at time t. Throws HistoryUnderflow when t
    /// precedes the stored window.
    double at(double t) const;

private:
    double t_front_;
    double dt_;
    std::size_t capacity_;
    std::deque<double> values_;
};

/// Advance Mackey-Glass by one forward-Euler step from time t and append the
/// new sample. Returns x(t + dt).
double mackey_glass_step(DelayHistory& history, const SystemSpec& spec, double tau, double t, double dt);

struct SimulationConfig {
    double dt = 0.05;             // internal integration step
    int subsample = 2;            // internal steps per recorded frame
    int warmup_discard = 2000;    // internal steps dropped before recording
    double divergence_bound = 1e6;
};

/// Defaults calibrated per system.
SimulationConfig default_simulation_config(SystemKind kind);

/// Frame-by-frame integrator. The constructor runs the warm-up discard, so
/// state() is the first recorded frame.
class Simulator {
public:
    /// For Mackey-Glass the delay line is sized for the larger of the
    /// schedule's maximum and `max_param` (so the delay can later be raised).
    Simulator(const SystemSpec& spec, ParamSchedule schedule, const SimulationConfig& cfg, std::uint64_t seed,
              double max_param = std::numeric_limits<double>::quiet_NaN());

    const Vec& state() const { return state_; }
    double lambda() const;  // schedule value at the current frame
    double time() const;
    void advance();         // move on by one recorded frame
    void set_schedule(ParamSchedule schedule);
    const SystemSpec& spec() const { return spec_; }

private:
    double time_of(long step) const;
    void step_once();

    SystemSpec spec_;
    ParamSchedule schedule_;
    SimulationConfig cfg_;
    Vec state_;
    std::optional<DelayHistory> history_;
    long step_ = 0;
};

Trajectory simulate(const SystemSpec& spec, const ParamSchedule& schedule, Eigen::Index n_frames,
                    const SimulationConfig& cfg, std::uint64_t seed);

/// Least-squares estimate of the Thomas damping b from a sampled trajectory,
/// using central differences for the derivatives.
double estimate_thomas_b(const Mat& frames, double dt);

/// Mean peak-to-peak period of column `col`, in frames. Returns 0 when fewer
/// than two peaks are found.
double mean_cycle_frames(const Mat& frames, int col = 0);

void write_csv(std::ostream& os, const Trajectory& traj);

}  // namespace rhythm::dynsys
