#pragma once

// Live steering of a trained twin: a session produces one FramePacket per
// frame and applies SteerCommands only at frame boundaries.

#include "rhythm/io.hpp"
#include "rhythm/learner.hpp"

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <json.hpp>

namespace rhythm::steerd {

using json = nlohmann::json;

struct FramePacket {
    long t = 0;
    double R = 0.0;
    double mean_phase = 0.0;
    Vec output;
    learner::PhaseMode mode = learner::PhaseMode::Coupled;
    std::optional<double> lambda_estimate;
};

json to_json(const FramePacket& p);
FramePacket packet_from_json(const json& j);

struct SteerCommand {
    enum class Kind { SetMode, SetOmega, Freeze, SwitchInput };

    Kind kind = Kind::Freeze;
    learner::PhaseMode mode = learner::PhaseMode::Coupled;  // SetMode
    double value = 0.0;                                     // SetOmega
    std::optional<double> lambda;  // SwitchInput; empty returns to closed-loop feedback
    double issued_at = 0.0;        // client timestamp, informational
};

json to_json(const SteerCommand& c);
/// Throws InvalidCommand on malformed input.
SteerCommand command_from_json(const json& j);

struct Ack {
    long frame = 0;  // index of the first packet that reflects the command
    SteerCommand command;
};

json to_json(const Ack& a);

struct SessionConfig {
    std::uint64_t seed = 1;
    std::size_t initial_state = 0;  // which training state drives the warm-up
    learner::PhaseMode initial_mode = learner::PhaseMode::Coupled;
    double initial_omega = 0.0;
    long estimate_window = 1000;  // trailing outputs used for lambda_estimate (Thomas)
    double fps = 30.0;            // producer pacing; 0 runs unthrottled
    std::size_t queue_capacity = 512;
    std::string replay_path;      // JSON lines of applied commands; empty disables
};

/// Valid parameter range of SwitchInput for a system.
std::pair<double, double> input_range(dynsys::SystemKind kind);

/// Single-threaded session core. Deterministic given (bundle, config,
/// command script).
class Session {
public:
    Session(io::ModelBundle bundle, SessionConfig cfg);

    /// Validate and queue a command for the next frame boundary.
    void submit(const SteerCommand& cmd);

    /// Apply queued commands, emit the packet for the current frame, then
    /// advance the twin by one frame.
    FramePacket step();

    /// Index of the next packet step() will return.
    long frame() const { return frame_; }
    learner::PhaseMode mode() const { return mode_; }
    const learner::Twin& twin() const { return twin_; }
    dynsys::SystemKind system_kind() const { return bundle_.info.system.kind; }

    /// Commands applied so far, with the frame each took effect at.
    const std::vector<Ack>& applied() const { return applied_; }

    /// Number of commands applied at the boundary before the last packet.
    std::size_t applied_last_step() const { return applied_last_; }

private:
    void apply(const SteerCommand& cmd);
    FramePacket make_packet();

    io::ModelBundle bundle_;
    SessionConfig cfg_;
    learner::Twin twin_;
    dynsys::Simulator sim_;
    bool open_loop_ = false;
    learner::PhaseMode mode_;
    double omega_;
    long frame_ = 0;
    std::deque<SteerCommand> pending_;
    std::vector<Ack> applied_;
    std::size_t applied_last_ = 0;
    std::deque<Vec> recent_outputs_;
    std::ofstream replay_;
};

/// Validate a command against a system (throws InvalidCommand).
void validate_command(const SteerCommand& cmd, dynsys::SystemKind kind);

/// Parse a replay log (JSON lines with "frame" and "command").
std::vector<Ack> read_replay(const std::string& path);

/// Re-run a session from a command script and return its first n packets.
std::vector<FramePacket> replay(const io::ModelBundle& bundle, SessionConfig cfg, const std::vector<Ack>& script,
                                long n_frames);

/// Bounded packet queue for one subscriber. When full the oldest packet is
/// dropped; order is never changed.
class Subscription {
public:
    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    void push(const FramePacket& p);
    /// Wait up to `timeout` for a packet. Empty when closed or timed out.
    std::optional<FramePacket> pop(std::chrono::milliseconds timeout);
    void close();
    bool closed() const;
    std::size_t dropped() const;

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<FramePacket> queue_;
    std::size_t capacity_;
    std::size_t dropped_ = 0;
    bool closed_ = false;
};

/// A session with its own producer thread.
class SessionRunner {
public:
    SessionRunner(io::ModelBundle bundle, SessionConfig cfg);
    ~SessionRunner();

    SessionRunner(const SessionRunner&) = delete;
    SessionRunner& operator=(const SessionRunner&) = delete;

    /// Queue a command; the future resolves once it has been applied.
    std::future<Ack> command(const SteerCommand& cmd);
    std::shared_ptr<Subscription> subscribe();
    void unsubscribe(const std::shared_ptr<Subscription>& sub);
    void stop();

    long frame() const { return frame_.load(); }
    learner::PhaseMode mode() const;
    bool running() const { return running_.load(); }

private:
    void run();

    struct Pending {
        SteerCommand cmd;
        std::promise<Ack> promise;
    };

    Session session_;
    SessionConfig cfg_;
    mutable std::mutex mu_;
    std::deque<Pending> commands_;
    std::vector<std::shared_ptr<Subscription>> subs_;
    std::atomic<long> frame_{0};
    std::atomic<int> mode_;
    std::atomic<bool> running_{true};
    std::string failure_;
    std::thread thread_;
};

class SessionManager {
public:
    std::string start(const std::string& bundle_dir, const SessionConfig& cfg);
    std::string start(io::ModelBundle bundle, const SessionConfig& cfg);
    std::shared_ptr<SessionRunner> get(const std::string& id) const;
    void stop(const std::string& id);
    std::vector<std::string> ids() const;
    void stop_all();
    /// Sessions started without a replay_path log their commands to
    /// <dir>/<id>.jsonl. Empty disables.
    void set_replay_dir(std::string dir);

private:
    mutable std::mutex mu_;
    std::string replay_dir_;
    std::map<std::string, std::shared_ptr<SessionRunner>> sessions_;
    long next_id_ = 1;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string bundle;  // start one session on launch when set
    std::string replay_dir = "replays";
    SessionConfig session;
};

/// HTTP front end. Routes:
///   GET  /health                         session list
///   POST /sessions                       {"bundle": dir, ...} -> {"session": id}
///   POST /sessions/{id}/commands         SteerCommand -> Ack
///   GET  /sessions/{id}/stream           newline-delimited FramePackets (chunked)
///   DELETE /sessions/{id}
class Server {
public:
    explicit Server(ServerOptions opts);
    ~Server();

    /// Bind and serve on a background thread. Throws PortInUse.
    void start();
    /// Block until stop() is called.
    void wait();
    void stop();
    int port() const { return port_; }
    SessionManager& sessions() { return sessions_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    ServerOptions opts_;
    SessionManager sessions_;
    int port_ = 0;
};

}  // namespace rhythm::steerd
