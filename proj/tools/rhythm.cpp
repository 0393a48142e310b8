// Command-line front end for the experiments and the steering server.

#include "rhythm/experiments.hpp"
#include "rhythm/steerd.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iostream>

namespace ex = rhythm::experiments;
using rhythm::Error;
using rhythm::ErrorKind;

namespace {

// Logs go to stderr so stdout carries only results.
void configure_logging() {
    spdlog::set_default_logger(spdlog::stderr_color_mt("rhythm"));
    const char* env = std::getenv("RHYTHM_LOG");
    spdlog::set_level(spdlog::level::info);
    if (env) spdlog::set_level(spdlog::level::from_str(env));
    spdlog::set_pattern("[%l] %v");
}

struct CommonOpts {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string bundle;
};

void add_common(CLI::App* sub, CommonOpts& o) {
    sub->add_option("-c,--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("-s,--seed", o.seed, "master seed, overrides the config");
    sub->add_option("-o,--out", o.out, "output directory, overrides the config");
}

ex::ExperimentConfig load(const CommonOpts& o, ex::ExperimentKind kind) {
    ex::ExperimentConfig cfg;
    if (!o.config.empty()) cfg = ex::load_experiment(o.config);
    cfg.experiment = kind;
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.bundle.empty()) cfg.twin.bundle = o.bundle;
    return cfg;
}

ex::ExperimentKind detect_kind(const ex::ExperimentConfig& cfg) {
    switch (cfg.system.kind) {
        case rhythm::dynsys::SystemKind::Thomas: return ex::ExperimentKind::DetectThomas;
        case rhythm::dynsys::SystemKind::MackeyGlass: return ex::ExperimentKind::DetectMackey;
        case rhythm::dynsys::SystemKind::Lorenz: return ex::ExperimentKind::DetectLorenz;
    }
    return ex::ExperimentKind::DetectThomas;
}

int run(const ex::ExperimentConfig& cfg) {
    cfg.validate();
    spdlog::info("running {} (seed {}) into {}", ex::to_string(cfg.experiment), cfg.seed, cfg.output_dir);
    const auto summary = ex::run_experiment(cfg);
    spdlog::debug("{}", summary.dump(2));
    std::cout << (std::filesystem::path(cfg.output_dir) / "summary.json").string() << "\n";
    return 0;
}

std::atomic<bool> g_stop{false};

}  // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"Phase-modulated reservoir experiments"};
    app.set_version_flag("--version", std::string(rhythm::kVersion));
    app.require_subcommand(1);

    CommonOpts opts;
    auto* simulate = app.add_subcommand("simulate", "integrate a system and record its trajectory");
    auto* detect = app.add_subcommand("detect", "drive the network with a trajectory and locate regime shifts");
    auto* train = app.add_subcommand("train", "train a twin on alternating states and save the bundle");
    auto* target = app.add_subcommand("target", "target each training state and run closed loop");
    auto* baseline = app.add_subcommand("baseline", "closed-loop runs of an unmodulated network");
    auto* steer = app.add_subcommand("steer", "sweep the frozen mean phase and run closed loop");
    auto* predict = app.add_subcommand("predict", "closed-loop prediction from a saved bundle");
    for (auto* sub : {simulate, detect, train, target, baseline, steer, predict}) add_common(sub, opts);
    for (auto* sub : {target, steer}) sub->add_option("-b,--bundle", opts.bundle, "use this bundle instead of training");
    predict->add_option("-b,--bundle", opts.bundle, "bundle directory")->required();

    rhythm::steerd::ServerOptions srv;
    auto* serve = app.add_subcommand("serve", "stream a live twin session over HTTP");
    serve->add_option("-b,--bundle", srv.bundle, "bundle to start a session from");
    serve->add_option("-p,--port", srv.port, "port, 0 picks a free one")->capture_default_str();
    serve->add_option("--host", srv.host, "bind address")->capture_default_str();
    serve->add_option("--fps", srv.session.fps, "frames per second, 0 is unthrottled")->capture_default_str();
    serve->add_option("--replay-dir", srv.replay_dir, "directory for per-session command logs")->capture_default_str();
    serve->add_option("-s,--seed", srv.session.seed, "session seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // help and version exit 0; every other parse failure is a usage error
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*simulate) return run(load(opts, ex::ExperimentKind::Simulate));
        if (*detect) {
            auto cfg = load(opts, ex::ExperimentKind::DetectThomas);
            cfg.experiment = detect_kind(cfg);
            return run(cfg);
        }
        if (*train) return run(load(opts, ex::ExperimentKind::TwinTrain));
        if (*target) return run(load(opts, ex::ExperimentKind::TwinTarget));
        if (*baseline) return run(load(opts, ex::ExperimentKind::TwinBaseline));
        if (*steer) return run(load(opts, ex::ExperimentKind::TwinSteer));
        if (*predict) return run(load(opts, ex::ExperimentKind::Predict));
        if (*serve) {
            rhythm::steerd::Server server(srv);
            server.start();
            spdlog::info("listening on {}:{}", srv.host, server.port());
            std::cout << server.port() << std::endl;
            std::signal(SIGINT, [](int) { g_stop = true; });
            std::signal(SIGTERM, [](int) { g_stop = true; });
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
            return 0;
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return rhythm::exit_code(e.kind());
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
