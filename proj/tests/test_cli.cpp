#include "rhythm/common.hpp"
#include "rhythm/io.hpp"

#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>

using namespace rhythm;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(RHYTHM_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("rhythm_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("exit codes are distinct per error category", "[cli]") {
    CHECK(exit_code(ErrorKind::IntegrationFailure) == 10);
    CHECK(exit_code(ErrorKind::PortInUse) > exit_code(ErrorKind::IntegrationFailure));
    CHECK(exit_code(ErrorKind::ConfigValidation) != exit_code(ErrorKind::BundleIncompatible));
}

TEST_CASE("cli usage errors and help", "[cli]") {
    CHECK(run("--help") == 0);
    CHECK(run("--version") == 0);
    CHECK(run("") == 2);
    CHECK(run("fly") == 2);
    CHECK(run("simulate --config /nonexistent.json") == 2);
    CHECK(run("predict") == 2);
}

TEST_CASE("cli maps typed errors to their exit codes", "[cli]") {
    const auto dir = scratch("typed");
    io::write_text(dir / "unknown_key.json", R"({"sead": 1})");
    CHECK(run("simulate -c " + (dir / "unknown_key.json").string()) == exit_code(ErrorKind::ConfigValidation));
    io::write_text(dir / "negative.json", R"({"n_frames": -5})");
    CHECK(run("detect -c " + (dir / "negative.json").string()) == exit_code(ErrorKind::ConfigValidation));
    CHECK(run("predict -b " + (dir / "no_bundle").string() + " -o " + (dir / "p").string()) ==
          exit_code(ErrorKind::BundleIncompatible));
    fs::remove_all(dir.parent_path());
}

TEST_CASE("cli simulate writes its artifacts and prints the summary path", "[cli]") {
    const auto dir = scratch("sim");
    io::write_text(dir / "cfg.json", R"({"n_frames": 500, "seed": 4})");
    const auto out = dir / "out";
    const std::string cmd = std::string(RHYTHM_CLI) + " simulate -c " + (dir / "cfg.json").string() + " -o " +
                            out.string() + " > " + (dir / "stdout.txt").string() + " 2>/dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(io::read_text(dir / "stdout.txt") == (out / "summary.json").string() + "\n");
    CHECK(fs::exists(out / "trajectory.csv"));
    const auto summary = nlohmann::json::parse(io::read_text(out / "summary.json"));
    CHECK(summary.at("seed") == 4);
    CHECK(summary.at("frames") == 500);
    fs::remove_all(dir.parent_path());
}
