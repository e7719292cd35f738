#include "traels/io.hpp"

#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <string>
#include <sys/wait.h>

using namespace traels;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

// Runs the CLI with stderr folded into the captured output.
Result cli(const std::string& args) {
  const std::string command = std::string("TRAELS_OUT= \"") + TRAELS_CLI + "\" " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("traels_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

// A 200 m L-shaped track at 1 m/s, optionally shifted.
void write_track(const fs::path& path, const Eigen::Vector3d& offset) {
  std::vector<StateEstimate> states;
  for (int k = 0; k <= 2000; ++k) {
    StateEstimate s;
    s.stamp = 0.1 * k;
    const double d = 0.1 * k;
    s.mean.head<3>() = Eigen::Vector3d(d < 100.0 ? d : 100.0, d < 100.0 ? 0.0 : d - 100.0, 0.0) + offset;
    s.frame = Frame::Global;
    states.push_back(s);
  }
  io::write_states(path, states);
}

ErrorSummary summary_at(const fs::path& dir) { return io::summary_from_json(io::read_json(dir / "summary.json")); }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("fly").code == 1);
  CHECK(cli("simulate --preset moon").code == 1);
  CHECK(cli("--help").code == 0);
  const Result r = cli("simulate");
  CHECK(r.code == 1);
  CHECK(r.output.find("--preset or --scenario") != std::string::npos);
}

TEST_CASE("eval of identical files reports zero error") {
  const fs::path dir = scratch("eval_same");
  write_track(dir / "truth.csv", Eigen::Vector3d::Zero());
  const Result r = cli("eval --truth " + quoted(dir / "truth.csv") + " --estimate " + quoted(dir / "truth.csv") +
                       " -o " + quoted(dir / "out"));
  REQUIRE(r.code == 0);
  const ErrorSummary s = summary_at(dir / "out");
  CHECK(s.median_ate == 0.0);
  CHECK(s.final_ate == 0.0);
  CHECK(s.max_abs_rpe == 0.0);
  CHECK(s.length == doctest::Approx(200.0).epsilon(0.01));
  CHECK(fs::exists(dir / "out" / "samples.csv"));
}

TEST_CASE("eval of a shifted estimate reports the shift") {
  const fs::path dir = scratch("eval_shift");
  write_track(dir / "truth.csv", Eigen::Vector3d::Zero());
  write_track(dir / "est.csv", Eigen::Vector3d(3.0, 4.0, 0.0));
  const std::string base = "eval --truth " + quoted(dir / "truth.csv") + " --estimate " + quoted(dir / "est.csv");
  REQUIRE(cli(base + " -o " + quoted(dir / "a")).code == 0);
  const ErrorSummary a = summary_at(dir / "a");
  CHECK(a.median_ate == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(a.final_ate == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(a.max_abs_rpe == doctest::Approx(0.0).epsilon(1e-9));

  REQUIRE(cli(base + " --min-spacing 0.5 -o " + quoted(dir / "b")).code == 0);
  const ErrorSummary b = summary_at(dir / "b");
  CHECK(static_cast<double>(b.count) / a.count == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("malformed inputs exit with 2 and name the location") {
  const fs::path dir = scratch("bad");
  {
    std::ofstream(dir / "scenario.json") << "{\n  \"name\": \"x\",\n  \"seed\": ,\n}\n";
  }
  Result r = cli("simulate --scenario " + quoted(dir / "scenario.json") + " -o " + quoted(dir / "sim"));
  CHECK(r.code == 2);
  CHECK(r.output.find("scenario.json:3:") != std::string::npos);

  {
    std::ofstream(dir / "typed.json") << "{\"plan\": {\"cruise_speed\": \"fast\"}}\n";
  }
  r = cli("simulate --scenario " + quoted(dir / "typed.json") + " -o " + quoted(dir / "sim"));
  CHECK(r.code == 2);
  CHECK(r.output.find("plan.cruise_speed") != std::string::npos);

  {
    std::ofstream(dir / "t.csv") << "stamp,x,y,z\n0,0,0,0\n1,1,oops,0\n";
  }
  r = cli("eval --truth " + quoted(dir / "t.csv") + " --estimate " + quoted(dir / "t.csv") + " -o " +
          quoted(dir / "e"));
  CHECK(r.code == 2);
  CHECK(r.output.find("t.csv:3:") != std::string::npos);
}

TEST_CASE("invalid configuration values exit with 1") {
  const fs::path dir = scratch("config");
  {
    std::ofstream(dir / "run.json") << "{\"data\": \".\", \"ybe\": {\"mode\": \"sometimes\"}}\n";
  }
  Result r = cli("run -c " + quoted(dir / "run.json"));
  CHECK(r.code == 1);
  CHECK(r.output.find("ybe.mode") != std::string::npos);

  r = cli("run -d " + quoted(dir / "nowhere"));
  CHECK(r.code == 1);
  r = cli("run -d " + quoted(dir) + " --ybe sideways");
  CHECK(r.code == 1);
  CHECK(r.output.find("--ybe") != std::string::npos);
}

TEST_CASE("simulate, run and eval end to end") {
  const fs::path dir = scratch("e2e");
  Scenario s = make_preset("desert", 3);
  s.plan.waypoints.resize(2);
  s.plan.dwells.clear();
  io::write_json(dir / "scenario.json", io::to_json(s));
  REQUIRE(cli("simulate --scenario " + quoted(dir / "scenario.json") + " -o " + quoted(dir / "sim")).code == 0);
  for (const char* f : {"scenario.json", "truth.csv", "imu0.csv", "ins.csv", "wheel.csv", "scans.bin",
                        "calibration_log.csv"}) {
    CHECK(fs::exists(dir / "sim" / f));
  }
  REQUIRE(cli("run -d " + quoted(dir / "sim") + " -o " + quoted(dir / "run")).code == 0);
  for (const char* f : {"local.csv", "global.csv", "fixes.csv", "yaw_bias.csv", "run_config.json"}) {
    CHECK(fs::exists(dir / "run" / f));
  }
  REQUIRE(cli("eval --truth " + quoted(dir / "sim" / "truth.csv") + " --estimate " +
              quoted(dir / "run" / "global.csv") + " -o " + quoted(dir / "eval"))
              .code == 0);
  CHECK(summary_at(dir / "eval").count > 0);
  const Result rep = cli("report " + quoted(dir / "eval" / "summary.json"));
  CHECK(rep.code == 0);
  CHECK(rep.output.find("| eval |") != std::string::npos);

  const Result cal = cli("calibrate --log " + quoted(dir / "sim" / "calibration_log.csv") + " -o " +
                         quoted(dir / "cal.json"));
  CHECK(cal.code == 0);
  CHECK(fs::exists(dir / "cal.json"));
}
