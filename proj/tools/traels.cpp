#include "traels/io.hpp"
#include "traels/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace traels;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumerical = 3;
constexpr double kDeg = 3.141592653589793 / 180.0;

// TRAELS_OUT replaces the output directory of every subcommand.
fs::path output_dir(const fs::path& requested) {
  if (const char* env = std::getenv("TRAELS_OUT"); env && *env) return env;
  return requested;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("traels");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("TRAELS_LOG"); env && *env) {
    const auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off") {
      throw io::ConfigError("TRAELS_LOG: unknown level '" + std::string(env) + "'");
    }
    spdlog::set_level(level);
  }
}

void apply_ybe_flag(const std::string& flag, YbeConfig& ybe) {
  if (flag == "on") {
    ybe.mode = YbeMode::Enabled;
  } else if (flag == "off") {
    ybe.mode = YbeMode::Disabled;
  } else if (flag.rfind("fixed:", 0) == 0) {
    char* end = nullptr;
    const std::string value = flag.substr(6);
    const double deg = std::strtod(value.c_str(), &end);
    if (value.empty() || *end != '\0' || !std::isfinite(deg) || std::abs(deg) >= 90.0) {
      throw io::ConfigError("--ybe: expected fixed:<degrees> within (-90, 90)");
    }
    ybe.mode = YbeMode::Fixed;
    ybe.fixed_bias = deg * kDeg;
  } else {
    throw io::ConfigError("--ybe: expected on, off or fixed:<degrees>");
  }
}

bool finite(const std::vector<StateEstimate>& states) {
  for (const auto& s : states) {
    if (!s.mean.allFinite() || !s.covariance.allFinite()) return false;
  }
  return true;
}

// simulate -----------------------------------------------------------------

struct SimulateArgs {
  std::string preset;
  fs::path scenario;
  std::optional<std::uint64_t> seed;
  fs::path out = "sim";
  bool no_apriori = false;
  double calibration_straight = 60.0;
};

int cmd_simulate(const SimulateArgs& a) {
  Scenario scenario;
  if (!a.scenario.empty()) {
    scenario = io::scenario_from_json(io::read_json(a.scenario));
    if (a.seed) scenario.seed = *a.seed;
  } else {
    scenario = make_preset(a.preset, a.seed.value_or(1));
  }
  if (a.no_apriori) scenario.render_apriori = false;
  const fs::path out = output_dir(a.out);
  spdlog::info("simulating '{}' seed {} into {}", scenario.name, scenario.seed, out.string());
  const SimulationResult result = simulate(scenario);
  io::write_simulation(out, scenario, result);
  const auto calibration = simulate_calibration_drive(scenario.sensors.imus[0], scenario.sensors.encoder.scale_error,
                                                      a.calibration_straight, 2.0 * 3.141592653589793, scenario.seed);
  io::write_calibration_log(out / "calibration_log.csv", calibration);
  spdlog::info("wrote {} truth samples, {} scans, {} cloud points", result.log.truth.size(), result.log.scans.size(),
               result.apriori.cloud.size());
  return kOk;
}

// run ----------------------------------------------------------------------

struct RunArgs {
  fs::path config;
  fs::path data;
  fs::path out;
  std::string ybe;
  bool no_trn = false;
  bool parallel = false;
};

int cmd_run(const RunArgs& a) {
  io::RunConfig config;
  if (!a.config.empty()) config = io::run_config_from_json(io::read_json(a.config), a.config.parent_path());
  if (!a.data.empty()) config.data_dir = a.data;
  if (!a.out.empty()) config.output_dir = a.out;
  config.output_dir = output_dir(config.output_dir);
  if (!a.ybe.empty()) apply_ybe_flag(a.ybe, config.pipeline.ybe);
  if (a.no_trn) config.trn = false;
  if (a.parallel) config.pipeline.parallel_workers = true;
  if (config.data_dir.empty()) throw io::ConfigError("run: no data directory (set 'data' or pass --data)");
  if (!fs::is_directory(config.data_dir)) throw io::ConfigError("field 'data': no such directory " + config.data_dir.string());

  spdlog::info("loading {}", config.data_dir.string());
  const io::SimulationFiles files = io::read_simulation(config.data_dir, config.trn);
  spdlog::info("replaying {} steps, {} scans, TRN {}", files.log.truth.size(), files.log.scans.size(),
               config.trn ? "on" : "off");
  const RunOutput out = run_pipeline(files.log, config.trn ? &files.apriori : nullptr,
                                     imu_mounts(files.scenario.sensors), config.pipeline);
  if (!finite(out.global) || !finite(out.local)) {
    spdlog::error("estimator produced non-finite states");
    return kNumerical;
  }

  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  io::write_states(dir / "local.csv", out.local);
  io::write_states(dir / "global.csv", out.global);
  io::write_fixes(dir / "fixes.csv", out.fixes);
  io::write_yaw_bias(dir / "yaw_bias.csv", out.yaw_bias);
  io::write_ybe_samples(dir / "ybe_samples.csv", out.ybe_samples);
  io::write_json(dir / "run_config.json", io::to_json(config));
  io::write_json(dir / "run_info.json", {{"atlis_attempts", out.atlis_attempts},
                                         {"orienteer_attempts", out.orienteer_attempts},
                                         {"orienteer_rejected", out.orienteer_rejected},
                                         {"fixes", out.fixes.size()},
                                         {"continuity_violations", out.continuity_violations},
                                         {"dropped_measurements", out.dropped},
                                         {"final_yaw_correction_deg",
                                          out.yaw_bias.empty() ? 0.0 : out.yaw_bias.back().second / kDeg}});
  spdlog::info("wrote {} global states and {} fixes to {}", out.global.size(), out.fixes.size(), dir.string());
  return kOk;
}

// eval ---------------------------------------------------------------------

struct EvalArgs {
  fs::path truth;
  fs::path estimate;
  fs::path out = "eval";
  double min_spacing = 1.0;
  bool three_d = false;
  bool point_to_point = false;
};

int cmd_eval(const EvalArgs& a) {
  MetricsConfig metrics;
  metrics.min_spacing = a.min_spacing;
  metrics.planar = !a.three_d;
  metrics.point_to_point = a.point_to_point;
  const Trajectory truth = io::read_trajectory(a.truth);
  const Trajectory estimate = io::read_trajectory(a.estimate);
  const SampledError errors = evaluate_errors(truth, estimate, metrics);
  const ErrorSummary summary = aggregate(errors);
  const fs::path dir = output_dir(a.out);
  fs::create_directories(dir);
  io::write_json(dir / "summary.json", io::to_json(summary));
  io::write_samples(dir / "samples.csv", errors);
  spdlog::info("{} samples, median ATE {:.3f} m, final ATE {:.3f} m, median |RPE| {:.3f} %", summary.count,
               summary.median_ate, summary.final_ate, summary.median_abs_rpe);
  return kOk;
}

// calibrate ----------------------------------------------------------------

struct CalibrateArgs {
  fs::path log;
  fs::path out = "calibration_report.json";
  double min_straight = 50.0;
  double min_rotation_deg = 360.0;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const auto rows = io::read_calibration_log(a.log);
  CalibrationLimits limits;
  limits.min_straight_distance = a.min_straight;
  limits.min_rotation = a.min_rotation_deg * kDeg;
  const CalibrationReport report = calibrate_mount_and_wheel(rows, limits);
  fs::path out = a.out;
  if (const char* env = std::getenv("TRAELS_OUT"); env && *env) out = fs::path(env) / out.filename();
  io::write_json(out, io::to_json(report));
  spdlog::info("mount rpy [{:.3f}, {:.3f}, {:.3f}] deg, wheel scale {:.5f}", report.mount.rpy.x() / kDeg,
               report.mount.rpy.y() / kDeg, report.mount.rpy.z() / kDeg, report.wheel_scale);
  return kOk;
}

// report -------------------------------------------------------------------

struct ReportArgs {
  std::vector<fs::path> summaries;
  fs::path out;
};

std::string label_for(const fs::path& path) {
  const fs::path parent = path.parent_path();
  return parent.empty() ? path.stem().string() : parent.filename().string();
}

int cmd_report(const ReportArgs& a) {
  std::vector<std::pair<std::string, ErrorSummary>> rows;
  for (const auto& p : a.summaries) rows.emplace_back(label_for(p), io::summary_from_json(io::read_json(p)));

  std::cout << "| run | median abs RPE % | max abs RPE % | median ATE m | max ATE m | final ATE m | length m | "
               "median v m/s | samples |\n|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& [label, s] : rows) {
    char line[256];
    std::snprintf(line, sizeof line, "| %s | %.2f | %.2f | %.2f | %.2f | %.2f | %.1f | %.2f | %zu |\n", label.c_str(),
                  s.median_abs_rpe, s.max_abs_rpe, s.median_ate, s.max_ate, s.final_ate, s.length, s.median_velocity,
                  s.count);
    std::cout << line;
  }
  if (!a.out.empty()) {
    std::ofstream csv(output_dir(a.out.parent_path()) / a.out.filename());
    if (!csv) throw io::DataError("cannot write " + a.out.string());
    csv << "run,median_abs_rpe_percent,max_abs_rpe_percent,median_ate,max_ate,final_ate,length,median_velocity,count\n";
    for (const auto& [label, s] : rows) {
      csv << label << ',' << s.median_abs_rpe << ',' << s.max_abs_rpe << ',' << s.median_ate << ',' << s.max_ate << ','
          << s.final_ate << ',' << s.length << ',' << s.median_velocity << ',' << s.count << '\n';
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TRAELS GNSS-denied localization: simulate, fuse, evaluate"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Generate truth, sensor logs and a priori maps");
  auto* preset_opt = simulate_cmd->add_option("--preset", sim.preset, "Built-in scenario")
                         ->check(CLI::IsMember(preset_names()));
  simulate_cmd->add_option("--scenario", sim.scenario, "Scenario JSON file")->excludes(preset_opt);
  simulate_cmd->add_option("--seed", sim.seed, "Random seed (overrides the scenario's)");
  simulate_cmd->add_option("-o,--out", sim.out, "Output directory")->capture_default_str();
  simulate_cmd->add_flag("--no-apriori", sim.no_apriori, "Skip rendering the a priori map");
  simulate_cmd->add_option("--calibration-straight", sim.calibration_straight,
                           "Straight length of the calibration drive (m)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Replay a simulated log through the estimator");
  run_cmd->add_option("-c,--config", run.config, "Run configuration JSON")->check(CLI::ExistingFile);
  run_cmd->add_option("-d,--data", run.data, "Simulation output directory");
  run_cmd->add_option("-o,--out", run.out, "Output directory");
  run_cmd->add_option("--ybe", run.ybe, "Yaw bias estimation: on, off or fixed:<degrees>");
  run_cmd->add_flag("--no-trn", run.no_trn, "Disable both TRN engines (dead reckoning)");
  run_cmd->add_flag("--parallel-workers", run.parallel, "Threaded TRN workers (not bit-exact)");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Distance-sampled ATE/RPE of an estimate against truth");
  eval_cmd->add_option("--truth", eval.truth, "Truth CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--estimate", eval.estimate, "Estimate CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("-o,--out", eval.out, "Output directory")->capture_default_str();
  eval_cmd->add_option("--min-spacing", eval.min_spacing, "Truth arc length between samples (m)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--3d", eval.three_d, "Use 3D instead of planar errors");
  eval_cmd->add_flag("--point-to-point", eval.point_to_point, "RPE from straight-line displacement");

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Estimate IMU mount rotation and wheel scale");
  cal_cmd->add_option("--log", cal.log, "Calibration log CSV")->required()->check(CLI::ExistingFile);
  cal_cmd->add_option("-o,--out", cal.out, "Report JSON path")->capture_default_str();
  cal_cmd->add_option("--min-straight", cal.min_straight, "Required straight distance (m)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cal_cmd->add_option("--min-rotation", cal.min_rotation_deg, "Required in-place rotation (deg)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Aggregate summaries into one comparison table");
  report_cmd->add_option("summaries", rep.summaries, "summary.json files")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("-o,--out", rep.out, "Also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    setup_logging();
    if (simulate_cmd->parsed()) {
      if (sim.preset.empty() && sim.scenario.empty()) throw io::ConfigError("simulate: pass --preset or --scenario");
      return cmd_simulate(sim);
    }
    if (run_cmd->parsed()) return cmd_run(run);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (cal_cmd->parsed()) return cmd_calibrate(cal);
    if (report_cmd->parsed()) return cmd_report(rep);
  } catch (const io::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const SimulationError& e) {
    spdlog::error("invalid scenario: {}", e.what());
    return kUsage;
  } catch (const io::DataError& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const CalibrationError& e) {
    spdlog::error("calibration: {}", e.what());
    return kData;
  } catch (const MetricsError& e) {
    spdlog::error("evaluation: {}", e.what());
    return kData;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const EstimationError& e) {
    spdlog::error("estimation: {}", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kNumerical;
  }
  return kUsage;
}
