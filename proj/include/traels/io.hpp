#pragma once

#include "traels/metrics.hpp"
#include "traels/pipeline.hpp"
#include "traels/proprioception.hpp"
#include "traels/simworld.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace traels::io {

/// Malformed or missing input data. The message names the file and, where
/// known, the line or JSON field.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;
using nlohmann::json;

// Plain tables -------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column index by name; throws DataError naming `source` if absent.
  std::size_t column(const std::string& name, const std::string& source) const;
};

/// Columns named in `text_columns` are skipped and read as NaN.
Table read_csv(const fs::path& path, const std::vector<std::string>& text_columns = {});
/// Numbers are printed with %.17g so a read-back is exact.
void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& value);

// Scenario -----------------------------------------------------------------

json to_json(const Scenario& scenario);
/// Missing fields keep their defaults; wrong types raise DataError naming
/// the field path.
Scenario scenario_from_json(const json& value);

// Simulation products ------------------------------------------------------

/// Writes scenario.json, truth.csv, imu0..3.csv, ins.csv, wheel.csv,
/// scans.bin and the a priori products into `dir`.
void write_simulation(const fs::path& dir, const Scenario& scenario, const SimulationResult& result);

struct SimulationFiles {
  Scenario scenario;
  SensorLog log;
  AprioriMap apriori;
};
SimulationFiles read_simulation(const fs::path& dir, bool with_apriori = true);

void write_truth(const fs::path& path, const std::vector<TruthSample>& truth);
std::vector<TruthSample> read_truth(const fs::path& path);

void write_scans(const fs::path& path, const std::vector<Scan>& scans);
std::vector<Scan> read_scans(const fs::path& path);

/// Binary PPM (P6) of the raster colors; invalid cells are written black.
void write_ppm(const fs::path& path, const RasterPatch& raster);
RasterPatch read_ppm(const fs::path& path, double cell_size, const Eigen::Vector2d& origin);
/// 16-bit PGM (P5) with values mapped linearly from [lo, hi].
void write_pgm16(const fs::path& path, const std::vector<float>& values, int rows, int cols, double lo, double hi);
std::vector<float> read_pgm16(const fs::path& path, int& rows, int& cols, double lo, double hi);
void write_xyz(const fs::path& path, const std::vector<Eigen::Vector3d>& points);
std::vector<Eigen::Vector3d> read_xyz(const fs::path& path);

// Run configuration and outputs -------------------------------------------

struct RunConfig {
  fs::path data_dir;
  fs::path output_dir = "run";
  PipelineConfig pipeline = default_pipeline_config();
  bool trn = true;
  MetricsConfig metrics;
};

/// Starts from defaults; fields present in `value` override them.
RunConfig run_config_from_json(const json& value, const fs::path& base_dir = {});
json to_json(const RunConfig& config);

/// stamp, frame, the 15 state components, their variances, and cov_xy.
void write_states(const fs::path& path, const std::vector<StateEstimate>& states);
Trajectory read_trajectory(const fs::path& path);
void write_fixes(const fs::path& path, const std::vector<FixRecord>& fixes);
void write_yaw_bias(const fs::path& path, const std::vector<std::pair<double, double>>& series);
void write_ybe_samples(const fs::path& path, const std::vector<YawBiasSample>& samples);

// Metrics ------------------------------------------------------------------

json to_json(const ErrorSummary& summary);
ErrorSummary summary_from_json(const json& value);
void write_samples(const fs::path& path, const SampledError& errors);

// Calibration --------------------------------------------------------------

void write_calibration_log(const fs::path& path, const std::vector<CalibrationRow>& rows);
std::vector<CalibrationRow> read_calibration_log(const fs::path& path);
json to_json(const CalibrationReport& report);

}  // namespace traels::io
