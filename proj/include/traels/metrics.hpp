#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace traels {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StampedPosition {
  double stamp = 0.0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

using Trajectory = std::vector<StampedPosition>;

struct MetricsConfig {
  double min_spacing = 1.0;      // m of truth arc length between samples
  bool planar = true;            // 2D errors; false uses 3D norms
  bool point_to_point = false;   // RPE from straight-line displacement
};

struct ErrorSample {
  double stamp = 0.0;
  double distance = 0.0;  // truth arc length at the sample
  double ate = 0.0;       // m
  double rpe = 0.0;       // percent
  double vertical = 0.0;  // signed z error, m
};

struct SampledError {
  std::vector<ErrorSample> samples;
  double min_spacing = 1.0;
  std::size_t skipped = 0;  // segments with zero truth displacement
};

struct ErrorSummary {
  double median_abs_rpe = 0.0;
  double max_abs_rpe = 0.0;
  double median_ate = 0.0;
  double max_ate = 0.0;
  double final_ate = 0.0;
  double length = 0.0;           // truth arc length at the last sample
  double median_velocity = 0.0;  // between consecutive samples
  double vertical_mean = 0.0;
  double vertical_std = 0.0;
  std::size_t count = 0;
};

/// Cumulative chord-sum distance. Throws MetricsError on decreasing stamps.
std::vector<double> arc_length(const Trajectory& trajectory);

/// Linear interpolation of the position at `stamp`; requires the stamp to
/// lie within the trajectory's time range.
Eigen::Vector3d interpolate_position(const Trajectory& trajectory, double stamp);

/// Samples the truth every `min_spacing` meters of arc length (no sample at
/// the start, none while stationary) and evaluates ATE and RPE there. No
/// alignment is applied to the estimate.
SampledError evaluate_errors(const Trajectory& truth, const Trajectory& estimate, const MetricsConfig& config = {});

/// ATE part of evaluate_errors.
std::vector<double> compute_ate(const Trajectory& truth, const Trajectory& estimate, const MetricsConfig& config = {});

/// RPE part of evaluate_errors, in percent.
std::vector<double> compute_rpe(const Trajectory& truth, const Trajectory& estimate, const MetricsConfig& config = {});

/// Order statistics use the lower median for even counts.
ErrorSummary aggregate(const SampledError& errors);

double lower_median(std::vector<double> values);

}  // namespace traels
