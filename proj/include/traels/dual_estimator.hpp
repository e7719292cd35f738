#pragma once

#include "traels/estimator.hpp"
#include "traels/proprioception.hpp"

#include <optional>
#include <span>

namespace traels {

struct LocalFilterConfig {
  FilterConfig filter;
  double zero_velocity_sigma = 0.05;  // m/s, lateral and vertical
  bool slip_rejection = true;
  double continuity_bound = 0.5;  // m per cycle
};

/// Continuous local estimator: IMU, INS, wheel odometry, and zero lateral /
/// vertical velocity pseudo-measurements. Never sees global corrections.
class LocalFilter {
 public:
  LocalFilter(LocalFilterConfig config, const SlipPolicy& slip_policy);

  void initialize(const StateEstimate& initial);
  StateEstimate step(double stamp, std::span<const Measurement> imu, const std::optional<Measurement>& ins,
                     const std::optional<Measurement>& wheel);

  const StateEstimate& state() const { return ekf_.state(); }
  const Ekf& ekf() const { return ekf_; }
  /// Mahalanobis distance and inflation factor applied to the last wheel measurement.
  double last_wheel_distance() const { return last_wheel_distance_; }
  double last_wheel_inflation() const { return last_wheel_inflation_; }
  double max_step_displacement() const { return max_step_displacement_; }
  std::size_t continuity_violations() const { return continuity_violations_; }

 private:
  LocalFilterConfig config_;
  SlipPolicy slip_policy_;
  Ekf ekf_;
  double last_wheel_distance_ = 0.0;
  double last_wheel_inflation_ = 1.0;
  double max_step_displacement_ = 0.0;
  std::size_t continuity_violations_ = 0;
};

struct GlobalFilterConfig {
  FilterConfig filter;
};

/// Global estimator: consumes the local twist/acceleration and TRN fixes.
class GlobalFilter {
 public:
  explicit GlobalFilter(GlobalFilterConfig config);

  void initialize(const StateEstimate& initial);
  StateEstimate step(double stamp, const Measurement& local_twist, const std::optional<Measurement>& orientation,
                     std::span<const Measurement> fixes);

  const StateEstimate& state() const { return ekf_.state(); }
  const Ekf& ekf() const { return ekf_; }

 private:
  Ekf ekf_;
};

/// Builds the twist + acceleration measurement the global filter consumes
/// from a local state snapshot.
Measurement local_twist_measurement(const StateEstimate& local);

/// Local and global filters plus the maintained L -> G transform.
class DualEstimator {
 public:
  DualEstimator(LocalFilterConfig local, GlobalFilterConfig global, const SlipPolicy& slip_policy);

  /// Both filters start at the same pose, so L -> G starts as identity
  /// unless a non-trivial initial global state is supplied.
  void initialize(const StateEstimate& initial_local, const StateEstimate& initial_global);

  StateEstimate step_local(double stamp, std::span<const Measurement> imu, const std::optional<Measurement>& ins,
                           const std::optional<Measurement>& wheel);
  /// Runs one global cycle at the current local stamp and refreshes L -> G.
  StateEstimate step_global(const std::optional<Measurement>& orientation, std::span<const Measurement> fixes);

  const LocalFilter& local() const { return local_; }
  const GlobalFilter& global() const { return global_; }
  const Pose6D& local_to_global() const { return local_to_global_; }

 private:
  LocalFilter local_;
  GlobalFilter global_;
  Pose6D local_to_global_;
};

}  // namespace traels
