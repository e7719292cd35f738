#pragma once

#include "traels/geo.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <deque>
#include <stdexcept>
#include <vector>

namespace traels {

class YawBiasError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class YbeMode { Enabled, Disabled, Fixed };

struct YbeConfig {
  YbeMode mode = YbeMode::Enabled;
  double fixed_bias = 0.0;              // rad, used in Fixed mode
  double min_displacement = 50.0;       // m, gate on |dG|
  std::size_t trend_window = 10;        // global updates
  double min_decline = 0.01;            // fractional trace decrease
  std::size_t average_window = 10;      // samples
  double outlier_mads = 3.0;
  double max_step = 0.0174532925199433;  // rad per update (1 deg)
};

/// Signed planar angle from dL to dG in (-pi, pi]. Its magnitude is the
/// arccos of the normalized dot product; the sign comes from dL x dG.
double compute_yaw_bias_sample(const Eigen::Vector2d& global_displacement, const Eigen::Vector2d& local_displacement,
                               double min_displacement = 50.0);

/// wrap(yaw + bias)
double correct_heading(double measured_yaw, double bias);

struct YawBiasSample {
  double stamp = 0.0;
  double value = 0.0;  // absolute bias implied by the sample, rad
};

/// Online additive yaw-bias estimator driven by local/global pose pairs.
class YawBiasEstimator {
 public:
  explicit YawBiasEstimator(YbeConfig config = {});

  /// Records the global position-covariance trace and reports whether it
  /// has declined by at least min_decline across the trend window.
  bool admit_sample(double global_cov_trace);

  /// Adds a sample and returns the new estimate: mean of the retained window
  /// after median/MAD outlier rejection, rate-limited per update.
  double update_bias(double sample);

  /// Per global-cycle entry point. Returns true when a sample was taken.
  bool observe(double stamp, const Pose6D& local_pose, const Pose6D& global_pose, double global_cov_trace);

  /// Correction to add to measured headings.
  double bias() const;
  const YbeConfig& config() const { return config_; }
  const std::vector<YawBiasSample>& samples() const { return accepted_; }

 private:
  YbeConfig config_;
  double estimate_ = 0.0;
  std::deque<double> traces_;
  std::deque<double> window_;
  std::vector<YawBiasSample> accepted_;
  bool anchored_ = false;
  Eigen::Vector2d anchor_local_ = Eigen::Vector2d::Zero();
  Eigen::Vector2d anchor_global_ = Eigen::Vector2d::Zero();
};

}  // namespace traels
