#include "traels/ybe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace traels {

namespace {

double median_of(std::vector<double> values) {
  // Lower median keeps the result an actual sample.
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  return values[mid];
}

constexpr double kMadFloor = 1e-4;  // rad

}  // namespace

double compute_yaw_bias_sample(const Eigen::Vector2d& dg, const Eigen::Vector2d& dl, double min_displacement) {
  const double ng = dg.norm();
  const double nl = dl.norm();
  if (nl == 0.0 || ng == 0.0) throw YawBiasError("zero-length displacement");
  if (ng <= min_displacement) throw YawBiasError("global displacement below gate");
  const double cosine = std::clamp(dg.dot(dl) / (ng * nl), -1.0, 1.0);
  const double magnitude = std::acos(cosine);
  const double cross = dl.x() * dg.y() - dl.y() * dg.x();
  return wrap_angle(cross < 0.0 ? -magnitude : magnitude);
}

double correct_heading(double measured_yaw, double bias) { return wrap_angle(measured_yaw + bias); }

YawBiasEstimator::YawBiasEstimator(YbeConfig config) : config_(config) {
  if (config_.mode == YbeMode::Fixed) estimate_ = config_.fixed_bias;
}

bool YawBiasEstimator::admit_sample(double trace) {
  traces_.push_back(trace);
  while (traces_.size() > std::max<std::size_t>(config_.trend_window, 2)) traces_.pop_front();
  if (traces_.size() < 2) return false;
  return traces_.back() <= (1.0 - config_.min_decline) * traces_.front();
}

double YawBiasEstimator::update_bias(double sample) {
  window_.push_back(sample);
  while (window_.size() > std::max<std::size_t>(config_.average_window, 1)) window_.pop_front();

  const std::vector<double> values(window_.begin(), window_.end());
  const double med = median_of(values);
  std::vector<double> deviations;
  deviations.reserve(values.size());
  for (double v : values) deviations.push_back(std::abs(v - med));
  const double mad = std::max(median_of(deviations), kMadFloor);

  double sum = 0.0;
  std::size_t kept = 0;
  for (double v : values) {
    if (std::abs(v - med) <= config_.outlier_mads * mad) {
      sum += v;
      ++kept;
    }
  }
  const double target = kept > 0 ? sum / static_cast<double>(kept) : med;
  const double step = std::clamp(target - estimate_, -config_.max_step, config_.max_step);
  const double next = estimate_ + step;
  if (std::abs(next) >= std::numbers::pi / 2.0) {
    throw YawBiasError("yaw bias estimate beyond +-90 deg; configuration is broken");
  }
  estimate_ = next;
  return estimate_;
}

bool YawBiasEstimator::observe(double stamp, const Pose6D& local_pose, const Pose6D& global_pose, double trace) {
  if (config_.mode != YbeMode::Enabled) return false;
  const Eigen::Vector2d local_xy = local_pose.position.head<2>();
  const Eigen::Vector2d global_xy = global_pose.position.head<2>();
  if (!anchored_) {
    anchor_local_ = local_xy;
    anchor_global_ = global_xy;
    anchored_ = true;
    admit_sample(trace);
    return false;
  }
  const bool declining = admit_sample(trace);
  const Eigen::Vector2d dg = global_xy - anchor_global_;
  const Eigen::Vector2d dl = local_xy - anchor_local_;
  if (!declining || dg.norm() <= config_.min_displacement || dl.norm() == 0.0) return false;

  // Local headings already carry the current correction, so the angle is a
  // residual on top of it.
  const double absolute = estimate_ + compute_yaw_bias_sample(dg, dl, config_.min_displacement);
  update_bias(absolute);
  accepted_.push_back({stamp, absolute});
  anchor_local_ = local_xy;
  anchor_global_ = global_xy;
  return true;
}

double YawBiasEstimator::bias() const {
  switch (config_.mode) {
    case YbeMode::Disabled: return 0.0;
    case YbeMode::Fixed: return config_.fixed_bias;
    case YbeMode::Enabled: return estimate_;
  }
  return 0.0;
}

}  // namespace traels
