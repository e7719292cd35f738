#include "traels/dual_estimator.hpp"

#include <algorithm>

namespace traels {

LocalFilter::LocalFilter(LocalFilterConfig config, const SlipPolicy& slip_policy)
    : config_(std::move(config)), slip_policy_(slip_policy), ekf_(Frame::Local, config_.filter) {
  slip_policy_.validate();
}

void LocalFilter::initialize(const StateEstimate& initial) {
  ekf_.initialize(initial);
  max_step_displacement_ = 0.0;
  continuity_violations_ = 0;
}

StateEstimate LocalFilter::step(double stamp, std::span<const Measurement> imu, const std::optional<Measurement>& ins,
                                const std::optional<Measurement>& wheel) {
  const Eigen::Vector3d before = ekf_.state().mean.segment<3>(kX);
  ekf_.predict_to(stamp);
  for (const auto& m : imu) ekf_.process(m);
  if (ins) ekf_.process(*ins);
  if (wheel) {
    Measurement gated = *wheel;
    last_wheel_distance_ = mahalanobis(ekf_.state(), gated);
    if (config_.slip_rejection) {
      const double base = gated.covariance(0, 0);
      gated.covariance(0, 0) = slip_gate(last_wheel_distance_, base, slip_policy_);
      last_wheel_inflation_ = gated.covariance(0, 0) / base;
    } else {
      last_wheel_inflation_ = 1.0;
    }
    ekf_.process(gated);
  }
  ekf_.process(zero_velocity_measurement(stamp, config_.zero_velocity_sigma));

  const double moved = (ekf_.state().mean.segment<3>(kX) - before).norm();
  max_step_displacement_ = std::max(max_step_displacement_, moved);
  if (moved > config_.continuity_bound) ++continuity_violations_;
  return ekf_.state();
}

GlobalFilter::GlobalFilter(GlobalFilterConfig config) : ekf_(Frame::Global, config.filter) {}

void GlobalFilter::initialize(const StateEstimate& initial) { ekf_.initialize(initial); }

StateEstimate GlobalFilter::step(double stamp, const Measurement& local_twist,
                                 const std::optional<Measurement>& orientation, std::span<const Measurement> fixes) {
  ekf_.predict_to(stamp);
  ekf_.process(local_twist);
  if (orientation) ekf_.process(*orientation);
  ekf_.process_batch(std::vector<Measurement>(fixes.begin(), fixes.end()));
  return ekf_.state();
}

Measurement local_twist_measurement(const StateEstimate& local) {
  constexpr int n = kStateSize - kVx;
  Measurement m;
  m.values = local.mean.tail<n>();
  m.mask.resize(n);
  for (int i = 0; i < n; ++i) m.mask[i] = kVx + i;
  m.covariance = local.covariance.bottomRightCorner<n, n>();
  m.stamp = local.stamp;
  m.source = "local_twist";
  return m;
}

DualEstimator::DualEstimator(LocalFilterConfig local, GlobalFilterConfig global, const SlipPolicy& slip_policy)
    : local_(std::move(local), slip_policy), global_(std::move(global)) {}

void DualEstimator::initialize(const StateEstimate& initial_local, const StateEstimate& initial_global) {
  local_.initialize(initial_local);
  global_.initialize(initial_global);
  local_to_global_ = compose(global_.state().pose(), inverse(local_.state().pose()));
}

StateEstimate DualEstimator::step_local(double stamp, std::span<const Measurement> imu,
                                        const std::optional<Measurement>& ins,
                                        const std::optional<Measurement>& wheel) {
  return local_.step(stamp, imu, ins, wheel);
}

StateEstimate DualEstimator::step_global(const std::optional<Measurement>& orientation,
                                         std::span<const Measurement> fixes) {
  const StateEstimate& local = local_.state();
  global_.step(local.stamp, local_twist_measurement(local), orientation, fixes);
  local_to_global_ = compose(global_.state().pose(), inverse(local.pose()));
  return global_.state();
}

}  // namespace traels
