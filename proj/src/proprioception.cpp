#include "traels/proprioception.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <utility>

namespace traels {

void SlipPolicy::validate() const {
  if (thresholds.size() != inflation_factors.size()) {
    throw std::invalid_argument("slip policy thresholds and factors differ in length");
  }
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (i > 0 && thresholds[i] <= thresholds[i - 1]) {
      throw std::invalid_argument("slip policy thresholds must be strictly ascending");
    }
    if (inflation_factors[i] < 1.0 || (i > 0 && inflation_factors[i] < inflation_factors[i - 1])) {
      throw std::invalid_argument("slip policy factors must be >= 1 and non-decreasing");
    }
  }
  const double largest = inflation_factors.empty() ? 1.0 : inflation_factors.back();
  if (max_inflation < largest) throw std::invalid_argument("slip policy cap below its largest factor");
}

double wheel_covariance(double speed, double acceleration, const WheelNoiseModel& model) {
  if (!(model.a > 0.0) || model.b < 0.0 || model.c < 0.0) {
    throw std::invalid_argument("wheel covariance constants need a > 0 and b, c >= 0");
  }
  const double radicand = model.a + model.b * std::abs(speed) + model.c * std::abs(acceleration);
  if (!(radicand > 0.0) || !std::isfinite(radicand)) {
    throw std::invalid_argument("wheel covariance radicand is not positive");
  }
  return radicand;
}

double slip_gate(double distance, double base_variance, const SlipPolicy& policy) {
  double factor = 1.0;
  for (std::size_t i = 0; i < policy.thresholds.size(); ++i) {
    if (distance > policy.thresholds[i]) factor = policy.inflation_factors[i];
  }
  return base_variance * std::min(factor, policy.max_inflation);
}

double estimate_sensor_covariance(std::span<const double> samples, double offset) {
  if (samples.size() < 2) throw std::invalid_argument("covariance estimate needs at least two samples");
  double sum = 0.0;
  for (double s : samples) sum += (s - offset) * (s - offset);
  return sum / static_cast<double>(samples.size() - 1);
}

namespace {

// Rotation R minimizing sum |R a_k - b_k|^2.
Eigen::Matrix3d align_vectors(const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>>& pairs) {
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (const auto& [a, b] : pairs) h += b * a.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

}  // namespace

CalibrationReport calibrate_mount_and_wheel(std::span<const CalibrationRow> log, const CalibrationLimits& limits) {
  if (log.size() < 3) throw CalibrationError("calibration log too short");

  constexpr double kTurnRate = 0.01;    // rad/s, below: driving straight
  constexpr double kStillSpeed = 0.05;  // m/s, below: turning in place
  double straight_true = 0.0;
  double straight_encoder = 0.0;
  double rotation = 0.0;
  std::vector<std::size_t> cruise;
  for (std::size_t k = 1; k < log.size(); ++k) {
    const CalibrationRow& prev = log[k - 1];
    const CalibrationRow& cur = log[k];
    const double dt = cur.stamp - prev.stamp;
    if (dt <= 0.0) throw CalibrationError("calibration log stamps not increasing");
    const double step = (cur.true_position - prev.true_position).head<2>().norm();
    const double dyaw = wrap_angle(cur.true_yaw - prev.true_yaw);
    const double speed = step / dt;
    if (std::abs(dyaw) / dt < kTurnRate && speed > kStillSpeed) {
      straight_true += step;
      straight_encoder += 0.5 * (cur.encoder_speed + prev.encoder_speed) * dt;
      if (std::abs(cur.true_specific_force.x()) < 0.05) cruise.push_back(k);
    } else if (speed < kStillSpeed) {
      rotation += std::abs(dyaw);
    }
  }
  if (straight_true < limits.min_straight_distance) {
    throw CalibrationError("insufficient excitation: straight segment of " + std::to_string(straight_true) +
                           " m, need " + std::to_string(limits.min_straight_distance) + " m");
  }
  if (rotation < limits.min_rotation) {
    throw CalibrationError("insufficient excitation: in-place rotation below one turn");
  }
  if (straight_encoder <= 0.0) throw CalibrationError("encoder reported no forward motion");

  CalibrationReport report;
  report.wheel_scale = straight_true / straight_encoder;
  if (!(report.wheel_scale > 0.8 && report.wheel_scale < 1.2)) {
    throw CalibrationError("wheel scale " + std::to_string(report.wheel_scale) + " outside (0.8, 1.2)");
  }

  // Alternate rotation alignment and offset estimation; offsets are in the
  // vehicle frame.
  Eigen::Matrix3d mount = Eigen::Matrix3d::Identity();
  Eigen::Vector3d accel_offset = Eigen::Vector3d::Zero();
  Eigen::Vector3d gyro_offset = Eigen::Vector3d::Zero();
  for (int iter = 0; iter < 3; ++iter) {
    std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;
    pairs.reserve(2 * log.size());
    const Eigen::Matrix3d inv = mount.transpose();
    for (const auto& row : log) {
      pairs.emplace_back(row.imu_specific_force - inv * accel_offset, row.true_specific_force);
      pairs.emplace_back(row.imu_angular_velocity - inv * gyro_offset, row.true_angular_velocity);
    }
    mount = align_vectors(pairs);

    if (cruise.size() < 2) break;
    Eigen::Vector3d acc_sum = Eigen::Vector3d::Zero(), gyr_sum = Eigen::Vector3d::Zero();
    for (std::size_t k : cruise) {
      acc_sum += mount * log[k].imu_specific_force - log[k].true_specific_force;
      gyr_sum += mount * log[k].imu_angular_velocity - log[k].true_angular_velocity;
    }
    accel_offset = acc_sum / static_cast<double>(cruise.size());
    gyro_offset = gyr_sum / static_cast<double>(cruise.size());
  }
  report.mount.rpy = rpy_from_rotation(mount);
  report.accel_offset = accel_offset;
  report.gyro_offset = gyro_offset;

  if (cruise.size() < 2) throw CalibrationError("no constant-velocity samples for covariance estimation");
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> acc, gyr;
    acc.reserve(cruise.size());
    gyr.reserve(cruise.size());
    for (std::size_t k : cruise) {
      acc.push_back((mount * log[k].imu_specific_force - log[k].true_specific_force)[axis]);
      gyr.push_back((mount * log[k].imu_angular_velocity - log[k].true_angular_velocity)[axis]);
    }
    report.accel_variance[axis] = std::max(estimate_sensor_covariance(acc, accel_offset[axis]), 1e-12);
    report.gyro_variance[axis] = std::max(estimate_sensor_covariance(gyr, gyro_offset[axis]), 1e-12);
  }
  return report;
}

Measurement imu_measurement(const ImuSample& sample, const Eigen::Matrix3d& mount_rotation, const ImuNoise& noise,
                            const StateEstimate& state, std::string source) {
  const Eigen::Matrix3d attitude = rotation_from_rpy(state.mean.segment<3>(kRoll));
  const Eigen::Vector3d gravity_world(0.0, 0.0, -kGravity);
  const Eigen::Vector3d specific_force = mount_rotation * sample.specific_force;
  const Eigen::Vector3d kinematic = specific_force + attitude.transpose() * gravity_world;
  const Eigen::Vector3d transport = state.angular_velocity().cross(state.linear_velocity());

  Measurement m;
  m.values = kinematic - transport;
  m.mask = {kAx, kAy, kAz};
  m.covariance = noise.accel_variance.asDiagonal();
  m.stamp = sample.stamp;
  m.source = std::move(source);
  return m;
}

Measurement ins_measurement(const InsSample& sample, double yaw_correction, const InsNoise& noise) {
  Measurement m;
  m.values.resize(6);
  m.values << sample.rpy.x(), sample.rpy.y(), wrap_angle(sample.rpy.z() + yaw_correction),
      sample.angular_velocity;
  m.mask = {kRoll, kPitch, kYaw, kWx, kWy, kWz};
  m.covariance = MeasMatrix::Zero(6, 6);
  m.covariance.diagonal().head<3>() = noise.attitude_variance;
  m.covariance.diagonal().tail<3>() = noise.rate_variance;
  m.stamp = sample.stamp;
  m.source = "ins";
  return m;
}

Measurement ins_attitude_measurement(const InsSample& sample, double yaw_correction, const InsNoise& noise) {
  Measurement m;
  m.values.resize(3);
  m.values << sample.rpy.x(), sample.rpy.y(), wrap_angle(sample.rpy.z() + yaw_correction);
  m.mask = {kRoll, kPitch, kYaw};
  m.covariance = noise.attitude_variance.asDiagonal();
  m.stamp = sample.stamp;
  m.source = "ins_attitude";
  return m;
}

Measurement wheel_measurement(const WheelOdom& odom, double wheel_scale, const WheelNoiseModel& model,
                              const StateEstimate& state) {
  Measurement m;
  m.values.resize(1);
  m.values[0] = wheel_scale * odom.forward_speed;
  m.mask = {kVx};
  m.covariance.resize(1, 1);
  m.covariance(0, 0) = wheel_covariance(state.mean[kVx], state.mean[kAx], model);
  m.stamp = odom.stamp;
  m.source = "wheel";
  return m;
}

Measurement zero_velocity_measurement(double stamp, double sigma) {
  Measurement m;
  m.values = MeasVector::Zero(2);
  m.mask = {kVy, kVz};
  m.covariance = MeasMatrix::Identity(2, 2) * (sigma * sigma);
  m.stamp = stamp;
  m.source = "zero_velocity";
  return m;
}

}  // namespace traels
