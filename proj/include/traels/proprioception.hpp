#pragma once

#include "traels/estimator.hpp"
#include "traels/geo.hpp"
#include "traels/sensors.hpp"

#include <Eigen/Core>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace traels {

inline constexpr double kGravity = 9.80665;

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tuning constants of the speed/acceleration dependent wheel covariance.
struct WheelNoiseModel {
  double a = 0.01;
  double b = 0.005;
  double c = 0.002;
};

/// Step-wise inflation of the wheel covariance as its Mahalanobis distance
/// to the state grows.
struct SlipPolicy {
  std::vector<double> thresholds{2.0, 4.0, 6.0};
  std::vector<double> inflation_factors{10.0, 100.0, 1000.0};
  double max_inflation = 1000.0;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

/// Wheel velocity variance, (a + b|v| + c|acc|).
double wheel_covariance(double speed, double acceleration, const WheelNoiseModel& model);

/// Inflated variance for a wheel measurement at Mahalanobis distance d.
double slip_gate(double distance, double base_variance, const SlipPolicy& policy);

/// Sum of squared offset-adjusted samples over N - 1.
double estimate_sensor_covariance(std::span<const double> samples, double offset);

struct CalibrationReport {
  Eigen::Vector3d gyro_offset = Eigen::Vector3d::Zero();
  Eigen::Vector3d accel_offset = Eigen::Vector3d::Zero();
  Eigen::Vector3d gyro_variance = Eigen::Vector3d::Zero();
  Eigen::Vector3d accel_variance = Eigen::Vector3d::Zero();
  Pose6D mount;  // rotation only, IMU -> vehicle
  double wheel_scale = 1.0;
};

/// One row of a calibration drive: IMU and encoder readings alongside the
/// externally measured truth.
struct CalibrationRow {
  double stamp = 0.0;
  Eigen::Vector3d true_position = Eigen::Vector3d::Zero();
  double true_yaw = 0.0;
  Eigen::Vector3d true_specific_force = Eigen::Vector3d::Zero();  // vehicle frame
  Eigen::Vector3d true_angular_velocity = Eigen::Vector3d::Zero();  // vehicle frame
  Eigen::Vector3d imu_specific_force = Eigen::Vector3d::Zero();  // IMU frame
  Eigen::Vector3d imu_angular_velocity = Eigen::Vector3d::Zero();  // IMU frame
  double encoder_speed = 0.0;
};

struct CalibrationLimits {
  double min_straight_distance = 50.0;   // m
  double min_rotation = 2.0 * 3.141592653589793;  // rad
};

/// Wheel scale from the distance ratio; mount rotation from aligning the
/// measured specific force and rate vectors to their truth counterparts.
CalibrationReport calibrate_mount_and_wheel(std::span<const CalibrationRow> log,
                                            const CalibrationLimits& limits = {});

struct ImuNoise {
  Eigen::Vector3d accel_variance = Eigen::Vector3d::Constant(0.02 * 0.02);
};

struct InsNoise {
  Eigen::Vector3d attitude_variance = Eigen::Vector3d::Constant(1e-6);
  Eigen::Vector3d rate_variance = Eigen::Vector3d::Constant(1e-6);
};

/// Linear acceleration measurement from one IMU. Gravity is removed with
/// the current attitude estimate and the transport term w x v is removed
/// so the result matches the model's vehicle-frame velocity derivative.
Measurement imu_measurement(const ImuSample& sample, const Eigen::Matrix3d& mount_rotation,
                            const ImuNoise& noise, const StateEstimate& state, std::string source);

/// Attitude and rate measurement, with the yaw bias correction added.
Measurement ins_measurement(const InsSample& sample, double yaw_correction, const InsNoise& noise);

/// Attitude-only variant of ins_measurement.
Measurement ins_attitude_measurement(const InsSample& sample, double yaw_correction, const InsNoise& noise);

Measurement wheel_measurement(const WheelOdom& odom, double wheel_scale, const WheelNoiseModel& model,
                              const StateEstimate& state);

/// Zero-valued lateral and vertical velocity pseudo-measurement.
Measurement zero_velocity_measurement(double stamp, double sigma);

}  // namespace traels
