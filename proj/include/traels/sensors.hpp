#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

namespace traels {

/// Raw accelerometer (specific force) and gyro sample in the IMU frame.
struct ImuSample {
  double stamp = 0.0;
  Eigen::Vector3d specific_force = Eigen::Vector3d::Zero();
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();
};

/// Gyro-compassing INS output: attitude and body rates.
struct InsSample {
  double stamp = 0.0;
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();
};

/// Body-frame forward speed derived from encoder counts.
struct WheelOdom {
  double stamp = 0.0;
  double forward_speed = 0.0;
};

struct ColorPoint {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  std::array<std::uint8_t, 3> rgb{};
};

/// Colorized point cloud in the vehicle frame.
struct Scan {
  double stamp = 0.0;
  std::vector<ColorPoint> points;
};

}  // namespace traels
