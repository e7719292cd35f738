#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string_view>

namespace traels {

/// Frame that a stamped quantity is expressed in.
enum class Frame { Local, Global, Utm, Vehicle };

std::string_view to_string(Frame frame);
Frame frame_from_string(std::string_view name);

/// Raised when an orientation is too close to pitch = +-90 deg to be
/// represented with Z-Y-X Euler angles without losing precision.
class DegenerateOrientation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// Rigid pose: position in meters and intrinsic Z-Y-X (yaw, pitch, roll)
/// orientation in radians, stored as (roll, pitch, yaw).
struct Pose6D {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();

  static Pose6D identity() { return {}; }
  static Pose6D from_xyz_rpy(double x, double y, double z, double roll, double pitch, double yaw);
  static Pose6D from_isometry(const Eigen::Isometry3d& iso);

  double roll() const { return rpy.x(); }
  double pitch() const { return rpy.y(); }
  double yaw() const { return rpy.z(); }

  Eigen::Matrix3d rotation() const;
  Eigen::Isometry3d isometry() const;

  /// Maps a point expressed in this pose's child frame into the parent frame.
  Eigen::Vector3d transform_point(const Eigen::Vector3d& point) const;
};

Eigen::Matrix3d rotation_from_rpy(double roll, double pitch, double yaw);
inline Eigen::Matrix3d rotation_from_rpy(const Eigen::Vector3d& rpy) {
  return rotation_from_rpy(rpy.x(), rpy.y(), rpy.z());
}

/// Recovers (roll, pitch, yaw). Throws DegenerateOrientation when
/// |pitch| > 89.9 deg.
Eigen::Vector3d rpy_from_rotation(const Eigen::Matrix3d& rotation);

/// a ∘ b: applies b first, then a.
Pose6D compose(const Pose6D& a, const Pose6D& b);
Pose6D inverse(const Pose6D& pose);

/// Linear interpolation of position and shortest-arc interpolation of
/// each Euler angle. Only meant for closely spaced samples.
Pose6D interpolate(const Pose6D& a, const Pose6D& b, double fraction);

/// Static planar-plus-altitude transform from the global frame G to the
/// UTM grid. A default-constructed anchor is uninitialized.
class GridAnchor {
 public:
  GridAnchor() = default;
  GridAnchor(double easting, double northing, double altitude, double heading);

  bool initialized() const { return initialized_; }
  double easting() const { return easting_; }
  double northing() const { return northing_; }
  double altitude() const { return altitude_; }
  double heading() const { return heading_; }

  Pose6D as_pose() const;

 private:
  double easting_ = 0.0;
  double northing_ = 0.0;
  double altitude_ = 0.0;
  double heading_ = 0.0;
  bool initialized_ = false;
};

class UninitializedAnchor : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

Pose6D anchor_to_utm(const Pose6D& global_pose, const GridAnchor& anchor);
Pose6D utm_to_anchor(const Pose6D& utm_pose, const GridAnchor& anchor);

}  // namespace traels
