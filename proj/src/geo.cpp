#include "traels/geo.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace traels {

namespace {
constexpr double kGimbalLimit = 89.9 * std::numbers::pi / 180.0;
}

std::string_view to_string(Frame frame) {
  switch (frame) {
    case Frame::Local: return "L";
    case Frame::Global: return "G";
    case Frame::Utm: return "UTM";
    case Frame::Vehicle: return "V";
  }
  return "?";
}

Frame frame_from_string(std::string_view name) {
  if (name == "L") return Frame::Local;
  if (name == "G") return Frame::Global;
  if (name == "UTM") return Frame::Utm;
  if (name == "V") return Frame::Vehicle;
  throw std::invalid_argument("unknown frame tag '" + std::string(name) + "'");
}

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle, two_pi);
  if (wrapped <= -std::numbers::pi) wrapped += two_pi;
  if (wrapped > std::numbers::pi) wrapped -= two_pi;
  return wrapped;
}

Eigen::Matrix3d rotation_from_rpy(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Vector3d rpy_from_rotation(const Eigen::Matrix3d& r) {
  const double pitch = std::atan2(-r(2, 0), std::hypot(r(0, 0), r(1, 0)));
  if (std::abs(pitch) > kGimbalLimit) {
    throw DegenerateOrientation("pitch within 0.1 deg of +-90 deg");
  }
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)};
}

Pose6D Pose6D::from_xyz_rpy(double x, double y, double z, double roll, double pitch, double yaw) {
  Pose6D p;
  p.position = {x, y, z};
  p.rpy = {wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)};
  return p;
}

Pose6D Pose6D::from_isometry(const Eigen::Isometry3d& iso) {
  Pose6D p;
  p.position = iso.translation();
  p.rpy = rpy_from_rotation(iso.linear());
  return p;
}

Eigen::Matrix3d Pose6D::rotation() const { return rotation_from_rpy(rpy); }

Eigen::Isometry3d Pose6D::isometry() const {
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.linear() = rotation();
  iso.translation() = position;
  return iso;
}

Eigen::Vector3d Pose6D::transform_point(const Eigen::Vector3d& point) const {
  return rotation() * point + position;
}

Pose6D compose(const Pose6D& a, const Pose6D& b) {
  const Eigen::Matrix3d ra = a.rotation();
  Pose6D out;
  out.position = a.position + ra * b.position;
  out.rpy = rpy_from_rotation(ra * b.rotation());
  return out;
}

Pose6D inverse(const Pose6D& pose) {
  const Eigen::Matrix3d rt = pose.rotation().transpose();
  Pose6D out;
  out.position = -rt * pose.position;
  out.rpy = rpy_from_rotation(rt);
  return out;
}

Pose6D interpolate(const Pose6D& a, const Pose6D& b, double fraction) {
  Pose6D out;
  out.position = a.position + fraction * (b.position - a.position);
  for (int i = 0; i < 3; ++i) {
    out.rpy[i] = wrap_angle(a.rpy[i] + fraction * wrap_angle(b.rpy[i] - a.rpy[i]));
  }
  return out;
}

GridAnchor::GridAnchor(double easting, double northing, double altitude, double heading)
    : easting_(easting),
      northing_(northing),
      altitude_(altitude),
      heading_(wrap_angle(heading)),
      initialized_(true) {}

Pose6D GridAnchor::as_pose() const {
  return Pose6D::from_xyz_rpy(easting_, northing_, altitude_, 0.0, 0.0, heading_);
}

Pose6D anchor_to_utm(const Pose6D& global_pose, const GridAnchor& anchor) {
  if (!anchor.initialized()) throw UninitializedAnchor("grid anchor not initialized");
  return compose(anchor.as_pose(), global_pose);
}

Pose6D utm_to_anchor(const Pose6D& utm_pose, const GridAnchor& anchor) {
  if (!anchor.initialized()) throw UninitializedAnchor("grid anchor not initialized");
  return compose(inverse(anchor.as_pose()), utm_pose);
}

}  // namespace traels
