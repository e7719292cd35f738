#include "traels/geo.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace traels;

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

Eigen::Matrix3d rx(double a) {
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}
Eigen::Matrix3d ry(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}
Eigen::Matrix3d rz(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}
}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
  CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(1.5 * kPi) == doctest::Approx(-0.5 * kPi));
  CHECK(wrap_angle(181.0 * kDeg) == doctest::Approx(-179.0 * kDeg));
  CHECK(wrap_angle(-7.0 * kPi + 0.25) == doctest::Approx(-kPi + 0.25));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double w = wrap_angle(a);
    CHECK(w > -kPi);
    CHECK(w <= kPi);
    CHECK(std::abs(std::remainder(a - w, 2.0 * kPi)) < 1e-9);
  }
}

TEST_CASE("rotation follows the Z-Y-X convention") {
  const double roll = 0.3, pitch = -0.4, yaw = 2.1;
  const Eigen::Matrix3d expected = rz(yaw) * ry(pitch) * rx(roll);
  CHECK((rotation_from_rpy(roll, pitch, yaw) - expected).norm() < 1e-12);
  // Yaw of 90 deg maps the vehicle x axis onto the frame y axis.
  const Eigen::Vector3d fwd = rotation_from_rpy(0, 0, 90 * kDeg) * Eigen::Vector3d::UnitX();
  CHECK((fwd - Eigen::Vector3d::UnitY()).norm() < 1e-12);
}

TEST_CASE("rpy round trip and gimbal guard") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(-kPi, kPi), pit(-89.0 * kDeg, 89.0 * kDeg);
  for (int i = 0; i < 500; ++i) {
    const Eigen::Vector3d rpy(ang(rng), pit(rng), ang(rng));
    const Eigen::Vector3d back = rpy_from_rotation(rotation_from_rpy(rpy));
    for (int k = 0; k < 3; ++k) CHECK(std::abs(wrap_angle(back[k] - rpy[k])) < 1e-9);
  }
  CHECK_THROWS_AS(rpy_from_rotation(rotation_from_rpy(0.1, 89.95 * kDeg, 0.2)), DegenerateOrientation);
  CHECK_THROWS_AS(rpy_from_rotation(rotation_from_rpy(0.0, -90.0 * kDeg, 0.0)), DegenerateOrientation);
  CHECK_NOTHROW(rpy_from_rotation(rotation_from_rpy(0.0, 89.8 * kDeg, 0.0)));
}

TEST_CASE("compose and inverse agree with isometries") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(-100.0, 100.0), ang(-1.2, 1.2);
  for (int i = 0; i < 200; ++i) {
    const Pose6D a = Pose6D::from_xyz_rpy(pos(rng), pos(rng), pos(rng), ang(rng), ang(rng), ang(rng) * 2.5);
    const Pose6D b = Pose6D::from_xyz_rpy(pos(rng), pos(rng), pos(rng), ang(rng), ang(rng), ang(rng) * 2.5);
    const Eigen::Isometry3d ab = a.isometry() * b.isometry();
    const Pose6D c = compose(a, b);
    CHECK((c.isometry().matrix() - ab.matrix()).norm() < 1e-9);
    const Pose6D id = compose(a, inverse(a));
    CHECK(id.position.norm() < 1e-9);
    CHECK(id.rpy.norm() < 1e-9);
    const Eigen::Vector3d p(pos(rng), pos(rng), pos(rng));
    CHECK((a.transform_point(p) - a.isometry() * p).norm() < 1e-9);
    CHECK((Pose6D::from_isometry(a.isometry()).isometry().matrix() - a.isometry().matrix()).norm() < 1e-12);
  }
}

TEST_CASE("interpolate takes the short way round") {
  const Pose6D a = Pose6D::from_xyz_rpy(0, 0, 0, 0, 0, 179 * kDeg);
  const Pose6D b = Pose6D::from_xyz_rpy(2, 0, 0, 0, 0, -179 * kDeg);
  const Pose6D m = interpolate(a, b, 0.5);
  CHECK(m.position.x() == doctest::Approx(1.0));
  CHECK(std::abs(m.yaw()) == doctest::Approx(kPi));
}

TEST_CASE("frame tags") {
  for (Frame f : {Frame::Local, Frame::Global, Frame::Utm, Frame::Vehicle}) {
    CHECK(frame_from_string(to_string(f)) == f);
  }
  CHECK(to_string(Frame::Global) == "G");
  CHECK_THROWS_AS(frame_from_string("ECEF"), std::invalid_argument);
}

TEST_CASE("grid anchor") {
  const GridAnchor none;
  CHECK_FALSE(none.initialized());
  CHECK_THROWS_AS(anchor_to_utm(Pose6D{}, none), UninitializedAnchor);
  CHECK_THROWS_AS(utm_to_anchor(Pose6D{}, none), UninitializedAnchor);

  const GridAnchor anchor(500000.0, 4649776.0, 120.0, 30 * kDeg);
  const Pose6D g = Pose6D::from_xyz_rpy(10.0, 0.0, 1.0, 0.0, 0.0, 0.1);
  const Pose6D u = anchor_to_utm(g, anchor);
  CHECK(u.position.x() == doctest::Approx(500000.0 + 10.0 * std::cos(30 * kDeg)));
  CHECK(u.position.y() == doctest::Approx(4649776.0 + 10.0 * std::sin(30 * kDeg)));
  CHECK(u.position.z() == doctest::Approx(121.0));
  CHECK(u.yaw() == doctest::Approx(0.1 + 30 * kDeg));
  const Pose6D back = utm_to_anchor(u, anchor);
  CHECK((back.position - g.position).norm() < 1e-6);
  CHECK(std::abs(wrap_angle(back.yaw() - g.yaw())) < 1e-12);
}
