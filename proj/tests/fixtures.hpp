#pragma once

// Synthetic geometry shared by the registration tests.

#include "traels/geo.hpp"

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace fixture {

struct Wall {
  Eigen::Vector2d a, b;
  double height;
};

struct Pole {
  Eigen::Vector2d center;
  double radius, height;
};

struct Scene {
  std::vector<Wall> walls;
  std::vector<Pole> poles;

  /// Random surface samples at roughly `density` points per square meter.
  std::vector<Eigen::Vector3d> sample(double density, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Eigen::Vector3d> out;
    for (const auto& w : walls) {
      const double area = (w.b - w.a).norm() * w.height;
      const int n = static_cast<int>(area * density);
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d xy = w.a + u(rng) * (w.b - w.a);
        out.emplace_back(xy.x(), xy.y(), u(rng) * w.height);
      }
    }
    for (const auto& p : poles) {
      const double area = 2.0 * std::numbers::pi * p.radius * p.height;
      const int n = static_cast<int>(area * density);
      for (int i = 0; i < n; ++i) {
        const double t = 2.0 * std::numbers::pi * u(rng);
        out.emplace_back(p.center.x() + p.radius * std::cos(t), p.center.y() + p.radius * std::sin(t),
                         u(rng) * p.height);
      }
    }
    return out;
  }
};

/// Boxes and poles scattered around the origin.
inline Scene cluttered(std::uint64_t seed, double half_size = 25.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-half_size, half_size), size(1.0, 4.0), ang(0.0, std::numbers::pi),
      h(2.0, 6.0);
  Scene s;
  for (int i = 0; i < 14; ++i) {
    const Eigen::Vector2d c(pos(rng), pos(rng));
    const double hx = size(rng), hy = size(rng), yaw = ang(rng), height = h(rng);
    const Eigen::Rotation2Dd r(yaw);
    const Eigen::Vector2d k[4] = {c + r * Eigen::Vector2d(-hx, -hy), c + r * Eigen::Vector2d(hx, -hy),
                                  c + r * Eigen::Vector2d(hx, hy), c + r * Eigen::Vector2d(-hx, hy)};
    for (int j = 0; j < 4; ++j) s.walls.push_back({k[j], k[(j + 1) % 4], height});
  }
  for (int i = 0; i < 20; ++i) s.poles.push_back({Eigen::Vector2d(pos(rng), pos(rng)), 0.2 + 0.2 * size(rng), h(rng)});
  return s;
}

/// Two parallel walls 8 m apart along x.
inline Scene corridor(double length = 80.0) {
  Scene s;
  s.walls.push_back({Eigen::Vector2d(-length / 2, 4.0), Eigen::Vector2d(length / 2, 4.0), 3.0});
  s.walls.push_back({Eigen::Vector2d(-length / 2, -4.0), Eigen::Vector2d(length / 2, -4.0), 3.0});
  return s;
}

/// World points within `range` of the pose, expressed in its frame, with
/// isotropic noise.
inline std::vector<Eigen::Vector3d> scan_from(const std::vector<Eigen::Vector3d>& world, const traels::Pose6D& pose,
                                              double range, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, noise);
  const traels::Pose6D inv = traels::inverse(pose);
  std::vector<Eigen::Vector3d> out;
  for (const auto& p : world) {
    if ((p - pose.position).head<2>().norm() > range) continue;
    out.push_back(inv.transform_point(p) + Eigen::Vector3d(n(rng), n(rng), n(rng)));
  }
  return out;
}

}  // namespace fixture
