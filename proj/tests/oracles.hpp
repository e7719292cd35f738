#pragma once

// Independent reference implementations used to check the library.

#include "traels/atlis.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <vector>

namespace oracle {

/// Textbook linear Kalman filter with dynamic-size matrices.
struct LinearKf {
  Eigen::VectorXd x;
  Eigen::MatrixXd p;

  void predict(const Eigen::MatrixXd& f, const Eigen::MatrixXd& q) {
    x = f * x;
    p = f * p * f.transpose() + q;
  }
  void update(const Eigen::MatrixXd& h, const Eigen::VectorXd& z, const Eigen::MatrixXd& r) {
    const Eigen::MatrixXd s = h * p * h.transpose() + r;
    const Eigen::MatrixXd k = p * h.transpose() * s.inverse();
    x = x + k * (z - h * x);
    p = (Eigen::MatrixXd::Identity(x.size(), x.size()) - k * h) * p;
  }
};

/// Direct double loop over all integer offsets.
inline traels::CorrelationSurface brute_force_ncc(const traels::RasterPatch& t, const traels::RasterPatch& m,
                                                  double min_overlap) {
  traels::CorrelationSurface s;
  s.rows = m.rows - t.rows + 1;
  s.cols = m.cols - t.cols + 1;
  s.cell_size = m.cell_size;
  s.origin = m.origin - t.origin;
  s.scores.assign(static_cast<std::size_t>(s.rows) * s.cols, -std::numeric_limits<double>::infinity());
  const double need = min_overlap * static_cast<double>(t.valid_count());
  for (int dr = 0; dr < s.rows; ++dr) {
    for (int dc = 0; dc < s.cols; ++dc) {
      std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;
      for (int r = 0; r < t.rows; ++r) {
        for (int c = 0; c < t.cols; ++c) {
          if (!t.is_valid(r, c) || !m.is_valid(r + dr, c + dc)) continue;
          pairs.emplace_back(t.color[t.index(r, c)].cast<double>(), m.color[m.index(r + dr, c + dc)].cast<double>());
        }
      }
      const double k = static_cast<double>(pairs.size());
      if (pairs.empty() || k < need) continue;
      Eigen::Vector3d tm = Eigen::Vector3d::Zero(), mm = Eigen::Vector3d::Zero();
      for (const auto& [a, b] : pairs) {
        tm += a;
        mm += b;
      }
      tm /= k;
      mm /= k;
      double num = 0.0, vt = 0.0, vm = 0.0;
      for (const auto& [a, b] : pairs) {
        num += (a - tm).dot(b - mm);
        vt += (a - tm).squaredNorm();
        vm += (b - mm).squaredNorm();
      }
      double score = 0.0;
      if (vt > 1e-9 * k && vm > 1e-9 * k) score = std::clamp(num / std::sqrt(vt * vm), -1.0, 1.0);
      s.at(dr, dc) = score;
    }
  }
  return s;
}

/// Per-cell sample mean and covariance (N - 1), keyed by floor(p / cell).
struct CellStats {
  Eigen::Vector3d mean;
  Eigen::Matrix3d covariance;
  std::size_t count;
};

inline std::map<std::tuple<int, int, int>, CellStats> cell_statistics(const std::vector<Eigen::Vector3d>& points,
                                                                       double cell) {
  std::map<std::tuple<int, int, int>, std::vector<Eigen::Vector3d>> groups;
  for (const auto& p : points) {
    groups[{static_cast<int>(std::floor(p.x() / cell)), static_cast<int>(std::floor(p.y() / cell)),
            static_cast<int>(std::floor(p.z() / cell))}]
        .push_back(p);
  }
  std::map<std::tuple<int, int, int>, CellStats> out;
  for (const auto& [key, pts] : groups) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
    if (pts.size() > 1) cov /= static_cast<double>(pts.size() - 1);
    out[key] = {mean, cov, pts.size()};
  }
  return out;
}

}  // namespace oracle
