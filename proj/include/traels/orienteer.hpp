#pragma once

#include "traels/geo.hpp"
#include "traels/trn.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace traels {

class NdtError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

struct NdtCell {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();  // regularized
  Eigen::Matrix3d inverse = Eigen::Matrix3d::Identity();
  std::size_t count = 0;
};

/// Voxel grid of per-cell Gaussians.
class NdtGrid {
 public:
  NdtGrid() = default;
  explicit NdtGrid(double cell_size) : cell_size_(cell_size) {}

  double cell_size() const { return cell_size_; }
  std::size_t size() const { return cells_.size(); }
  Eigen::Vector3i key_of(const Eigen::Vector3d& point) const;
  const NdtCell* find(const Eigen::Vector3i& key) const;
  const std::unordered_map<std::int64_t, NdtCell>& cells() const { return cells_; }

  static std::int64_t pack(const Eigen::Vector3i& key);

 private:
  friend NdtGrid build_grid(std::span<const Eigen::Vector3d>, double, std::size_t, double);
  double cell_size_ = 1.0;
  std::unordered_map<std::int64_t, NdtCell> cells_;
};

/// Cells with fewer than `min_points` are dropped; covariance eigenvalues
/// are raised to at least `min_eigen_ratio` times the largest.
NdtGrid build_grid(std::span<const Eigen::Vector3d> points, double cell_size, std::size_t min_points = 5,
                   double min_eigen_ratio = 0.01);

struct NdtConfig {
  double outlier_ratio = 0.55;
  int max_iterations = 30;
  double gradient_tolerance = 1e-6;  // per scan point
  double step_tolerance = 1e-8;
  double min_overlap = 0.1;
  bool face_neighbors_only = true;   // 7-cell lookup instead of 27
  std::size_t max_points = 50000;
};

struct NdtResult {
  Pose6D pose;                  // scan-to-global transform
  double q_s = 0.0;             // score per scan point
  Matrix6d inv_hessian = Matrix6d::Zero();
  Vector6d eigenvalues = Vector6d::Zero();  // of inv_hessian, ascending
  Matrix6d eigenvectors = Matrix6d::Identity();
  int iterations = 0;
  bool converged = false;
  double overlap = 0.0;         // fraction of points near an occupied cell
  std::size_t points = 0;
};

/// Gaussian mixture constants (d1, d2) for the outlier-robust score.
Eigen::Vector2d ndt_score_constants(double outlier_ratio, double cell_size);

/// Score of the transformed scan; exposed for diagnostics and oracles.
double ndt_score(std::span<const Eigen::Vector3d> scan, const Pose6D& pose, const NdtGrid& grid,
                 const NdtConfig& config = {});

/// Newton ascent on the NDT score with backtracking. The returned inverse
/// Hessian is the inverse of the negated score Hessian at the optimum.
NdtResult register_scan(std::span<const Eigen::Vector3d> scan, const Pose6D& initial, const NdtGrid& grid,
                        const NdtConfig& config = {});

/// Interface for swapping in other scan-to-map aligners.
class AlignmentBackend {
 public:
  virtual ~AlignmentBackend() = default;
  virtual NdtResult align(std::span<const Eigen::Vector3d> scan, const Pose6D& initial) const = 0;
};

class NdtBackend : public AlignmentBackend {
 public:
  NdtBackend(NdtGrid grid, NdtConfig config) : grid_(std::move(grid)), config_(config) {}
  NdtResult align(std::span<const Eigen::Vector3d> scan, const Pose6D& initial) const override;
  const NdtGrid& grid() const { return grid_; }

 private:
  NdtGrid grid_;
  NdtConfig config_;
};

/// FIFO window of recent per-point scores.
class ScoreTracker {
 public:
  explicit ScoreTracker(std::size_t window = 10);
  void push(double q_s);
  bool empty() const { return scores_.empty(); }
  std::size_t size() const { return scores_.size(); }
  /// Throws std::logic_error when empty.
  double mean() const;

 private:
  std::size_t window_;
  std::deque<double> scores_;
};

struct CovarianceScaling {
  double a = 5.0;
  double b = 1.0;
  double floor = 1e-4;
  double cap = 1e2;
};

/// A = logistic(a (Q_s - mean Q_s)), B = b Q_H^2, covariance
/// V diag(lambda_i^2 / (A B)) V^T with eigenvalues clamped to [floor, cap].
/// Pushes Q_s into the tracker afterwards.
TrnFix scale_covariance(const NdtResult& result, ScoreTracker& tracker, const CovarianceScaling& scaling,
                        double stamp);

}  // namespace traels
