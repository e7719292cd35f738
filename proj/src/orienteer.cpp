#include "traels/orienteer.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <array>
#include <cmath>
#include <stdexcept>

namespace traels {

std::int64_t NdtGrid::pack(const Eigen::Vector3i& key) {
  constexpr std::int64_t kBias = 1 << 20;
  constexpr std::int64_t kMask = (std::int64_t{1} << 21) - 1;
  return ((key.x() + kBias) & kMask) << 42 | ((key.y() + kBias) & kMask) << 21 | ((key.z() + kBias) & kMask);
}

Eigen::Vector3i NdtGrid::key_of(const Eigen::Vector3d& point) const {
  return (point / cell_size_).array().floor().cast<int>();
}

const NdtCell* NdtGrid::find(const Eigen::Vector3i& key) const {
  const auto it = cells_.find(pack(key));
  return it == cells_.end() ? nullptr : &it->second;
}

NdtGrid build_grid(std::span<const Eigen::Vector3d> points, double cell_size, std::size_t min_points,
                   double min_eigen_ratio) {
  if (points.empty()) throw NdtError("cannot build an NDT grid from an empty cloud");
  if (!(cell_size > 0.0)) throw NdtError("cell size must be positive");
  NdtGrid grid(cell_size);

  struct Accumulator {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> members;
  };
  std::unordered_map<std::int64_t, Accumulator> acc;
  for (const auto& p : points) {
    auto& a = acc[NdtGrid::pack(grid.key_of(p))];
    a.sum += p;
    a.members.push_back(p);
  }

  for (auto& [key, a] : acc) {
    const std::size_t n = a.members.size();
    if (n < std::max<std::size_t>(min_points, 2)) continue;
    NdtCell cell;
    cell.count = n;
    cell.mean = a.sum / static_cast<double>(n);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : a.members) cov += (p - cell.mean) * (p - cell.mean).transpose();
    cov /= static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d values = eig.eigenvalues();
    const double largest = values.maxCoeff();
    if (!(largest > 0.0)) continue;
    bool raised = false;
    for (int i = 0; i < 3; ++i) {
      if (values[i] < min_eigen_ratio * largest) {
        values[i] = min_eigen_ratio * largest;
        raised = true;
      }
    }
    if (raised) cov = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    cell.covariance = cov;
    cell.inverse = eig.eigenvectors() * values.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    grid.cells_.emplace(key, cell);
  }
  return grid;
}

Eigen::Vector2d ndt_score_constants(double outlier_ratio, double cell_size) {
  const double c1 = 10.0 * (1.0 - outlier_ratio);
  const double c2 = outlier_ratio / (cell_size * cell_size * cell_size);
  const double d3 = -std::log(c2);
  const double d1 = -std::log(c1 + c2) - d3;
  const double d2 = -2.0 * std::log((-std::log(c1 * std::exp(-0.5) + c2) - d3) / d1);
  return {d1, d2};
}

namespace {

// Rotation factors and their first and second derivatives.
struct AngleTerms {
  Eigen::Matrix3d r;
  std::array<Eigen::Matrix3d, 3> d;       // roll, pitch, yaw
  std::array<Eigen::Matrix3d, 6> dd;      // rr, pp, yy, rp, ry, py
};

AngleTerms angle_terms(const Eigen::Vector3d& rpy) {
  const double cr = std::cos(rpy.x()), sr = std::sin(rpy.x());
  const double cp = std::cos(rpy.y()), sp = std::sin(rpy.y());
  const double cy = std::cos(rpy.z()), sy = std::sin(rpy.z());
  Eigen::Matrix3d rx, rx1, rx2, ry, ry1, ry2, rz, rz1, rz2;
  rx << 1, 0, 0, 0, cr, -sr, 0, sr, cr;
  rx1 << 0, 0, 0, 0, -sr, -cr, 0, cr, -sr;
  rx2 << 0, 0, 0, 0, -cr, sr, 0, -sr, -cr;
  ry << cp, 0, sp, 0, 1, 0, -sp, 0, cp;
  ry1 << -sp, 0, cp, 0, 0, 0, -cp, 0, -sp;
  ry2 << -cp, 0, -sp, 0, 0, 0, sp, 0, -cp;
  rz << cy, -sy, 0, sy, cy, 0, 0, 0, 1;
  rz1 << -sy, -cy, 0, cy, -sy, 0, 0, 0, 0;
  rz2 << -cy, sy, 0, -sy, -cy, 0, 0, 0, 0;
  AngleTerms t;
  t.r = rz * ry * rx;
  t.d = {rz * ry * rx1, rz * ry1 * rx, rz1 * ry * rx};
  t.dd = {rz * ry * rx2, rz * ry2 * rx, rz2 * ry * rx, rz * ry1 * rx1, rz1 * ry * rx1, rz1 * ry1 * rx};
  return t;
}

constexpr std::array<std::array<int, 2>, 6> kPairs{{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};

struct Evaluation {
  double score = 0.0;
  Vector6d gradient = Vector6d::Zero();
  Matrix6d hessian = Matrix6d::Zero();
  std::size_t matched = 0;
};

class Objective {
 public:
  Objective(std::span<const Eigen::Vector3d> scan, const NdtGrid& grid, const NdtConfig& config)
      : scan_(scan), grid_(grid), config_(config) {
    const Eigen::Vector2d d = ndt_score_constants(config.outlier_ratio, grid.cell_size());
    d1_ = d.x();
    d2_ = d.y();
    if (config.face_neighbors_only) {
      offsets_ = {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    } else {
      for (int x = -1; x <= 1; ++x)
        for (int y = -1; y <= 1; ++y)
          for (int z = -1; z <= 1; ++z) offsets_.emplace_back(x, y, z);
    }
  }

  Evaluation evaluate(const Vector6d& params, bool derivatives) const {
    const AngleTerms t = angle_terms(params.tail<3>());
    const Eigen::Vector3d trans = params.head<3>();
    Evaluation out;
    Eigen::Matrix<double, 3, 6> jac;
    jac.leftCols<3>().setIdentity();
    std::array<Eigen::Vector3d, 6> second;
    for (const auto& p : scan_) {
      const Eigen::Vector3d x = t.r * p + trans;
      if (derivatives) {
        for (int i = 0; i < 3; ++i) jac.col(3 + i) = t.d[i] * p;
        for (int i = 0; i < 6; ++i) second[i] = t.dd[i] * p;
      }
      const Eigen::Vector3i key = grid_.key_of(x);
      bool hit = false;
      for (const auto& off : offsets_) {
        const NdtCell* cell = grid_.find(key + off);
        if (!cell) continue;
        hit = true;
        const Eigen::Vector3d diff = x - cell->mean;
        const Eigen::Vector3d ci_diff = cell->inverse * diff;
        const double q = diff.dot(ci_diff);
        const double exponent = 0.5 * d2_ * q;
        if (exponent > 30.0) continue;
        const double e = std::exp(-exponent);
        out.score += -d1_ * e;
        if (!derivatives) continue;
        const double f = d1_ * d2_ * e;
        const Eigen::Matrix<double, 1, 6> dq = ci_diff.transpose() * jac;  // half of dq/dparam
        out.gradient += f * dq.transpose();
        const Eigen::Matrix<double, 3, 6> cj = cell->inverse * jac;
        Matrix6d h = -d2_ * dq.transpose() * dq + jac.transpose() * cj;
        for (int k = 0; k < 6; ++k) {
          const double v = ci_diff.dot(second[k]);
          const int i = 3 + kPairs[k][0];
          const int j = 3 + kPairs[k][1];
          h(i, j) += v;
          if (i != j) h(j, i) += v;
        }
        out.hessian += f * h;
      }
      if (hit) ++out.matched;
    }
    return out;
  }

 private:
  std::span<const Eigen::Vector3d> scan_;
  const NdtGrid& grid_;
  const NdtConfig& config_;
  double d1_ = 0.0, d2_ = 0.0;
  std::vector<Eigen::Vector3i> offsets_;
};

Vector6d to_params(const Pose6D& pose) {
  Vector6d v;
  v << pose.position, pose.rpy;
  return v;
}

Pose6D from_params(const Vector6d& v) {
  Pose6D pose;
  pose.position = v.head<3>();
  pose.rpy = v.tail<3>();
  return pose;
}

std::vector<Eigen::Vector3d> decimate(std::span<const Eigen::Vector3d> scan, std::size_t max_points) {
  const std::size_t stride = scan.size() > max_points ? (scan.size() + max_points - 1) / max_points : 1;
  std::vector<Eigen::Vector3d> out;
  out.reserve(scan.size() / stride + 1);
  for (std::size_t i = 0; i < scan.size(); i += stride) out.push_back(scan[i]);
  return out;
}

}  // namespace

double ndt_score(std::span<const Eigen::Vector3d> scan, const Pose6D& pose, const NdtGrid& grid,
                 const NdtConfig& config) {
  return Objective(scan, grid, config).evaluate(to_params(pose), false).score;
}

NdtResult register_scan(std::span<const Eigen::Vector3d> scan_in, const Pose6D& initial, const NdtGrid& grid,
                        const NdtConfig& config) {
  if (scan_in.empty()) throw NdtError("empty scan");
  const std::vector<Eigen::Vector3d> scan = decimate(scan_in, config.max_points);
  const Objective objective(scan, grid, config);
  const double n = static_cast<double>(scan.size());

  NdtResult result;
  result.points = scan.size();
  Vector6d params = to_params(initial);
  Evaluation eval = objective.evaluate(params, true);
  result.overlap = static_cast<double>(eval.matched) / n;
  if (result.overlap < config.min_overlap) throw NdtError("insufficient overlap between scan and map");

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    if (eval.gradient.norm() / n < config.gradient_tolerance) {
      result.converged = true;
      break;
    }
    // Ascent direction from the negated Hessian made positive definite.
    const Matrix6d m = -0.5 * (eval.hessian + eval.hessian.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix6d> eig(m);
    Vector6d values = eig.eigenvalues().cwiseAbs();
    const double floor = std::max(values.maxCoeff() * 1e-6, 1e-12);
    values = values.cwiseMax(floor);
    const Vector6d step = eig.eigenvectors() * values.cwiseInverse().asDiagonal() *
                          (eig.eigenvectors().transpose() * eval.gradient);

    double alpha = 1.0;
    bool improved = false;
    for (int k = 0; k < 12; ++k, alpha *= 0.5) {
      const Vector6d trial = params + alpha * step;
      const double score = objective.evaluate(trial, false).score;
      if (score > eval.score) {
        params = trial;
        improved = true;
        break;
      }
    }
    result.iterations = iter + 1;
    if (!improved) {
      result.converged = true;
      break;
    }
    eval = objective.evaluate(params, true);
    if ((alpha * step).norm() < config.step_tolerance) {
      result.converged = true;
      break;
    }
  }

  params.tail<3>() = params.tail<3>().unaryExpr([](double a) { return wrap_angle(a); });
  eval = objective.evaluate(params, true);
  result.pose = from_params(params);
  result.q_s = eval.score / n;

  const Matrix6d m = -0.5 * (eval.hessian + eval.hessian.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(m);
  Vector6d values = eig.eigenvalues().cwiseAbs();
  values = values.cwiseMax(std::max(values.maxCoeff() * 1e-12, 1e-300));
  // Inverse eigenvalues ascending means curvature eigenvalues descending.
  Vector6d inv = values.cwiseInverse();
  Matrix6d vecs = eig.eigenvectors();
  for (int i = 0; i < 3; ++i) {
    std::swap(inv[i], inv[5 - i]);
    vecs.col(i).swap(vecs.col(5 - i));
  }
  result.eigenvalues = inv;
  result.eigenvectors = vecs;
  result.inv_hessian = vecs * inv.asDiagonal() * vecs.transpose();
  result.inv_hessian = 0.5 * (result.inv_hessian + result.inv_hessian.transpose()).eval();
  return result;
}

NdtResult NdtBackend::align(std::span<const Eigen::Vector3d> scan, const Pose6D& initial) const {
  return register_scan(scan, initial, grid_, config_);
}

ScoreTracker::ScoreTracker(std::size_t window) : window_(window) {
  if (window_ == 0) throw std::invalid_argument("score window must be positive");
}

void ScoreTracker::push(double q_s) {
  scores_.push_back(q_s);
  while (scores_.size() > window_) scores_.pop_front();
}

double ScoreTracker::mean() const {
  if (scores_.empty()) throw std::logic_error("score tracker is empty");
  double sum = 0.0;
  for (double s : scores_) sum += s;
  return sum / static_cast<double>(scores_.size());
}

TrnFix scale_covariance(const NdtResult& result, ScoreTracker& tracker, const CovarianceScaling& scaling,
                        double stamp) {
  const double reference = tracker.empty() ? result.q_s : tracker.mean();
  const double a = 1.0 / (1.0 + std::exp(-scaling.a * (result.q_s - reference)));

  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(0.5 * (result.inv_hessian + result.inv_hessian.transpose()));
  const Vector6d lambda = eig.eigenvalues();
  const double q_h = lambda.maxCoeff();
  const double b = scaling.b * q_h * q_h;
  if (!(b > 0.0) || !std::isfinite(b) || !(a > 0.0)) throw NdtError("degenerate Hessian; fix rejected");

  Vector6d sigma;
  for (int i = 0; i < 6; ++i) sigma[i] = std::clamp(lambda[i] * lambda[i] / (a * b), scaling.floor, scaling.cap);

  TrnFix fix;
  fix.kind = FixKind::Pose6D;
  fix.value.resize(6);
  fix.value << result.pose.position, result.pose.rpy;
  fix.covariance = eig.eigenvectors() * sigma.asDiagonal() * eig.eigenvectors().transpose();
  fix.covariance = 0.5 * (fix.covariance + fix.covariance.transpose()).eval();
  fix.stamp = stamp;
  fix.quality.q_s = result.q_s;
  fix.quality.q_h = q_h;
  fix.source = "orienteer";
  tracker.push(result.q_s);
  return fix;
}

}  // namespace traels
