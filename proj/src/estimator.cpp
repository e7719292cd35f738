#include "traels/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace traels {

namespace {

constexpr double kGimbalLimit = 89.9 * std::numbers::pi / 180.0;
constexpr double kEigenFloor = 1e-12;

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

Eigen::Matrix3d rot_x(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix(); }
Eigen::Matrix3d rot_y(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix(); }
Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

void check_gimbal(double pitch) {
  if (std::abs(pitch) > kGimbalLimit) throw DegenerateOrientation("pitch within 0.1 deg of +-90 deg");
}

// Body rates -> Euler angle rates for Z-Y-X angles.
Eigen::Vector3d euler_rates(double roll, double pitch, const Eigen::Vector3d& w) {
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double cp = std::cos(pitch), tp = std::tan(pitch);
  return {w.x() + sr * tp * w.y() + cr * tp * w.z(),
          cr * w.y() - sr * w.z(),
          (sr * w.y() + cr * w.z()) / cp};
}

}  // namespace

Pose6D StateEstimate::pose() const {
  Pose6D p;
  p.position = mean.segment<3>(kX);
  p.rpy = mean.segment<3>(kRoll);
  return p;
}

void StateEstimate::set_pose(const Pose6D& pose) {
  mean.segment<3>(kX) = pose.position;
  mean.segment<3>(kRoll) = pose.rpy;
}

void Measurement::validate() const {
  if (mask.empty()) throw EstimationError("measurement '" + source + "' has an empty mask");
  if (values.size() != size() || covariance.rows() != size() || covariance.cols() != size()) {
    throw EstimationError("measurement '" + source + "' mask/value/covariance size mismatch");
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] < 0 || mask[i] >= kStateSize || (i > 0 && mask[i] <= mask[i - 1])) {
      throw EstimationError("measurement '" + source + "' mask must be ascending state indices");
    }
  }
  if (!values.allFinite() || !covariance.allFinite()) {
    throw EstimationError("measurement '" + source + "' contains non-finite entries");
  }
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw EstimationError("measurement '" + source + "' covariance is not symmetric");
  }
  Eigen::LDLT<MeasMatrix> ldlt(covariance);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw EstimationError("measurement '" + source + "' covariance is not positive semi-definite");
  }
}

StateVector motion_model(const StateVector& x, double dt) {
  check_gimbal(x[kPitch]);
  const Eigen::Matrix3d r = rotation_from_rpy(x.segment<3>(kRoll));
  const Eigen::Vector3d v = x.segment<3>(kVx);
  const Eigen::Vector3d w = x.segment<3>(kWx);
  const Eigen::Vector3d a = x.segment<3>(kAx);

  StateVector out = x;
  out.segment<3>(kX) += r * (v * dt + 0.5 * a * dt * dt);
  const Eigen::Vector3d rates = euler_rates(x[kRoll], x[kPitch], w);
  for (int i = 0; i < 3; ++i) out[kRoll + i] = wrap_angle(x[kRoll + i] + rates[i] * dt);
  out.segment<3>(kVx) += a * dt;
  return out;
}

StateCovariance motion_jacobian(const StateVector& x, double dt) {
  check_gimbal(x[kPitch]);
  const double roll = x[kRoll], pitch = x[kPitch], yaw = x[kYaw];
  const Eigen::Vector3d v = x.segment<3>(kVx);
  const Eigen::Vector3d w = x.segment<3>(kWx);
  const Eigen::Vector3d a = x.segment<3>(kAx);
  const Eigen::Vector3d body_step = v * dt + 0.5 * a * dt * dt;

  const Eigen::Matrix3d rx = rot_x(roll), ry = rot_y(pitch), rz = rot_z(yaw);
  const Eigen::Matrix3d r = rz * ry * rx;
  const Eigen::Matrix3d dr_droll = rz * ry * rx * skew(Eigen::Vector3d::UnitX());
  const Eigen::Matrix3d dr_dpitch = rz * ry * skew(Eigen::Vector3d::UnitY()) * rx;
  const Eigen::Matrix3d dr_dyaw = rz * skew(Eigen::Vector3d::UnitZ()) * ry * rx;

  StateCovariance f = StateCovariance::Identity();
  f.block<3, 1>(kX, kRoll) = dr_droll * body_step;
  f.block<3, 1>(kX, kPitch) = dr_dpitch * body_step;
  f.block<3, 1>(kX, kYaw) = dr_dyaw * body_step;
  f.block<3, 3>(kX, kVx) = r * dt;
  f.block<3, 3>(kX, kAx) = r * (0.5 * dt * dt);

  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch), tp = std::tan(pitch);
  const double wy = w.y(), wz = w.z();

  // d(euler rates)/d(roll, pitch)
  f(kRoll, kRoll) += (cr * tp * wy - sr * tp * wz) * dt;
  f(kPitch, kRoll) += (-sr * wy - cr * wz) * dt;
  f(kYaw, kRoll) += ((cr * wy - sr * wz) / cp) * dt;
  f(kRoll, kPitch) += ((sr * wy + cr * wz) / (cp * cp)) * dt;
  f(kYaw, kPitch) += ((sr * wy + cr * wz) * sp / (cp * cp)) * dt;

  Eigen::Matrix3d rate_map;
  rate_map << 1, sr * tp, cr * tp, 0, cr, -sr, 0, sr / cp, cr / cp;
  f.block<3, 3>(kRoll, kWx) = rate_map * dt;
  f.block<3, 3>(kVx, kAx) = Eigen::Matrix3d::Identity() * dt;
  return f;
}

void condition_covariance(StateCovariance& p) {
  p = 0.5 * (p + p.transpose());
  const StateCovariance shifted = p - StateCovariance::Identity() * kEigenFloor;
  Eigen::LLT<StateCovariance> llt(shifted);
  if (llt.info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<StateCovariance> eig(p);
  StateVector values = eig.eigenvalues().cwiseMax(kEigenFloor);
  p = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  p = 0.5 * (p + p.transpose());
}

StateEstimate predict(const StateEstimate& state, double dt, const StateCovariance& process_noise) {
  if (dt < 0.0) throw EstimationError("negative prediction interval");
  StateEstimate out = state;
  out.stamp = state.stamp + dt;
  if (dt == 0.0) return out;
  const StateCovariance f = motion_jacobian(state.mean, dt);
  out.mean = motion_model(state.mean, dt);
  out.covariance = f * state.covariance * f.transpose() + process_noise * dt;
  condition_covariance(out.covariance);
  return out;
}

namespace {

struct Innovation {
  MeasVector residual;
  MeasMatrix covariance;
};

Innovation innovation(const StateEstimate& state, const Measurement& m) {
  const int n = m.size();
  Innovation inn;
  inn.residual.resize(n);
  inn.covariance.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const int si = m.mask[i];
    double r = m.values[i] - state.mean[si];
    if (is_angle_index(si)) r = wrap_angle(r);
    inn.residual[i] = r;
    for (int j = 0; j < n; ++j) inn.covariance(i, j) = state.covariance(si, m.mask[j]) + m.covariance(i, j);
  }
  return inn;
}

}  // namespace

StateEstimate fuse(const StateEstimate& state, const Measurement& m) {
  m.validate();
  const int n = m.size();
  const Innovation inn = innovation(state, m);

  Eigen::LLT<MeasMatrix> llt(inn.covariance);
  if (llt.info() != Eigen::Success) throw EstimationError("singular innovation covariance for '" + m.source + "'");

  // P H^T is a column selection of P.
  Eigen::Matrix<double, kStateSize, Eigen::Dynamic, 0, kStateSize, kStateSize> pht(kStateSize, n);
  for (int j = 0; j < n; ++j) pht.col(j) = state.covariance.col(m.mask[j]);
  const Eigen::Matrix<double, kStateSize, Eigen::Dynamic, 0, kStateSize, kStateSize> gain =
      llt.solve(pht.transpose()).transpose();

  StateEstimate out = state;
  out.mean += gain * inn.residual;
  for (int i = kRoll; i <= kYaw; ++i) out.mean[i] = wrap_angle(out.mean[i]);

  // Joseph form.
  StateCovariance ikh = StateCovariance::Identity();
  for (int j = 0; j < n; ++j) ikh.col(m.mask[j]) -= gain.col(j);
  out.covariance = ikh * state.covariance * ikh.transpose() + gain * m.covariance * gain.transpose();
  condition_covariance(out.covariance);
  return out;
}

double mahalanobis(const StateEstimate& state, const Measurement& m) {
  m.validate();
  const Innovation inn = innovation(state, m);
  Eigen::LLT<MeasMatrix> llt(inn.covariance);
  if (llt.info() != Eigen::Success) throw EstimationError("singular innovation covariance for '" + m.source + "'");
  const double d2 = inn.residual.dot(llt.solve(inn.residual));
  return std::sqrt(std::max(0.0, d2));
}

Ekf::Ekf(Frame frame, FilterConfig config) : frame_(frame), config_(std::move(config)) {
  state_.frame = frame_;
}

void Ekf::initialize(const StateEstimate& initial) {
  state_ = initial;
  state_.frame = frame_;
  condition_covariance(state_.covariance);
  initialized_ = true;
}

void Ekf::predict_to(double stamp) {
  if (!initialized_) throw EstimationError("filter used before initialization");
  if (stamp <= state_.stamp) return;
  state_ = predict(state_, stamp - state_.stamp, config_.process_noise);
}

bool Ekf::process(const Measurement& m) {
  if (!initialized_) throw EstimationError("filter used before initialization");
  if (m.stamp < state_.stamp - config_.lateness_window) {
    ++dropped_;
    return false;
  }
  predict_to(m.stamp);
  state_ = fuse(state_, m);
  return true;
}

std::size_t Ekf::process_batch(std::vector<Measurement> batch) {
  std::stable_sort(batch.begin(), batch.end(),
                   [](const Measurement& a, const Measurement& b) { return a.stamp < b.stamp; });
  std::size_t fused = 0;
  for (const auto& m : batch) fused += process(m) ? 1 : 0;
  return fused;
}

}  // namespace traels
