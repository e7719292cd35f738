#pragma once

#include "traels/geo.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace traels {

inline constexpr int kStateSize = 15;

/// Component layout of the generalized-coordinate state.
/// Pose lives in the filter's inertial frame; twist and acceleration are
/// expressed in the vehicle frame.
enum StateIndex : int {
  kX = 0, kY, kZ,
  kRoll, kPitch, kYaw,
  kVx, kVy, kVz,
  kWx, kWy, kWz,
  kAx, kAy, kAz,
};

inline bool is_angle_index(int i) { return i >= kRoll && i <= kYaw; }

using StateVector = Eigen::Matrix<double, kStateSize, 1>;
using StateCovariance = Eigen::Matrix<double, kStateSize, kStateSize>;
using MeasVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kStateSize, 1>;
using MeasMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kStateSize, kStateSize>;

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StateEstimate {
  StateVector mean = StateVector::Zero();
  StateCovariance covariance = StateCovariance::Identity();
  double stamp = 0.0;
  Frame frame = Frame::Local;

  Pose6D pose() const;
  void set_pose(const Pose6D& pose);
  Eigen::Vector3d linear_velocity() const { return mean.segment<3>(kVx); }
  Eigen::Vector3d angular_velocity() const { return mean.segment<3>(kWx); }
  Eigen::Vector3d linear_acceleration() const { return mean.segment<3>(kAx); }
  double position_covariance_trace_xy() const { return covariance(kX, kX) + covariance(kY, kY); }
};

/// Direct observation of a subset of state components.
struct Measurement {
  MeasVector values;
  std::vector<int> mask;  // ascending state indices
  MeasMatrix covariance;
  double stamp = 0.0;
  std::string source;

  int size() const { return static_cast<int>(mask.size()); }
  /// Throws EstimationError if the shape or covariance is inconsistent.
  void validate() const;
};

/// Motion model step and its analytic Jacobian with respect to the state.
StateVector motion_model(const StateVector& x, double dt);
StateCovariance motion_jacobian(const StateVector& x, double dt);

StateEstimate predict(const StateEstimate& state, double dt, const StateCovariance& process_noise);
StateEstimate fuse(const StateEstimate& state, const Measurement& m);

/// sqrt(r' S^-1 r) of the masked innovation.
double mahalanobis(const StateEstimate& state, const Measurement& m);

/// Symmetrizes and clamps eigenvalues below 1e-12.
void condition_covariance(StateCovariance& covariance);

struct FilterConfig {
  StateCovariance process_noise = StateCovariance::Identity() * 1e-3;
  double lateness_window = 0.5;
};

/// Single-writer EKF instance with the out-of-order policy: measurements
/// older than the current stamp are applied at the current stamp when they
/// are within the lateness window and dropped otherwise.
class Ekf {
 public:
  Ekf(Frame frame, FilterConfig config);

  void initialize(const StateEstimate& initial);
  bool initialized() const { return initialized_; }

  void predict_to(double stamp);
  /// Returns false when the measurement was dropped as too late.
  bool process(const Measurement& m);
  /// Sorts by stamp, then processes in order. Returns number fused.
  std::size_t process_batch(std::vector<Measurement> batch);

  const StateEstimate& state() const { return state_; }
  StateEstimate& mutable_state() { return state_; }
  const FilterConfig& config() const { return config_; }
  std::size_t dropped_count() const { return dropped_; }

 private:
  Frame frame_;
  FilterConfig config_;
  StateEstimate state_;
  bool initialized_ = false;
  std::size_t dropped_ = 0;
};

}  // namespace traels
