#pragma once

#include "traels/estimator.hpp"

#include <Eigen/Core>

#include <string>

namespace traels {

enum class FixKind { Position2D, Pose6D };

struct FixQuality {
  double peak_score = 0.0;
  double search_radius = 0.0;
  double q_s = 0.0;
  double q_h = 0.0;
};

/// Global position or pose estimate produced by a terrain-referenced matcher.
struct TrnFix {
  FixKind kind = FixKind::Position2D;
  Eigen::VectorXd value;       // (x, y) or (x, y, z, roll, pitch, yaw)
  Eigen::MatrixXd covariance;  // 2x2 or 6x6
  double stamp = 0.0;
  FixQuality quality;
  std::string source;

  Measurement to_measurement() const;
};

}  // namespace traels
