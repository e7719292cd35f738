#include "traels/trn.hpp"

namespace traels {

Measurement TrnFix::to_measurement() const {
  Measurement m;
  const int n = kind == FixKind::Position2D ? 2 : 6;
  if (value.size() != n || covariance.rows() != n || covariance.cols() != n) {
    throw EstimationError("fix dimensions do not match its kind");
  }
  m.values = value;
  m.covariance = covariance;
  m.mask.resize(n);
  for (int i = 0; i < n; ++i) m.mask[i] = i;
  m.stamp = stamp;
  m.source = source;
  return m;
}

}  // namespace traels
