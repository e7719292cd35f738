#include "traels/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace traels {

namespace {

double norm(const Eigen::Vector3d& v, bool planar) { return planar ? v.head<2>().norm() : v.norm(); }

// Index i such that traj[i].stamp <= stamp < traj[i + 1].stamp, clamped.
std::size_t bracket(const Trajectory& traj, double stamp) {
  auto it = std::upper_bound(traj.begin(), traj.end(), stamp,
                             [](double s, const StampedPosition& p) { return s < p.stamp; });
  if (it == traj.begin()) return 0;
  const auto i = static_cast<std::size_t>(std::distance(traj.begin(), it)) - 1;
  return std::min(i, traj.size() - 2);
}

struct ArcIndex {
  const Trajectory& traj;
  std::vector<double> cumulative;
  bool planar;

  double at(double stamp) const {
    if (traj.size() == 1) return 0.0;
    const std::size_t i = bracket(traj, stamp);
    const Eigen::Vector3d p = interpolate_position(traj, stamp);
    return cumulative[i] + norm(p - traj[i].position, planar);
  }
};

std::vector<double> arc_length_impl(const Trajectory& trajectory, bool planar) {
  std::vector<double> out(trajectory.size(), 0.0);
  for (std::size_t k = 1; k < trajectory.size(); ++k) {
    if (trajectory[k].stamp < trajectory[k - 1].stamp) throw MetricsError("trajectory stamps are not ordered");
    out[k] = out[k - 1] + norm(trajectory[k].position - trajectory[k - 1].position, planar);
  }
  return out;
}

}  // namespace

std::vector<double> arc_length(const Trajectory& trajectory) { return arc_length_impl(trajectory, false); }

Eigen::Vector3d interpolate_position(const Trajectory& traj, double stamp) {
  if (traj.empty()) throw MetricsError("empty trajectory");
  if (stamp < traj.front().stamp || stamp > traj.back().stamp) throw MetricsError("stamp outside trajectory");
  if (traj.size() == 1) return traj.front().position;
  const std::size_t i = bracket(traj, stamp);
  const double span = traj[i + 1].stamp - traj[i].stamp;
  if (span <= 0.0) return traj[i].position;
  const double f = std::clamp((stamp - traj[i].stamp) / span, 0.0, 1.0);
  return traj[i].position + f * (traj[i + 1].position - traj[i].position);
}

SampledError evaluate_errors(const Trajectory& truth, const Trajectory& estimate, const MetricsConfig& config) {
  if (!(config.min_spacing > 0.0)) throw MetricsError("sample spacing must be positive");
  if (truth.empty() || estimate.empty()) throw MetricsError("empty trajectory");
  const double t0 = std::max(truth.front().stamp, estimate.front().stamp);
  const double t1 = std::min(truth.back().stamp, estimate.back().stamp);
  if (t1 < t0) throw MetricsError("truth and estimate do not overlap in time");

  const std::vector<double> truth_arc = arc_length_impl(truth, config.planar);
  const ArcIndex estimate_arc{estimate, arc_length_impl(estimate, config.planar), config.planar};

  SampledError out;
  out.min_spacing = config.min_spacing;

  std::size_t k = 0;
  while (k < truth.size() && truth[k].stamp < t0) ++k;
  if (k == truth.size()) return out;
  std::size_t prev = k;
  for (++k; k < truth.size() && truth[k].stamp <= t1; ++k) {
    if (truth_arc[k] - truth_arc[prev] < config.min_spacing) continue;

    const Eigen::Vector3d p_est = interpolate_position(estimate, truth[k].stamp);
    const Eigen::Vector3d err = truth[k].position - p_est;
    ErrorSample s;
    s.stamp = truth[k].stamp;
    s.distance = truth_arc[k];
    s.ate = norm(err, config.planar);
    s.vertical = -err.z();

    double dd = 0.0;
    double dd_est = 0.0;
    if (config.point_to_point) {
      dd = norm(truth[k].position - truth[prev].position, config.planar);
      dd_est = norm(p_est - interpolate_position(estimate, truth[prev].stamp), config.planar);
    } else {
      dd = truth_arc[k] - truth_arc[prev];
      dd_est = estimate_arc.at(truth[k].stamp) - estimate_arc.at(truth[prev].stamp);
    }
    if (dd <= 0.0) {
      ++out.skipped;
      prev = k;
      continue;
    }
    s.rpe = (dd_est - dd) / dd * 100.0;
    out.samples.push_back(s);
    prev = k;
  }
  return out;
}

std::vector<double> compute_ate(const Trajectory& truth, const Trajectory& estimate, const MetricsConfig& config) {
  std::vector<double> out;
  for (const auto& s : evaluate_errors(truth, estimate, config).samples) out.push_back(s.ate);
  return out;
}

std::vector<double> compute_rpe(const Trajectory& truth, const Trajectory& estimate, const MetricsConfig& config) {
  std::vector<double> out;
  for (const auto& s : evaluate_errors(truth, estimate, config).samples) out.push_back(s.rpe);
  return out;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw MetricsError("median of empty set");
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  return values[mid];
}

ErrorSummary aggregate(const SampledError& errors) {
  const auto& s = errors.samples;
  if (s.empty()) throw MetricsError("no metric samples to aggregate");
  std::vector<double> ate, rpe, velocity;
  double vsum = 0.0, vsq = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    ate.push_back(s[k].ate);
    rpe.push_back(std::abs(s[k].rpe));
    vsum += s[k].vertical;
    vsq += s[k].vertical * s[k].vertical;
    if (k > 0 && s[k].stamp > s[k - 1].stamp) {
      velocity.push_back((s[k].distance - s[k - 1].distance) / (s[k].stamp - s[k - 1].stamp));
    }
  }
  ErrorSummary out;
  out.count = s.size();
  out.median_ate = lower_median(ate);
  out.max_ate = *std::max_element(ate.begin(), ate.end());
  out.final_ate = s.back().ate;
  out.median_abs_rpe = lower_median(rpe);
  out.max_abs_rpe = *std::max_element(rpe.begin(), rpe.end());
  out.length = s.back().distance;
  out.median_velocity = velocity.empty() ? 0.0 : lower_median(velocity);
  const double n = static_cast<double>(s.size());
  out.vertical_mean = vsum / n;
  out.vertical_std = s.size() > 1 ? std::sqrt(std::max(0.0, (vsq - n * out.vertical_mean * out.vertical_mean) / (n - 1))) : 0.0;
  return out;
}

}  // namespace traels
