#include "traels/pipeline.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <future>

namespace traels {

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  StateCovariance& ql = c.local.filter.process_noise;
  ql.setZero();
  ql.diagonal() << 1e-4, 1e-4, 1e-4, 1e-5, 1e-5, 1e-5, 1e-3, 1e-3, 1e-3, 1e-1, 1e-1, 1e-1, 2.0, 2.0, 2.0;
  StateCovariance& qg = c.global.filter.process_noise;
  qg.setZero();
  qg.diagonal() << 0.3, 0.3, 1e-3, 1e-4, 1e-4, 1e-4, 1e-1, 1e-1, 1e-1, 1e-1, 1e-1, 1e-1, 2.0, 2.0, 2.0;
  c.global_ins_noise.attitude_variance = Eigen::Vector3d::Constant(1e-4);
  return c;
}

std::array<Eigen::Matrix3d, 4> imu_mounts(const SensorSuite& sensors) {
  std::array<Eigen::Matrix3d, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = rotation_from_rpy(sensors.imus[i].mount_rpy);
  return out;
}

Trajectory truth_trajectory(const std::vector<TruthSample>& truth) {
  Trajectory out;
  out.reserve(truth.size());
  for (const auto& t : truth) out.push_back({t.stamp, t.pose.position});
  return out;
}

Trajectory estimate_trajectory(const std::vector<StateEstimate>& states) {
  Trajectory out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back({s.stamp, s.mean.segment<3>(kX)});
  return out;
}

namespace {

Measurement select(const Measurement& full, const std::vector<int>& mask) {
  Measurement m;
  const int n = static_cast<int>(mask.size());
  m.values.resize(n);
  m.covariance.resize(n, n);
  m.mask.resize(n);
  for (int i = 0; i < n; ++i) {
    const int src = static_cast<int>(std::find(full.mask.begin(), full.mask.end(), mask[i]) - full.mask.begin());
    if (src >= full.size()) throw EstimationError("mask selects a component the fix does not have");
    m.mask[i] = mask[i];
    m.values[i] = full.values[src];
    for (int j = 0; j < n; ++j) {
      const int src_j = static_cast<int>(std::find(full.mask.begin(), full.mask.end(), mask[j]) - full.mask.begin());
      m.covariance(i, j) = full.covariance(src, src_j);
    }
  }
  m.stamp = full.stamp;
  m.source = full.source;
  return m;
}

double max_xy_sigma(const StateEstimate& s) {
  const Eigen::Matrix2d cov = s.covariance.block<2, 2>(kX, kX);
  return std::sqrt(std::max(0.0, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues().maxCoeff()));
}

// Adds `free_variance` along each horizontal direction whose curvature per
// point is below `min_information`. Returns the number of such directions.
int release_weak_directions(const NdtResult& r, double min_information, double free_variance, TrnFix& fix) {
  if (r.points == 0) return 2;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(r.inv_hessian.block<2, 2>(0, 0));
  int weak = 0;
  for (int i = 0; i < 2; ++i) {
    const double lambda = es.eigenvalues()[i];
    if (lambda > 0.0 && 1.0 / (lambda * static_cast<double>(r.points)) >= min_information) continue;
    const Eigen::Vector2d v = es.eigenvectors().col(i);
    fix.covariance.block<2, 2>(0, 0) += free_variance * v * v.transpose();
    ++weak;
  }
  return weak;
}

}  // namespace

RunOutput run_pipeline(const SensorLog& log, const AprioriMap* apriori, const std::array<Eigen::Matrix3d, 4>& mounts,
                       const PipelineConfig& config, std::span<const TrnFix> external_fixes) {
  const std::size_t n = log.truth.size();
  if (n == 0) throw EstimationError("empty sensor log");
  for (const auto& stream : log.imu) {
    if (stream.size() != n) throw EstimationError("IMU stream length differs from the log");
  }
  if (log.ins.size() != n || log.wheel.size() != n) throw EstimationError("INS or wheel stream length differs");

  RunOutput out;
  DualEstimator dual(config.local, config.global, config.slip);
  YawBiasEstimator ybe(config.ybe);

  StateEstimate init;
  init.stamp = log.truth[0].stamp;
  init.set_pose(log.truth[0].pose);
  init.mean.segment<3>(kVx) = log.truth[0].velocity;
  init.covariance = config.initial_sigma.array().square().matrix().asDiagonal();
  StateEstimate init_global = init;
  init_global.frame = Frame::Global;
  dual.initialize(init, init_global);

  const bool trn = apriori != nullptr;
  std::optional<AtlisMatcher> atlis;
  std::optional<NdtBackend> ndt;
  if (trn && config.atlis.enabled) atlis.emplace(apriori->color, config.atlis.matcher);
  if (trn && config.orienteer.enabled && !apriori->cloud.empty()) {
    ndt.emplace(build_grid(apriori->cloud, config.orienteer.cell_size), config.orienteer.ndt);
  }
  GroundBuffer buffer(config.atlis.buffer_travel, config.atlis.buffer_points);
  ScoreTracker tracker(config.orienteer.score_window);

  std::vector<Measurement> pending;
  std::vector<std::future<std::optional<TrnFix>>> inflight;
  std::size_t next_scan = 0;
  std::size_t next_external = 0;
  double odometer = 0.0;
  double last_atlis = -1e9, last_orienteer = -1e9;
  Eigen::Vector3d last_local_position = init.mean.segment<3>(kX);

  auto accept_atlis = [&](std::optional<TrnFix> fix) {
    if (!fix) return;
    out.fixes.push_back({*fix, true});
    pending.push_back(fix->to_measurement());
  };

  std::vector<Measurement> imu_meas;
  imu_meas.reserve(4);
  for (std::size_t k = 0; k < n; ++k) {
    const double stamp = log.truth[k].stamp;
    const StateEstimate& before = dual.local().state();
    imu_meas.clear();
    for (int i = 0; i < 4; ++i) {
      imu_meas.push_back(imu_measurement(log.imu[i][k], mounts[i], config.imu_noise, before, "imu"));
    }
    const double correction = ybe.bias();
    const Measurement ins = ins_measurement(log.ins[k], correction, config.ins_noise);
    const Measurement wheel = wheel_measurement(log.wheel[k], config.wheel_scale, config.wheel, before);
    dual.step_local(stamp, imu_meas, ins, wheel);

    const StateEstimate& local = dual.local().state();
    odometer += (local.mean.segment<3>(kX) - last_local_position).norm();
    last_local_position = local.mean.segment<3>(kX);

    while (next_scan < log.scans.size() && log.scans[next_scan].stamp <= stamp + 1e-9) {
      const Scan& scan = log.scans[next_scan++];
      if (!trn) continue;
      const Pose6D local_pose = local.pose();
      const StateEstimate& global = dual.global().state();

      if (atlis) {
        std::vector<ColorPoint> ground;
        for (const auto& p : scan.points) {
          if (std::abs(p.position.z()) > config.atlis.ground_height) continue;
          if (p.position.head<2>().norm() > config.atlis.ground_range) continue;
          const Eigen::Vector3d l = local_pose.transform_point(p.position.cast<double>());
          ground.push_back({l.cast<float>(), p.rgb});
        }
        buffer.add(odometer, std::move(ground));
        if (odometer - last_atlis >= config.atlis.interval) {
          last_atlis = odometer;
          ++out.atlis_attempts;
          auto snapshot = buffer.snapshot(dual.local_to_global());
          const Eigen::Vector2d xy = global.mean.segment<2>(kX);
          const Eigen::Matrix2d cov = global.covariance.block<2, 2>(kX, kX);
          if (config.parallel_workers) {
            inflight.push_back(std::async(std::launch::async, [&m = *atlis, pts = std::move(snapshot), xy, cov,
                                                               s = scan.stamp] { return m.match(pts, xy, cov, s); }));
          } else {
            accept_atlis(atlis->match(snapshot, xy, cov, scan.stamp));
          }
        }
      }

      if (ndt && odometer - last_orienteer >= config.orienteer.interval) {
        last_orienteer = odometer;
        if (max_xy_sigma(global) > config.orienteer.max_prior_sigma) continue;
        ++out.orienteer_attempts;
        std::vector<Eigen::Vector3d> points;
        points.reserve(scan.points.size());
        for (const auto& p : scan.points) {
          if (p.position.z() > config.orienteer.min_height) points.push_back(p.position.cast<double>());
        }
        if (points.size() < config.orienteer.min_points) {
          ++out.orienteer_rejected;
          continue;
        }
        try {
          const NdtResult r = ndt->align(points, global.pose());
          if (!r.converged) {
            ++out.orienteer_rejected;
            continue;
          }
          TrnFix fix = scale_covariance(r, tracker, config.orienteer.scaling, scan.stamp);
          if (release_weak_directions(r, config.orienteer.min_information, config.orienteer.free_variance, fix) == 2) {
            ++out.orienteer_rejected;
            continue;
          }
          out.fixes.push_back({fix, true});
          pending.push_back(select(fix.to_measurement(), config.orienteer.mask));
        } catch (const NdtError&) {
          ++out.orienteer_rejected;
        }
      }
    }

    if (k % static_cast<std::size_t>(config.global_divider) != 0) continue;
    while (next_external < external_fixes.size() && external_fixes[next_external].stamp <= stamp + 1e-9) {
      const TrnFix& fix = external_fixes[next_external++];
      out.fixes.push_back({fix, true});
      pending.push_back(fix.to_measurement());
    }
    for (auto it = inflight.begin(); it != inflight.end();) {
      if (it->wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
        accept_atlis(it->get());
        it = inflight.erase(it);
      } else {
        ++it;
      }
    }
    std::optional<Measurement> orientation;
    if (config.global_orientation) orientation = ins_attitude_measurement(log.ins[k], correction, config.global_ins_noise);
    dual.step_global(orientation, pending);
    pending.clear();
    const StateEstimate& global = dual.global().state();
    ybe.observe(stamp, dual.local().state().pose(), global.pose(), global.position_covariance_trace_xy());
    out.local.push_back(dual.local().state());
    out.global.push_back(global);
    out.yaw_bias.emplace_back(stamp, ybe.bias());
  }
  for (auto& f : inflight) f.wait();
  out.ybe_samples = ybe.samples();
  out.continuity_violations = dual.local().continuity_violations();
  out.dropped = dual.local().ekf().dropped_count() + dual.global().ekf().dropped_count();
  return out;
}

}  // namespace traels
