#include "traels/dual_estimator.hpp"
#include "traels/metrics.hpp"
#include "traels/pipeline.hpp"
#include "traels/simworld.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace traels;

namespace {

struct Drive {
  PipelineConfig config = default_pipeline_config();
  std::mt19937_64 rng{17};
  std::normal_distribution<double> unit{0.0, 1.0};

  // Straight, level motion at constant forward speed with sensor noise.
  void run(DualEstimator& dual, double speed, double duration, double rate = 100.0) {
    const Eigen::Matrix3d mount = Eigen::Matrix3d::Identity();
    const int steps = static_cast<int>(std::lround(duration * rate));
    const double t0 = dual.local().state().stamp;
    for (int k = 1; k <= steps; ++k) {
      const double t = t0 + k / rate;
      const StateEstimate& before = dual.local().state();
      std::vector<Measurement> imu;
      for (int i = 0; i < 4; ++i) {
        ImuSample s;
        s.stamp = t;
        s.specific_force = Eigen::Vector3d(0.0, 0.0, kGravity) + 0.02 * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
        s.angular_velocity = 0.001 * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
        imu.push_back(imu_measurement(s, mount, config.imu_noise, before, "imu"));
      }
      InsSample ins;
      ins.stamp = t;
      ins.rpy = 0.0005 * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
      ins.angular_velocity = 0.001 * Eigen::Vector3d(unit(rng), unit(rng), unit(rng));
      const WheelOdom odom{t, speed + 0.01 * unit(rng)};
      dual.step_local(t, imu, ins_measurement(ins, 0.0, config.ins_noise),
                      wheel_measurement(odom, 1.0, config.wheel, before));
    }
  }

  DualEstimator make() const {
    DualEstimator dual(config.local, config.global, config.slip);
    StateEstimate init;
    init.covariance = config.initial_sigma.array().square().matrix().asDiagonal();
    StateEstimate g = init;
    g.frame = Frame::Global;
    dual.initialize(init, g);
    return dual;
  }
};

TrnFix position_fix(double x, double y, double variance, double stamp) {
  TrnFix f;
  f.value = Eigen::Vector2d(x, y);
  f.covariance = Eigen::Matrix2d::Identity() * variance;
  f.stamp = stamp;
  f.source = "test";
  return f;
}

}  // namespace

TEST_CASE("stationary local filter does not drift") {
  Drive d;
  DualEstimator dual = d.make();
  d.run(dual, 0.0, 10.0);
  CHECK(dual.local().state().mean.segment<3>(kX).norm() < 0.05);
  CHECK(dual.local().continuity_violations() == 0);
}

TEST_CASE("wheel speed drives forward velocity") {
  Drive d;
  DualEstimator dual = d.make();
  d.run(dual, 1.0, 10.0);
  CHECK(dual.local().state().mean[kVx] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(dual.local().continuity_violations() == 0);
}

TEST_CASE("an exact fix snaps the global position") {
  Drive d;
  DualEstimator dual = d.make();
  d.run(dual, 1.0, 2.0);
  const double stamp = dual.local().state().stamp;
  const std::vector<Measurement> fixes{position_fix(5.0, -3.0, 1e-10, stamp).to_measurement()};
  dual.step_global(std::nullopt, fixes);
  CHECK(std::abs(dual.global().state().mean[kX] - 5.0) < 1e-3);
  CHECK(std::abs(dual.global().state().mean[kY] + 3.0) < 1e-3);
  CHECK(dual.global().state().frame == Frame::Global);
}

TEST_CASE("conflicting fixes pull the posterior between them") {
  Drive d;
  DualEstimator dual = d.make();
  d.run(dual, 0.0, 1.0);
  const double stamp = dual.local().state().stamp;
  const double prior = dual.global().state().covariance(kX, kX);
  const std::vector<Measurement> fixes{position_fix(10.0, 0.0, 1.0, stamp).to_measurement(),
                                       position_fix(12.0, 0.0, 1.0, stamp).to_measurement()};
  dual.step_global(std::nullopt, fixes);
  const StateEstimate& g = dual.global().state();
  CHECK(g.mean[kX] > 0.0);
  CHECK(g.mean[kX] < 12.0);
  CHECK(g.covariance(kX, kX) < 1.0);
  CHECK(g.covariance(kX, kX) < prior + 0.3 * 1.0);
}

TEST_CASE("equal weight fixes with a vague prior land at their midpoint") {
  Drive d;
  d.config.initial_sigma.head<2>().setConstant(1e4);
  DualEstimator dual = d.make();
  const std::vector<Measurement> fixes{position_fix(10.0, 0.0, 1.0, 0.0).to_measurement(),
                                       position_fix(12.0, 0.0, 1.0, 0.0).to_measurement()};
  dual.step_global(std::nullopt, fixes);
  CHECK(dual.global().state().mean[kX] == doctest::Approx(11.0).epsilon(1e-6));
  CHECK(dual.global().state().covariance(kX, kX) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("local to global transform composes the local pose onto the global pose") {
  Drive d;
  DualEstimator dual = d.make();
  CHECK(dual.local_to_global().position.norm() < 1e-12);
  d.run(dual, 1.0, 3.0);
  const std::vector<Measurement> fixes{position_fix(7.0, 2.0, 0.01, dual.local().state().stamp).to_measurement()};
  dual.step_global(std::nullopt, fixes);
  const Pose6D mapped = compose(dual.local_to_global(), dual.local().state().pose());
  const Pose6D global = dual.global().state().pose();
  CHECK((mapped.position - global.position).norm() < 1e-9);
  CHECK(std::abs(wrap_angle(mapped.yaw() - global.yaw())) < 1e-9);
}

TEST_CASE("the local filter never sees global corrections") {
  Drive d;
  DualEstimator a = d.make();
  Drive d2;
  DualEstimator b = d2.make();
  d.run(a, 1.0, 2.0);
  d2.run(b, 1.0, 2.0);
  const std::vector<Measurement> fixes{position_fix(50.0, 50.0, 1e-6, a.local().state().stamp).to_measurement()};
  a.step_global(std::nullopt, fixes);
  b.step_global(std::nullopt, {});
  d.run(a, 1.0, 2.0);
  d2.run(b, 1.0, 2.0);
  CHECK((a.local().state().mean - b.local().state().mean).norm() == doctest::Approx(0.0));
}

TEST_CASE("without fixes the global trajectory follows the local one") {
  Scenario s;
  s.plan.waypoints = {{-40.0, -40.0}, {30.0, -40.0}, {30.0, 30.0}};
  s.sensors.scan.enabled = false;
  s.render_apriori = false;
  const SimulationResult sim = simulate(s);
  const PipelineConfig config = default_pipeline_config();
  const RunOutput out = run_pipeline(sim.log, nullptr, imu_mounts(s.sensors), config);
  REQUIRE(out.local.size() == out.global.size());
  CHECK(out.continuity_violations == 0);
  CHECK(out.fixes.empty());
  const double length = arc_length(truth_trajectory(sim.log.truth)).back();
  double worst = 0.0;
  for (std::size_t i = 0; i < out.local.size(); ++i) {
    worst = std::max(worst, (out.local[i].mean.head<2>() - out.global[i].mean.head<2>()).norm());
  }
  CHECK(worst < 0.005 * length);
}

TEST_CASE("external fixes are fused at their stamps") {
  Scenario s;
  s.plan.waypoints = {{-40.0, -40.0}, {30.0, -40.0}};
  s.sensors.scan.enabled = false;
  s.render_apriori = false;
  const SimulationResult sim = simulate(s);
  const std::size_t k = sim.log.truth.size() / 2 / 10 * 10;
  TrnFix fix;
  fix.value = sim.log.truth[k].pose.position.head<2>() + Eigen::Vector2d(3.0, -2.0);
  fix.covariance = Eigen::Matrix2d::Identity() * 1e-6;
  fix.stamp = sim.log.truth[k].stamp;
  fix.source = "external";
  const std::vector<TrnFix> fixes{fix};
  const RunOutput out = run_pipeline(sim.log, nullptr, imu_mounts(s.sensors), default_pipeline_config(), fixes);
  REQUIRE(out.fixes.size() == 1);
  CHECK(out.fixes[0].fix.source == "external");
  const auto at = std::find_if(out.global.begin(), out.global.end(),
                               [&](const StateEstimate& g) { return g.stamp >= fix.stamp - 1e-9; });
  REQUIRE(at != out.global.end());
  CHECK((at->mean.head<2>() - fix.value).norm() < 1e-2);
  CHECK((out.local[at - out.global.begin()].mean.head<2>() - sim.log.truth[k].pose.position.head<2>()).norm() < 0.5);
}
