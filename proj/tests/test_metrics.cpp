#include "traels/metrics.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>

using namespace traels;

namespace {

Trajectory straight(double length, double speed, double rate = 10.0) {
  Trajectory t;
  const int n = static_cast<int>(std::lround(length / speed * rate));
  for (int k = 0; k <= n; ++k) t.push_back({k / rate, Eigen::Vector3d(speed * k / rate, 0.0, 0.0)});
  return t;
}

Trajectory transformed(const Trajectory& t, const Eigen::Isometry3d& iso) {
  Trajectory out = t;
  for (auto& p : out) p.position = iso * p.position;
  return out;
}

}  // namespace

TEST_CASE("arc length") {
  Trajectory line;
  for (int i = 0; i < 100; ++i) line.push_back({static_cast<double>(i), Eigen::Vector3d(0.1 * i, 0.0, 0.0)});
  CHECK(arc_length(line).back() == doctest::Approx(9.9));

  Trajectory circle;
  const int n = 20000;
  for (int i = 0; i <= n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    circle.push_back({static_cast<double>(i), Eigen::Vector3d(std::cos(a), std::sin(a), 0.0)});
  }
  CHECK(arc_length(circle).back() == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-4));

  Trajectory bad{{1.0, Eigen::Vector3d::Zero()}, {0.5, Eigen::Vector3d::Ones()}};
  CHECK_THROWS_AS(arc_length(bad), MetricsError);
}

TEST_CASE("interpolation") {
  const Trajectory t{{0.0, Eigen::Vector3d(0, 0, 0)}, {2.0, Eigen::Vector3d(4, 2, 0)}};
  CHECK((interpolate_position(t, 0.5) - Eigen::Vector3d(1.0, 0.5, 0.0)).norm() < 1e-12);
  CHECK_THROWS_AS(interpolate_position(t, 2.5), MetricsError);
  CHECK_THROWS_AS(interpolate_position(Trajectory{}, 0.0), MetricsError);
}

TEST_CASE("absolute trajectory error") {
  const Trajectory truth = straight(100.0, 1.0);
  SUBCASE("a constant offset") {
    const Trajectory est = transformed(truth, Eigen::Isometry3d(Eigen::Translation3d(0.0, 2.0, 0.0)));
    for (double e : compute_ate(truth, est)) CHECK(e == doctest::Approx(2.0));
  }
  SUBCASE("a 1 deg heading error over 1000 m") {
    const Trajectory long_truth = straight(1000.0, 2.0);
    Eigen::Isometry3d rot = Eigen::Isometry3d::Identity();
    rot.linear() = Eigen::AngleAxisd(std::numbers::pi / 180.0, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const auto ate = compute_ate(long_truth, transformed(long_truth, rot));
    CHECK(ate.back() == doctest::Approx(17.45).epsilon(1e-3));
  }
  SUBCASE("identical trajectories") {
    const SampledError e = evaluate_errors(truth, truth);
    const ErrorSummary s = aggregate(e);
    CHECK(s.max_ate == 0.0);
    CHECK(s.max_abs_rpe == 0.0);
    CHECK(s.count == 100);
    CHECK(s.length == doctest::Approx(100.0));
    CHECK(s.median_velocity == doctest::Approx(1.0));
  }
  SUBCASE("vertical error is signed") {
    const Trajectory est = transformed(truth, Eigen::Isometry3d(Eigen::Translation3d(0.0, 0.0, 0.5)));
    const ErrorSummary s = aggregate(evaluate_errors(truth, est));
    CHECK(s.vertical_mean == doctest::Approx(0.5));
    CHECK(s.vertical_std == doctest::Approx(0.0));
    CHECK(s.max_ate == doctest::Approx(0.0));
    MetricsConfig three_d;
    three_d.planar = false;
    CHECK(aggregate(evaluate_errors(truth, est, three_d)).max_ate == doctest::Approx(0.5));
  }
}

TEST_CASE("relative pose error") {
  const Trajectory truth = straight(100.0, 1.0);
  SUBCASE("a 10% long estimate") {
    Trajectory est = truth;
    for (auto& p : est) p.position *= 1.1;
    for (double r : compute_rpe(truth, est)) CHECK(r == doctest::Approx(10.0).epsilon(1e-9));
  }
  SUBCASE("jitter lengthens the path") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.05);
    Trajectory est = truth;
    for (auto& p : est) p.position.y() += n(rng);
    const auto rpe = compute_rpe(truth, est);
    double mean = 0.0;
    for (double r : rpe) mean += r;
    CHECK(mean / static_cast<double>(rpe.size()) > 0.0);
  }
  SUBCASE("point to point measures straight displacement") {
    Trajectory est = truth;
    for (std::size_t k = 0; k < est.size(); ++k) est[k].position.y() = (k % 2 == 0) ? 0.0 : 0.3;
    MetricsConfig p2p;
    p2p.point_to_point = true;
    const auto straight_rpe = compute_rpe(truth, est, p2p);
    const auto path_rpe = compute_rpe(truth, est);
    CHECK(std::abs(straight_rpe[5]) < path_rpe[5]);
  }
}

TEST_CASE("invariance and sampling") {
  Trajectory truth;
  for (int k = 0; k <= 3000; ++k) {
    const double t = 0.1 * k;
    truth.push_back({t, Eigen::Vector3d(30.0 * std::sin(t / 30.0), 20.0 * (1.0 - std::cos(t / 30.0)), 0.0)});
  }
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.1);
  Trajectory est = truth;
  for (auto& p : est) p.position += Eigen::Vector3d(n(rng), n(rng), 0.0);

  SUBCASE("RPE ignores a rigid transform of the estimate") {
    Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
    iso.linear() = Eigen::AngleAxisd(0.7, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    iso.translation() = Eigen::Vector3d(100.0, -40.0, 0.0);
    const auto a = compute_rpe(truth, est);
    const auto b = compute_rpe(truth, transformed(est, iso));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
  }
  SUBCASE("sample count does not depend on speed") {
    Trajectory slow = truth;
    for (auto& p : slow) p.stamp *= 2.0;
    Trajectory slow_est = est;
    for (auto& p : slow_est) p.stamp *= 2.0;
    const double fast_n = static_cast<double>(evaluate_errors(truth, est).samples.size());
    const double slow_n = static_cast<double>(evaluate_errors(slow, slow_est).samples.size());
    CHECK(std::abs(fast_n - slow_n) / fast_n < 0.02);
  }
  SUBCASE("half spacing doubles the samples") {
    MetricsConfig half;
    half.min_spacing = 0.5;
    const double one = static_cast<double>(evaluate_errors(truth, est).samples.size());
    const double two = static_cast<double>(evaluate_errors(truth, est, half).samples.size());
    CHECK(two / one == doctest::Approx(2.0).epsilon(0.05));
  }
}

TEST_CASE("dwells produce no samples") {
  Trajectory truth;
  double t = 0.0, x = 0.0;
  auto move = [&](double duration, double speed) {
    for (double s = 0.0; s < duration; s += 0.1) {
      t += 0.1;
      x += speed * 0.1;
      truth.push_back({t, Eigen::Vector3d(x, 0.0, 0.0)});
    }
  };
  truth.push_back({0.0, Eigen::Vector3d::Zero()});
  move(20.0, 1.0);
  const double dwell_start = t;
  move(30.0, 0.0);
  const double dwell_end = t;
  move(20.0, 1.0);
  const SampledError e = evaluate_errors(truth, truth);
  for (const auto& s : e.samples) CHECK_FALSE((s.stamp > dwell_start + 0.05 && s.stamp < dwell_end));
  CHECK(e.samples.size() == doctest::Approx(40).epsilon(0.05));
}

TEST_CASE("aggregation") {
  SampledError e;
  for (double v : {1.0, 2.0, 100.0}) e.samples.push_back({v, v, v, -v, 0.0});
  const ErrorSummary s = aggregate(e);
  CHECK(s.median_ate == doctest::Approx(2.0));
  CHECK(s.max_ate == doctest::Approx(100.0));
  CHECK(s.final_ate == doctest::Approx(100.0));
  CHECK(s.median_abs_rpe == doctest::Approx(2.0));
  CHECK(lower_median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(aggregate(SampledError{}), MetricsError);
  CHECK_THROWS_AS(lower_median({}), MetricsError);
  MetricsConfig bad;
  bad.min_spacing = 0.0;
  CHECK_THROWS_AS(evaluate_errors(straight(10, 1), straight(10, 1), bad), MetricsError);
}
