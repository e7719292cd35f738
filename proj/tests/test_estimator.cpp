#include "traels/estimator.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>

using namespace traels;

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;

Measurement scalar(int index, double value, double variance, double stamp = 0.0) {
  Measurement m;
  m.mask = {index};
  m.values.resize(1);
  m.values << value;
  m.covariance.resize(1, 1);
  m.covariance << variance;
  m.stamp = stamp;
  m.source = "test";
  return m;
}

double max_asymmetry(const StateCovariance& p) { return (p - p.transpose()).cwiseAbs().maxCoeff(); }
}  // namespace

TEST_CASE("predict with the constant twist model") {
  const StateCovariance q = StateCovariance::Identity() * 1e-3;
  StateEstimate s;
  s.mean[kX] = 3.0;
  s.mean[kY] = -2.0;
  s.mean[kYaw] = 0.4;

  SUBCASE("zero twist leaves the pose unchanged") {
    const StateEstimate p = predict(s, 1.0, q);
    CHECK((p.mean.head<6>() - s.mean.head<6>()).norm() < 1e-15);
    CHECK(p.stamp == doctest::Approx(1.0));
  }
  SUBCASE("unit forward speed at zero yaw") {
    s.mean[kYaw] = 0.0;
    s.mean[kVx] = 1.0;
    const StateEstimate p = predict(s, 1.0, q);
    CHECK(p.mean[kX] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(p.mean[kY] == doctest::Approx(-2.0).epsilon(1e-12));
  }
  SUBCASE("unit forward speed at 90 deg yaw moves along y") {
    s.mean[kYaw] = 90.0 * kDeg;
    s.mean[kVx] = 1.0;
    const StateEstimate p = predict(s, 1.0, q);
    CHECK(std::abs(p.mean[kX] - 3.0) < 1e-9);
    CHECK(std::abs(p.mean[kY] - (-1.0)) < 1e-9);
  }
  SUBCASE("covariance grows by at least the process noise") {
    const StateEstimate p = predict(s, 0.5, q);
    for (int i = 0; i < kStateSize; ++i) CHECK(p.covariance(i, i) >= s.covariance(i, i) + 0.5e-3 - 1e-12);
    CHECK(max_asymmetry(p.covariance) < 1e-12);
  }
  SUBCASE("negative interval is rejected") { CHECK_THROWS_AS(predict(s, -0.1, q), EstimationError); }
}

TEST_CASE("motion jacobian matches central differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    StateVector x;
    for (int i = 0; i < kStateSize; ++i) x[i] = 2.0 * u(rng);
    x[kRoll] = 0.5 * u(rng);
    x[kPitch] = 0.5 * u(rng);
    x[kYaw] = 2.5 * u(rng);
    const double dt = 0.1;
    const StateCovariance f = motion_jacobian(x, dt);
    const double h = 1e-6;
    for (int j = 0; j < kStateSize; ++j) {
      StateVector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      StateVector d = motion_model(xp, dt) - motion_model(xm, dt);
      for (int i = kRoll; i <= kYaw; ++i) d[i] = wrap_angle(d[i]);
      const StateVector col = d / (2.0 * h);
      CHECK((col - f.col(j)).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("fuse examples") {
  StateEstimate s;
  s.mean[kX] = 5.0;

  SUBCASE("equal variances halve the variance and keep the mean") {
    const StateEstimate f = fuse(s, scalar(kX, 5.0, 1.0));
    CHECK(f.mean[kX] == doctest::Approx(5.0));
    CHECK(f.covariance(kX, kX) == doctest::Approx(0.5));
  }
  SUBCASE("equal variances average the means") {
    const StateEstimate f = fuse(s, scalar(kX, 7.0, 1.0));
    CHECK(f.mean[kX] == doctest::Approx(6.0));
  }
  SUBCASE("an uninformative measurement changes nothing") {
    const StateEstimate f = fuse(s, scalar(kX, 1000.0, 1e12));
    CHECK((f.mean - s.mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((f.covariance - s.covariance).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("angle residuals wrap") {
    s.mean[kYaw] = 179.0 * kDeg;
    const StateEstimate f = fuse(s, scalar(kYaw, -179.0 * kDeg, 1.0));
    CHECK(std::abs(f.mean[kYaw]) == doctest::Approx(std::numbers::pi).epsilon(1e-9));
  }
  SUBCASE("the same measurement twice never increases a variance") {
    s.covariance = StateCovariance::Identity() * 2.0;
    s.covariance(kX, kY) = s.covariance(kY, kX) = 0.7;
    Measurement m;
    m.mask = {kX, kY, kYaw};
    m.values = MeasVector::Constant(3, 0.3);
    m.covariance = MeasMatrix::Identity(3, 3) * 0.4;
    const StateEstimate a = fuse(s, m);
    const StateEstimate b = fuse(a, m);
    for (int i = 0; i < kStateSize; ++i) {
      CHECK(a.covariance(i, i) <= s.covariance(i, i) + 1e-15);
      CHECK(b.covariance(i, i) <= a.covariance(i, i) + 1e-15);
    }
    CHECK(max_asymmetry(b.covariance) < 1e-9);
  }
}

TEST_CASE("measurement validation") {
  StateEstimate s;
  Measurement m = scalar(kX, 1.0, 1.0);
  m.mask.clear();
  CHECK_THROWS_AS(fuse(s, m), EstimationError);
  m = scalar(kX, 1.0, -1.0);
  CHECK_THROWS_AS(fuse(s, m), EstimationError);
  m.mask = {kX, kY};
  m.values = MeasVector::Zero(2);
  m.covariance = MeasMatrix::Identity(2, 2);
  m.covariance(0, 1) = 2.0;
  m.covariance(1, 0) = 2.0;
  CHECK_THROWS_AS(fuse(s, m), EstimationError);
  m.covariance = MeasMatrix::Identity(2, 2);
  m.mask = {kY, kX};
  CHECK_THROWS_AS(fuse(s, m), EstimationError);
  m.mask = {kX, kY};
  m.values[0] = std::nan("");
  CHECK_THROWS_AS(fuse(s, m), EstimationError);
}

TEST_CASE("mahalanobis examples") {
  StateEstimate s;
  s.covariance = StateCovariance::Identity() * 0.5;
  CHECK(mahalanobis(s, scalar(kX, 0.0, 0.5)) == doctest::Approx(0.0));
  CHECK(mahalanobis(s, scalar(kX, 2.0, 0.5)) == doctest::Approx(2.0));

  s.covariance = StateCovariance::Identity() * 1e-3;
  Measurement m;
  m.mask = {kX, kY};
  m.values.resize(2);
  m.values << 2.0, 1.0;
  m.covariance.resize(2, 2);
  m.covariance << 4.0 - 1e-3, 0.0, 0.0, 1.0 - 1e-3;
  CHECK(mahalanobis(s, m) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("EKF on a linear system matches a textbook Kalman filter") {
  // Along-track subsystem (x, vx, ax) at zero attitude and rates is linear.
  const double dt = 0.1;
  const double r = 0.25;
  StateCovariance q = StateCovariance::Identity() * 1e-4;
  q(kX, kX) = 0.01;
  q(kVx, kVx) = 0.02;
  q(kAx, kAx) = 0.005;

  FilterConfig config;
  config.process_noise = q;
  Ekf ekf(Frame::Local, config);
  StateEstimate init;
  init.covariance = StateCovariance::Identity();
  init.covariance(kX, kVx) = init.covariance(kVx, kX) = 0.3;
  ekf.initialize(init);

  oracle::LinearKf kf;
  kf.x = Eigen::VectorXd::Zero(3);
  kf.p = Eigen::MatrixXd::Identity(3, 3);
  kf.p(0, 1) = kf.p(1, 0) = 0.3;
  Eigen::MatrixXd f(3, 3);
  f << 1, dt, 0.5 * dt * dt, 0, 1, dt, 0, 0, 1;
  const Eigen::MatrixXd qd = Eigen::Vector3d(0.01, 0.02, 0.005).asDiagonal() * dt;
  Eigen::MatrixXd h(1, 3);
  h << 1, 0, 0;
  const Eigen::MatrixXd rm = Eigen::MatrixXd::Constant(1, 1, r);

  std::mt19937_64 rng(21);
  std::normal_distribution<double> noise(0.0, std::sqrt(r));
  const int idx[3] = {kX, kVx, kAx};
  double worst = 0.0;
  for (int k = 1; k <= 1000; ++k) {
    const double t = k * dt;
    const double z = 1.5 * t + noise(rng);
    REQUIRE(ekf.process(scalar(kX, z, r, t)));
    kf.predict(f, qd);
    kf.update(h, Eigen::VectorXd::Constant(1, z), rm);
    const StateEstimate& s = ekf.state();
    for (int i = 0; i < 3; ++i) {
      worst = std::max(worst, std::abs(s.mean[idx[i]] - kf.x[i]));
      for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(s.covariance(idx[i], idx[j]) - kf.p(i, j)));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("lateness policy") {
  Ekf ekf(Frame::Global, FilterConfig{});
  CHECK_THROWS_AS(ekf.predict_to(1.0), EstimationError);
  ekf.initialize(StateEstimate{});
  CHECK(ekf.state().frame == Frame::Global);
  ekf.predict_to(10.0);
  CHECK(ekf.process(scalar(kX, 1.0, 1.0, 9.7)));
  CHECK(ekf.state().stamp == doctest::Approx(10.0));
  CHECK_FALSE(ekf.process(scalar(kX, 1.0, 1.0, 9.0)));
  CHECK(ekf.dropped_count() == 1);

  std::vector<Measurement> batch{scalar(kX, 2.0, 1.0, 10.4), scalar(kY, 1.0, 1.0, 10.2), scalar(kX, 2.0, 1.0, 1.0)};
  CHECK(ekf.process_batch(batch) == 2);
  CHECK(ekf.state().stamp == doctest::Approx(10.4));
  CHECK(ekf.dropped_count() == 2);
}

TEST_CASE("covariance stays symmetric positive definite") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StateEstimate s;
  s.mean[kVx] = 2.0;
  s.mean[kWz] = 0.2;
  const StateCovariance q = StateCovariance::Identity() * 1e-3;
  for (int k = 0; k < 500; ++k) {
    s = predict(s, 0.01, q);
    Measurement m;
    m.mask = {kX, kY, kYaw, kVx};
    m.values.resize(4);
    for (int i = 0; i < 4; ++i) m.values[i] = s.mean[m.mask[i]] + 0.1 * u(rng);
    m.covariance = MeasMatrix::Identity(4, 4) * 0.01;
    s = fuse(s, m);
    CHECK(max_asymmetry(s.covariance) < 1e-9);
  }
  Eigen::SelfAdjointEigenSolver<StateCovariance> eig(s.covariance);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("gimbal guard in the motion model") {
  StateVector x = StateVector::Zero();
  x[kPitch] = 89.95 * kDeg;
  CHECK_THROWS_AS(motion_model(x, 0.01), DegenerateOrientation);
}
