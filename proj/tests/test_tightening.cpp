#include <doctest.h>

#include <cmath>

#include "ccplan/rng.hpp"
#include "ccplan/tightening.hpp"
#include "test_helpers.hpp"

using namespace ccplan;

namespace {

Mat random_spd(RandomStream& rng, int n, double scale = 1.0) {
  Mat A(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) A(r, c) = rng.uniform(-1.0, 1.0);
  return scale * (A * A.transpose() + 0.1 * Mat::Identity(n, n));
}

// Uniform-ish point inside the unit ball (rejection-free: direction * r^(1/n)).
Vec ball_point(RandomStream& rng, int n) {
  Vec d(n);
  for (int i = 0; i < n; ++i) d(i) = rng.normal();
  d.normalize();
  return d * std::pow(rng.uniform01(), 1.0 / n);
}

}  // namespace

TEST_CASE("split_risk: equal Bonferroni halves") {
  CHECK(split_risk(0.1) == doctest::Approx(0.05));
  CHECK(split_risk(0.5) == doctest::Approx(0.25));
  CHECK(split_risk(1e-9) == doctest::Approx(5e-10));
  CHECK_THROWS_AS(split_risk(0.0), ConfigError);
  CHECK_THROWS_AS(split_risk(1.0), ConfigError);
}

TEST_CASE("member: hand cases") {
  Ellipsoid unit{Vec::Zero(2), Mat::Identity(2, 2), 0.9};
  CHECK(member(unit, Vec::Zero(2)));
  Vec boundary(2);
  boundary << 1, 0;
  CHECK(member(unit, boundary));

  Vec d(2);
  d << 4, 1;
  Ellipsoid stretched{Vec::Zero(2), Mat(d.asDiagonal()), 0.9};
  Vec inside(2), outside(2);
  inside << 2, 0;
  outside << 2.01, 0;
  CHECK(member(stretched, inside));
  CHECK_FALSE(member(stretched, outside));
}

TEST_CASE("member: invariant under congruence transforms") {
  RandomStream rng(83);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3;
    const Mat W = random_spd(rng, n);
    Vec c(n), x(n);
    for (int i = 0; i < n; ++i) {
      c(i) = rng.uniform(-2, 2);
      x(i) = rng.uniform(-3, 3);
    }
    Mat T(n, n);
    do {
      for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < n; ++cc) T(r, cc) = rng.uniform(-1, 1);
    } while (std::abs(T.determinant()) < 0.1);

    const Ellipsoid original{c, W, 0.9};
    const Ellipsoid mapped{T * c, T * W * T.transpose(), 0.9};
    CHECK(member(original, x) == member(mapped, T * x));
  }
}

TEST_CASE("halfspace_margin: hand values") {
  Vec a(4);
  a << 0, 1, 0, 0;
  CHECK(halfspace_margin(a, Mat::Identity(4, 4), 0.0) == 0.0);
  CHECK(halfspace_margin(a, Mat::Identity(4, 4), 0.3) == doctest::Approx(0.3));

  Vec d(4);
  d << 4, 1, 1, 1;
  Vec e1(4);
  e1 << 1, 0, 0, 0;
  CHECK(halfspace_margin(e1, Mat(d.asDiagonal()), 1.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(halfspace_margin(e1, Mat::Identity(4, 4), -0.1), ConfigError);
}

TEST_CASE("obstacle_margin: hand values and degeneracy") {
  BallObstacle obs;
  obs.center = Vec::Zero(2);
  obs.radius = 1.2;
  obs.indices = {0, 1};

  Vec x(4);
  x << 2, 0, 0.7, 1.0;
  CHECK(obstacle_margin(obs, x, Mat::Identity(4, 4), 0.0) == doctest::Approx(0.8));
  CHECK(obstacle_margin(obs, x, Mat::Identity(4, 4), 0.3) == doctest::Approx(0.5));

  Vec boundary(4);
  boundary << 1.2, 0, 0, 0;
  CHECK(obstacle_margin(obs, boundary, Mat::Identity(4, 4), 0.3) < 0.0);

  Vec center(4);
  center << 0, 0, 1, 1;
  CHECK_THROWS_AS(obstacle_margin(obs, center, Mat::Identity(4, 4), 0.1),
                  DegenerateGeometryError);
}

TEST_CASE("control_confidence: hand values") {
  const Vec ubar = Vec::Zero(2);
  const Ellipsoid z = control_confidence(2.0, Mat::Identity(3, 3), ubar, 0.9);
  CHECK((z.W - 4.0 * Mat::Identity(2, 2)).isZero(1e-12));

  const Ellipsoid small = control_confidence(1.0, 0.25 * Mat::Identity(3, 3), ubar, 0.9);
  CHECK(small.W(0, 0) == doctest::Approx(0.25));  // radius 1/2

  const Ellipsoid point = control_confidence(0.0, Mat::Identity(3, 3), ubar, 0.9);
  CHECK(member(point, ubar));
  Vec off(2);
  off << 1e-6, 0;
  CHECK_FALSE(member(point, off));
}

TEST_CASE("tightening: Minkowski containment for halfspaces") {
  RandomStream rng(89);
  const int n = 4;
  for (int scenario = 0; scenario < 10; ++scenario) {
    const Mat M = random_spd(rng, n);
    const Mat Minv = M.llt().solve(Mat::Identity(n, n));
    const double eta = rng.uniform(0.05, 2.0);
    Vec a(n), xbar(n);
    for (int i = 0; i < n; ++i) {
      a(i) = rng.uniform(-1, 1);
      xbar(i) = rng.uniform(-2, 2);
    }
    const double margin = halfspace_margin(a, M, eta);
    const double b = a.dot(xbar) + margin;  // tightened constraint active at xbar

    const Mat W = eta * eta * Minv;
    const Mat L = Mat(W.llt().matrixL());
    double worst = -1e300;
    for (int s = 0; s < 1000; ++s) {
      const Vec y = xbar + L * ball_point(rng, n);
      CHECK(a.dot(y) <= b + 1e-9);
      worst = std::max(worst, a.dot(y) - a.dot(xbar));
    }
    // Support-function exactness: boundary samples approach the margin.
    for (int s = 0; s < 2000; ++s) {
      Vec d(n);
      for (int i = 0; i < n; ++i) d(i) = rng.normal();
      d.normalize();
      worst = std::max(worst, a.dot(L * d));
    }
    CHECK(worst <= margin + 1e-9);
    CHECK(worst >= margin * 0.99);
  }
}

TEST_CASE("tightening: obstacle soundness on the position subspace") {
  RandomStream rng(97);
  BallObstacle obs;
  obs.center = Vec(2);
  obs.center << 1.0, -0.5;
  obs.radius = 0.8;
  obs.indices = {0, 1};

  int checked = 0;
  while (checked < 10) {
    const Mat M = random_spd(rng, 4);
    const double eta = rng.uniform(0.05, 1.0);
    Vec xbar(4);
    for (int i = 0; i < 4; ++i) xbar(i) = rng.uniform(-3, 3);
    double residual = 0.0;
    try {
      residual = obstacle_margin(obs, xbar, M, eta);
    } catch (const DegenerateGeometryError&) {
      continue;
    }
    if (residual < 0.0) continue;  // tightened constraint not satisfied; nothing to check
    ++checked;

    const Mat W = eta * eta * M.llt().solve(Mat::Identity(4, 4));
    const Mat L = Mat(W.llt().matrixL());
    const Mat P = obs.selector(4);
    for (int s = 0; s < 1000; ++s) {
      const Vec y = xbar + L * ball_point(rng, 4);
      CHECK((P * y - obs.center).norm() >= obs.radius);
    }
  }
}

TEST_CASE("tightening: margins shared between metric and covariance forms") {
  RandomStream rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat M = random_spd(rng, 4);
    const double eta = rng.uniform(0.0, 2.0);
    Vec a(4);
    for (int i = 0; i < 4; ++i) a(i) = rng.uniform(-1, 1);
    const Mat W = eta * eta * M.llt().solve(Mat::Identity(4, 4));
    CHECK(halfspace_margin(a, M, eta) == doctest::Approx(support_margin(a, W)).epsilon(1e-12));
  }
}

TEST_CASE("confidence_set: Theorem-style shape") {
  const Metric metric = testing::dubins_metric();
  const Vec c = testing::dubins_x0();
  const Ellipsoid e = confidence_set(c, metric, 0.3, 0.9);
  const Mat Minv = metric.M.llt().solve(Mat::Identity(4, 4));
  CHECK((e.W - 0.09 * Minv).isZero(1e-12));
  CHECK(member(e, c));
}
