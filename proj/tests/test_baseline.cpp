#include <doctest.h>

#include <cmath>

#include "ccplan/baseline.hpp"
#include "test_helpers.hpp"

using namespace ccplan;
using namespace ccplan::testing;

namespace {

// Closed-form chi-squared CDFs for even/odd small dof, used as independent
// oracles for the incomplete-gamma implementation.
double chi2_cdf_dof2(double x) { return 1.0 - std::exp(-0.5 * x); }
double chi2_cdf_dof4(double x) { return 1.0 - std::exp(-0.5 * x) * (1.0 + 0.5 * x); }
double chi2_cdf_dof1(double x) { return std::erf(std::sqrt(0.5 * x)); }

double bisect(double (*cdf)(double), double level) {
  double lo = 0.0, hi = 100.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < level ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Model scalar_decay_model(double a) {
  Model m;
  m.id = "decay";
  m.n_x = 1;
  m.n_u = 1;
  m.n_w = 1;
  m.dt = 1.0;
  m.f = [a](const Vec& x, const Vec& u) { return Vec::Constant(1, a * x(0) + u(0)); };
  m.D = [](const Vec&) { return Mat::Identity(1, 1); };
  m.jac_x = [a](const Vec&, const Vec&) { return Mat::Constant(1, 1, a); };
  m.jac_u = [](const Vec&, const Vec&) { return Mat::Identity(1, 1); };
  return m;
}

}  // namespace

TEST_CASE("chi2_quantile: oracle values") {
  CHECK(chi2_quantile(2, 0.95) == doctest::Approx(-2.0 * std::log(0.05)).epsilon(1e-9));
  CHECK(chi2_quantile(4, 0.95) == doctest::Approx(bisect(chi2_cdf_dof4, 0.95)).epsilon(1e-8));
  CHECK(chi2_quantile(1, 0.5) == doctest::Approx(bisect(chi2_cdf_dof1, 0.5)).epsilon(1e-8));
  CHECK(chi2_quantile(1, 0.5) == doctest::Approx(0.4549).epsilon(1e-3));
  CHECK(chi2_quantile(4, 0.95) == doctest::Approx(9.4877).epsilon(1e-4));
  CHECK(chi2_quantile(2, 0.95) == doctest::Approx(bisect(chi2_cdf_dof2, 0.95)).epsilon(1e-9));
}

TEST_CASE("chi2_quantile: monotone in level and dof") {
  double prev = 0.0;
  for (double level : {0.05, 0.25, 0.5, 0.75, 0.9, 0.99}) {
    const double q = chi2_quantile(3, level);
    CHECK(q > prev);
    prev = q;
  }
  prev = 0.0;
  for (int dof = 1; dof <= 10; ++dof) {
    const double q = chi2_quantile(dof, 0.9);
    CHECK(q > prev);
    prev = q;
  }
  CHECK_THROWS_AS(chi2_quantile(0, 0.9), ConfigError);
  CHECK_THROWS_AS(chi2_quantile(2, 1.0), ConfigError);
}

TEST_CASE("propagate: noiseless propagation stays a point mass") {
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  const Trajectory plan =
      rollout_nominal(model, dubins_x0(), std::vector<Vec>(20, Vec::Zero(2)));
  const TrackingPolicy policy = tight_designer()(model, plan);
  const auto beliefs = propagate(model, policy, plan, Mat::Zero(4, 4), dubins_x0());
  REQUIRE(beliefs.size() == 21);
  for (int k = 0; k <= 20; ++k) {
    CHECK(beliefs[k].cov.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((beliefs[k].mean - plan.states[k]).isZero(1e-12));
  }
}

TEST_CASE("propagate: scalar Lyapunov fixed point") {
  // Closed loop a_cl = 0.5 (a = 0.5, zero gains), sigma_w^2 = 1:
  // variance converges to 1 / (1 - 0.25) = 4/3.
  const Model model = scalar_decay_model(0.5);
  Trajectory plan;
  plan.states.assign(101, Vec::Zero(1));
  plan.controls.assign(100, Vec::Zero(1));
  TrackingPolicy policy;
  policy.target = plan;
  policy.gains.assign(100, Mat::Zero(1, 1));
  const auto beliefs = propagate(model, policy, plan, Mat::Identity(1, 1), Vec::Zero(1));
  CHECK(beliefs.back().cov(0, 0) == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("propagate: case (ii) noise structure zeroes the position block at k=1") {
  const Model model = dubins_model(0.05, case2_noise_map());
  const Trajectory plan =
      rollout_nominal(model, dubins_x0(), std::vector<Vec>(10, Vec::Zero(2)));
  const TrackingPolicy policy = tight_designer()(model, plan);
  RandomStream rng(3);
  std::vector<Vec> pooled;
  for (int i = 0; i < 200; ++i) pooled.push_back(sample(case2_noise(), rng));
  const Gaussian fit = fit_gaussian_mle(pooled);
  const auto beliefs = propagate(model, policy, plan, fit.cov, dubins_x0());
  const Mat& S1 = beliefs[1].cov;
  CHECK(S1.row(0).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(S1.row(1).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(S1.col(0).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(S1(2, 2) > 0.0);

  for (const auto& belief : beliefs) {
    CHECK((belief.cov - belief.cov.transpose()).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("baseline: Gaussian truth stays within the risk budget") {
  // When the noise really is Gaussian the chi-squared tube is honest, so the
  // empirical failure should not blow past p by much.
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  Gaussian g;
  g.mean = Vec::Zero(4);
  g.cov = 0.01 * Mat::Identity(4, 4);
  const NoiseDistribution truth = g;
  const DisturbanceDataset dataset = build_dataset(truth, 20, 60, 11);

  BaselineOptions opts;
  opts.lqr_Q = Mat::Identity(4, 4);
  opts.lqr_R = 0.001 * Mat::Identity(2, 2);
  opts.workers = 2;

  ConstraintSpec cons = dubins_constraints();
  cons.h(0) = 4.0;  // goal at x = 3 for the short horizon
  cons.h(1) = -2.0;
  cons.obstacles[0].center << 1.5, 0.0;

  const BaselineResult result = baseline_plan_and_evaluate(
      model, cons, 0.1 * Mat::Identity(2, 2), dubins_x0(), 60, 0.1, dataset, truth, 200, 77, opts);
  REQUIRE(result.plan.status != SolveStatus::kInfeasible);
  CHECK(result.sweeps >= 2);
  CHECK(result.report.max_failure_prob <= 0.1 + 3.0 * std::sqrt(0.1 * 0.9 / 200.0));
  CHECK(result.fitted.mean.lpNorm<Eigen::Infinity>() <= 0.05);
}
