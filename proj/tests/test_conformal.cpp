#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ccplan/conformal.hpp"
#include "test_helpers.hpp"

using namespace ccplan;
using namespace ccplan::testing;

namespace {

Model scalar_model(double a, double b) {
  Model m;
  m.id = "scalar";
  m.n_x = 1;
  m.n_u = 1;
  m.n_w = 1;
  m.dt = 1.0;
  m.f = [a, b](const Vec& x, const Vec& u) { return Vec::Constant(1, a * x(0) + b * u(0)); };
  m.D = [](const Vec&) { return Mat::Identity(1, 1); };
  m.jac_x = [a](const Vec&, const Vec&) { return Mat::Constant(1, 1, a); };
  m.jac_u = [b](const Vec&, const Vec&) { return Mat::Constant(1, 1, b); };
  return m;
}

PolicyDesigner fixed_gain_designer(double gain) {
  return [gain](const Model&, const Trajectory& target) {
    TrackingPolicy policy;
    policy.target = target;
    policy.gains.assign(target.horizon(), Mat::Constant(1, 1, gain));
    return policy;
  };
}

// Remark-style order statistic rule for exchangeable scores.
double vanilla_quantile_oracle(std::vector<double> scores, double alpha) {
  const int K = static_cast<int>(scores.size());
  const int j = static_cast<int>(std::ceil((1.0 - alpha) * (K + 1)));
  if (j > K) return std::numeric_limits<double>::infinity();
  std::sort(scores.begin(), scores.end());
  return scores[j - 1];
}

}  // namespace

TEST_CASE("sample_target: construction invariants") {
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  TargetSamplerConfig cfg = dubins_sampler(40, dubins_x0());

  RandomStream rng(3);
  const Trajectory traj = sample_target(cfg, model, rng);
  REQUIRE(traj.horizon() == 40);
  CHECK((traj.states[0] - dubins_x0()).isZero(0.0));
  for (int k = 0; k < 40; ++k) {
    const Vec predicted = step_nominal(model, traj.states[k], traj.controls[k]);
    CHECK((traj.states[k + 1] - predicted).lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  RandomStream other(4);
  const Trajectory traj2 = sample_target(cfg, model, other);
  bool differs = false;
  for (int k = 0; k < 40 && !differs; ++k) {
    differs = !(traj.controls[k] - traj2.controls[k]).isZero(0.0);
  }
  CHECK(differs);
}

TEST_CASE("sample_target: vanishing weight scale gives the uncontrolled flow") {
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  TargetSamplerConfig cfg = dubins_sampler(30, dubins_x0());
  cfg.weight_std = Vec::Constant(2, 1e-12);
  RandomStream rng(8);
  const Trajectory traj = sample_target(cfg, model, rng);
  const Trajectory flow = rollout_nominal(model, dubins_x0(), std::vector<Vec>(30, Vec::Zero(2)));
  for (int k = 0; k < 30; ++k) {
    CHECK(traj.controls[k].lpNorm<Eigen::Infinity>() <= 1e-9);
    CHECK((traj.states[k + 1] - flow.states[k + 1]).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("score_rollout: exactly contracting noiseless loop scores zero") {
  const Model model = scalar_model(1.0, 1.0);
  const Metric metric = make_metric(Mat::Identity(1, 1), 1.0, 1.0, 0.5);
  const Trajectory target = rollout_nominal(model, Vec::Zero(1),
                                            std::vector<Vec>(20, Vec::Constant(1, 0.3)));
  const std::vector<Vec> zero_noise(20, Vec::Zero(1));
  const RolloutScore score = score_rollout(model, metric, fixed_gain_designer(-0.5), target,
                                           zero_noise, ScoreWeighting::kRecursive);
  CHECK(score.scores.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(score.energies.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK_FALSE(score.diverged);
}

TEST_CASE("score_rollout: constant term gives a geometric series") {
  // Gain -0.7 makes the closed loop contract exactly at rate 0.3, so the
  // decay residual vanishes and each term is the disturbance magnitude.
  const double lambda = 0.3, c = 0.25;
  const Model model = scalar_model(1.0, 1.0);
  const Metric metric = make_metric(Mat::Identity(1, 1), 1.0, 1.0, lambda);
  const int N = 15;
  const Trajectory target = rollout_nominal(model, Vec::Zero(1),
                                            std::vector<Vec>(N, Vec::Zero(1)));
  const std::vector<Vec> noise(N, Vec::Constant(1, c));

  const RolloutScore recursive = score_rollout(model, metric, fixed_gain_designer(-0.7), target,
                                               noise, ScoreWeighting::kRecursive);
  const RolloutScore literal = score_rollout(model, metric, fixed_gain_designer(-0.7), target,
                                             noise, ScoreWeighting::kPaperLiteral);
  for (int k = 1; k <= N; ++k) {
    const double expected = c * (1.0 - std::pow(lambda, k)) / (1.0 - lambda);
    CHECK(recursive.scores(k - 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(literal.scores(k - 1) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("score_rollout: recursive scores dominate the tracking energy") {
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  const Metric metric = dubins_metric();
  const NoiseDistribution dist = case1_noise();
  RandomStream rng(55);
  for (int trial = 0; trial < 5; ++trial) {
    const Trajectory target =
        sample_target(dubins_sampler(50, dubins_x0()), model, rng);
    std::vector<Vec> noise;
    for (int k = 0; k < 50; ++k) noise.push_back(sample(dist, rng));
    const RolloutScore score = score_rollout(model, metric, tight_designer(), target, noise,
                                             ScoreWeighting::kRecursive);
    for (int k = 0; k < 50; ++k) CHECK(score.scores(k) >= score.energies(k) - 1e-9);
  }
}

TEST_CASE("score_rollout: paper-literal rows are nondecreasing") {
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  const Metric metric = dubins_metric();
  RandomStream rng(59);
  const Trajectory target = sample_target(dubins_sampler(40, dubins_x0()), model, rng);
  std::vector<Vec> noise;
  const NoiseDistribution dist = case1_noise();
  for (int k = 0; k < 40; ++k) noise.push_back(sample(dist, rng));
  const RolloutScore score = score_rollout(model, metric, tight_designer(), target, noise,
                                           ScoreWeighting::kPaperLiteral);
  for (int k = 1; k < 40; ++k) CHECK(score.scores(k) >= score.scores(k - 1) - 1e-15);
}

TEST_CASE("score_rollout: divergence marks the tail with +inf") {
  const Model model = scalar_model(1e6, 1.0);  // violently unstable
  const Metric metric = make_metric(Mat::Identity(1, 1), 1.0, 1.0, 0.2);
  Trajectory target;
  target.states.assign(121, Vec::Zero(1));
  target.controls.assign(120, Vec::Zero(1));
  const std::vector<Vec> noise(120, Vec::Constant(1, 1.0));
  const RolloutScore score = score_rollout(model, metric, fixed_gain_designer(0.0), target, noise,
                                           ScoreWeighting::kRecursive);
  CHECK(score.diverged);
  CHECK(std::isinf(score.scores(119)));
}

TEST_CASE("calibrate: table shape, determinism, worker independence") {
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  const Metric metric = dubins_metric();
  const DisturbanceDataset dataset = build_dataset(case1_noise(), 20, 200, 1001);
  const TargetSamplerConfig sampler = dubins_sampler(200, dubins_x0());

  const ScoreTable a = calibrate(model, metric, dataset, sampler, ScoreWeighting::kRecursive,
                                 tight_designer(), 2002, 1);
  REQUIRE(a.S.rows() == 20);
  REQUIRE(a.S.cols() == 200);
  CHECK(a.S.minCoeff() >= 0.0);

  const ScoreTable b = calibrate(model, metric, dataset, sampler, ScoreWeighting::kRecursive,
                                 tight_designer(), 2002, 2);
  CHECK((a.S - b.S).isZero(0.0));
}

TEST_CASE("weighted_quantile: hand examples") {
  SUBCASE("uniform weights with the infinity atom") {
    CHECK(weighted_quantile({1, 2, 3, 4}, {1, 1, 1, 1}, 0.2) == doctest::Approx(4.0));
  }
  SUBCASE("K=20 at alpha=0.1 is the 19th order statistic") {
    RandomStream rng(61);
    std::vector<double> scores(20);
    for (auto& s : scores) s = rng.uniform(0.0, 10.0);
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    CHECK(weighted_quantile(scores, {}, 0.1) == sorted[18]);
  }
  SUBCASE("insufficient mass returns the infinity sentinel") {
    CHECK(std::isinf(weighted_quantile({5.0}, {}, 0.25)));
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(weighted_quantile({}, {}, 0.1), ConfigError);
    CHECK_THROWS_AS(weighted_quantile({1.0}, {2.0}, 0.1), ConfigError);
    CHECK_THROWS_AS(weighted_quantile({1.0}, {}, 0.0), ConfigError);
  }
}

TEST_CASE("weighted_quantile: uniform weights reduce to the order-statistic rule") {
  RandomStream rng(67);
  for (int trial = 0; trial < 1000; ++trial) {
    const int K = 1 + static_cast<int>(rng.uniform(0, 50));
    std::vector<double> scores(K);
    for (auto& s : scores) s = rng.uniform(-5.0, 5.0);
    double alpha = rng.uniform(0.02, 0.5);
    // Keep (1-alpha)(K+1) away from integers so both conventions agree
    // unambiguously in floating point.
    const double pos = (1.0 - alpha) * (K + 1);
    if (std::abs(pos - std::round(pos)) < 1e-6) {
      alpha += 1e-3;
    }
    CHECK(weighted_quantile(scores, {}, alpha) == vanilla_quantile_oracle(scores, alpha));
  }
}

TEST_CASE("quantile_schedule: order statistics, monotonicity, collapse") {
  RandomStream rng(71);
  ScoreTable table;
  table.S = Mat::Zero(20, 6);
  for (int j = 0; j < 20; ++j)
    for (int k = 0; k < 6; ++k) table.S(j, k) = rng.uniform(0.0, 3.0);

  const QuantileSchedule q = quantile_schedule(table, 0.1, 0.0, {});
  for (int k = 0; k < 6; ++k) {
    std::vector<double> col(20);
    for (int j = 0; j < 20; ++j) col[j] = table.S(j, k);
    std::sort(col.begin(), col.end());
    CHECK(q.C(k) == col[18]);
  }

  const QuantileSchedule q2 = quantile_schedule(table, 0.3, 0.0, {});
  for (int k = 0; k < 6; ++k) CHECK(q.C(k) >= q2.C(k));

  const QuantileSchedule collapsed = quantile_schedule(table, 0.1, 0.0, {}, true);
  for (int k = 0; k < 6; ++k) CHECK(collapsed.C(k) == q.C(5));
  CHECK(collapsed.collapsed);
  CHECK(collapsed.collapse_dominates == (q.C(5) >= q.C.maxCoeff() - 1e-15));

  ScoreTable small;
  small.S = Mat::Zero(5, 3);
  CHECK_THROWS_AS(quantile_schedule(small, 0.1, 0.0, {}), InsufficientCalibrationError);
  CHECK_THROWS_AS(quantile_schedule(table, 0.1, 0.2, {}), ConfigError);
}

TEST_CASE("quantile_schedule: minimal calibration size for alpha=0.1") {
  CHECK(minimal_calibration_size(0.1) == 9);  // ceil(0.9*10) = 9 <= 9
  CHECK(minimal_calibration_size(0.05) == 19);
}

TEST_CASE("conformal: synthetic marginal coverage") {
  // K=20 calibration + 1 test score per trial, i.i.d.; Lemma-style marginal
  // coverage averaged over trials must sit near ceil(0.9*21)/21.
  RandomStream rng(73);
  const int trials = 2000;
  int covered = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> scores(20);
    for (auto& s : scores) s = std::abs(rng.normal());
    const double q = weighted_quantile(scores, {}, 0.1);
    if (std::abs(rng.normal()) <= q) ++covered;
  }
  const double coverage = static_cast<double>(covered) / trials;
  const double expect = 19.0 / 21.0;
  CHECK(coverage >= 0.9 - 3.0 * std::sqrt(expect * (1 - expect) / trials));
  CHECK(coverage <= 1.0);
}
