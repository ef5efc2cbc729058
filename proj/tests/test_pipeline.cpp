#include <doctest.h>

#include <cmath>

#include "ccplan/baseline.hpp"
#include "ccplan/conformal.hpp"
#include "ccplan/montecarlo.hpp"
#include "ccplan/trajopt.hpp"
#include "test_helpers.hpp"

using namespace ccplan;
using namespace ccplan::testing;

namespace {

struct Pipeline {
  Model model;
  Metric metric;
  NoiseDistribution noise;
  DisturbanceDataset dataset;
  ConstraintSpec cons;
  Vec eta_vec;
  double eta = 0.0;
  Vec coverage;
  PlanResult plan;
  TrackingPolicy policy;

  Pipeline(const NoiseDistribution& dist, const Mat& noise_map, int N, int K = 20)
      : model(dubins_model(0.05, noise_map)),
        metric(dubins_metric()),
        noise(dist),
        dataset(build_dataset(dist, K, N, 1001)),
        cons(dubins_constraints()) {
    // Shorter course for integration tests: goal at x = 3.
    cons.h(0) = 4.0;
    cons.h(1) = -2.0;
    cons.obstacles[0].center << 1.5, 0.0;
    cons.obstacles[0].radius = 0.6;

    const TargetSamplerConfig sampler = dubins_sampler(N, dubins_x0());
    const ScoreTable table = calibrate(model, metric, dataset, sampler,
                                       ScoreWeighting::kRecursive, tight_designer(), 2002, 2);
    const QuantileSchedule cov = quantile_schedule(table, 0.1, 0.0, {}, true);
    coverage = cov.C;
    eta = cov.C(N - 1);
    eta_vec = Vec::Constant(N - 1, eta);
  }

  PlanResult solve_with(double scale) {
    PlannerProblem prob = conformal_problem(model, cons, metric, scale * eta_vec, scale * eta,
                                            0.1 * Mat::Identity(2, 2), dubins_x0(),
                                            dataset.N, 0.1);
    return ccplan::solve(prob, warm_start(prob));
  }
};

}  // namespace

TEST_CASE("pipeline: small Dubins case (i) end to end") {
  Pipeline p(case1_noise(), Mat::Identity(4, 4), 80);
  REQUIRE(p.eta > 0.0);
  CHECK(std::isfinite(p.eta));

  p.plan = p.solve_with(1.0);
  REQUIRE(p.plan.status != SolveStatus::kInfeasible);
  CHECK(p.plan.max_defect <= 1e-6);
  CHECK(p.plan.max_violation <= 1e-6);

  p.policy = tight_designer()(p.model, p.plan.target);
  const MCReport report = evaluate(p.model, p.policy, p.metric, p.plan.target, p.noise, 100,
                                   p.cons, p.coverage, 3003, 2);
  CHECK(report.max_failure_prob <= 0.10);
  CHECK(report.min_coverage >= 0.9 - 3.0 * std::sqrt(0.09 / 100.0));
  CHECK(report.diverged_runs == 0);
}

TEST_CASE("pipeline: violation does not drop when margins are removed") {
  Pipeline p(case2_noise(), case2_noise_map(), 80);
  const PlanResult tightened = p.solve_with(1.0);
  const PlanResult naked = p.solve_with(0.0);
  REQUIRE(tightened.status != SolveStatus::kInfeasible);
  REQUIRE(naked.status != SolveStatus::kInfeasible);

  const TrackingPolicy pol_t = tight_designer()(p.model, tightened.target);
  const TrackingPolicy pol_n = tight_designer()(p.model, naked.target);
  const MCReport rep_t =
      evaluate(p.model, pol_t, p.metric, tightened.target, p.noise, 100, p.cons, Vec(), 3003, 2);
  const MCReport rep_n =
      evaluate(p.model, pol_n, p.metric, naked.target, p.noise, 100, p.cons, Vec(), 3003, 2);
  CHECK(rep_n.max_failure_prob >= rep_t.max_failure_prob);
}

TEST_CASE("pipeline: calibration artifacts reproduce across worker counts and seeds") {
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  const Metric metric = dubins_metric();
  const DisturbanceDataset dataset = build_dataset(case1_noise(), 20, 60, 5);
  const TargetSamplerConfig sampler = dubins_sampler(60, dubins_x0());
  const ScoreTable t1 = calibrate(model, metric, dataset, sampler, ScoreWeighting::kRecursive,
                                  tight_designer(), 9, 1);
  const ScoreTable t4 = calibrate(model, metric, dataset, sampler, ScoreWeighting::kRecursive,
                                  tight_designer(), 9, 4);
  CHECK((t1.S - t4.S).isZero(0.0));

  const ScoreTable other = calibrate(model, metric, dataset, sampler, ScoreWeighting::kRecursive,
                                     tight_designer(), 10, 1);
  CHECK_FALSE((t1.S - other.S).isZero(0.0));
}

TEST_CASE("pipeline: insufficient calibration is a typed failure") {
  const Model model = dubins_model(0.05, Mat::Identity(4, 4));
  const Metric metric = dubins_metric();
  const DisturbanceDataset dataset = build_dataset(case1_noise(), 5, 30, 5);
  const TargetSamplerConfig sampler = dubins_sampler(30, dubins_x0());
  const ScoreTable table = calibrate(model, metric, dataset, sampler,
                                     ScoreWeighting::kRecursive, tight_designer(), 9, 1);
  CHECK_THROWS_AS(quantile_schedule(table, 0.1, 0.0, {}), InsufficientCalibrationError);
}
