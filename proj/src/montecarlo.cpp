#include "ccplan/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ccplan/parallel.hpp"

namespace ccplan {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

bool state_in_constraints(const ConstraintSpec& constraints, const Vec& x) {
  if (constraints.A.rows() > 0 && ((constraints.A * x - constraints.b).array() > 0.0).any()) {
    return false;
  }
  for (const auto& obs : constraints.obstacles) {
    const Mat P = obs.selector(static_cast<int>(x.size()));
    if ((P * x - obs.center).norm() < obs.radius) return false;
  }
  return true;
}

RolloutRecord rollout(const Model& model, const TrackingPolicy& policy, const Metric& metric,
                      const Trajectory& plan, const NoiseDistribution& dist, RandomStream rng) {
  plan.validate();
  const int N = plan.horizon();
  if (static_cast<int>(policy.gains.size()) != N) {
    throw ConfigError("rollout: policy gain schedule does not match plan horizon");
  }

  RolloutRecord record;
  record.energies = Vec::Zero(N);
  record.trajectory.states.reserve(N + 1);
  record.trajectory.controls.reserve(N);
  record.trajectory.states.push_back(plan.states[0]);

  Vec x = plan.states[0];
  for (int k = 0; k < N; ++k) {
    const Vec u = policy.evaluate(x, plan.states[k], plan.controls[k], k);
    const Vec w = sample(dist, rng);
    x = step_noisy(model, x, u, w);
    record.trajectory.controls.push_back(u);
    record.trajectory.states.push_back(x);
    if (!all_finite(x)) {
      record.diverged = true;
      for (int r = k; r < N; ++r) record.energies(r) = kInf;
      // Pad the trace so downstream consumers see a full-horizon trajectory.
      for (int r = k + 1; r < N; ++r) {
        record.trajectory.controls.push_back(Vec::Zero(model.n_u));
        record.trajectory.states.push_back(x);
      }
      return record;
    }
    record.energies(k) = energy(metric, x, plan.states[k + 1]);
  }
  return record;
}

MCReport evaluate(const Model& model, const TrackingPolicy& policy, const Metric& metric,
                  const Trajectory& plan, const NoiseDistribution& dist, int runs,
                  const ConstraintSpec& constraints, const Vec& coverage_quantiles,
                  std::uint64_t base_seed, int workers, std::vector<RolloutRecord>* traces) {
  if (runs < 1) throw ConfigError("evaluate: runs must be >= 1");
  plan.validate();
  const int N = plan.horizon();
  const bool audit_coverage = coverage_quantiles.size() > 0;
  if (audit_coverage && coverage_quantiles.size() != N) {
    throw ConfigError("evaluate: coverage quantile schedule must have length N (or 0 to skip)");
  }

  std::vector<RolloutRecord> records(runs);
  RandomStream root(base_seed);
  parallel_for(runs, workers, [&](int i) {
    records[i] = rollout(model, policy, metric, plan, dist,
                         root.substream(static_cast<std::uint64_t>(i)));
  });

  MCReport report;
  report.runs = runs;
  report.step_violations.assign(std::max(0, N - 1), 0);
  report.coverage_failures.assign(N, 0);

  for (const auto& record : records) {
    if (record.diverged) ++report.diverged_runs;
    for (int k = 1; k <= N - 1; ++k) {
      const Vec& xk = record.trajectory.states[k];
      if (!all_finite(xk) || !state_in_constraints(constraints, xk)) {
        ++report.step_violations[k - 1];
      }
    }
    const Vec& xN = record.trajectory.states[N];
    const bool terminal_ok =
        all_finite(xN) && ((constraints.H * xN - constraints.h).array() <= 0.0).all();
    if (!terminal_ok) ++report.terminal_violations;
    if (audit_coverage) {
      for (int k = 1; k <= N; ++k) {
        if (!(record.energies(k - 1) <= coverage_quantiles(k - 1))) {
          ++report.coverage_failures[k - 1];
        }
      }
    }
  }

  for (int k = 1; k <= N - 1; ++k) {
    report.max_step_violation_prob = std::max(
        report.max_step_violation_prob, static_cast<double>(report.step_violations[k - 1]) / runs);
  }
  report.terminal_violation_prob = static_cast<double>(report.terminal_violations) / runs;
  report.max_failure_prob =
      std::max(report.max_step_violation_prob, report.terminal_violation_prob);
  if (audit_coverage) {
    for (int k = 1; k <= N; ++k) {
      report.min_coverage =
          std::min(report.min_coverage,
                   1.0 - static_cast<double>(report.coverage_failures[k - 1]) / runs);
    }
  }
  if (traces) *traces = std::move(records);
  return report;
}

}  // namespace ccplan
