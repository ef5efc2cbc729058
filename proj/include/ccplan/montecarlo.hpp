#pragma once

#include <cstdint>
#include <vector>

#include "ccplan/contraction.hpp"
#include "ccplan/model.hpp"
#include "ccplan/noise.hpp"
#include "ccplan/tightening.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

// One closed-loop realization around a plan: fresh noise every step, the
// tracking policy in the loop, per-step tracking energies recorded.
struct RolloutRecord {
  Trajectory trajectory;
  Vec energies;  // energies[k-1] = ||Theta (x_k - x*_k)||, k = 1..N
  bool diverged = false;
};

RolloutRecord rollout(const Model& model, const TrackingPolicy& policy, const Metric& metric,
                      const Trajectory& plan, const NoiseDistribution& dist, RandomStream rng);

struct MCReport {
  int runs = 0;
  int diverged_runs = 0;
  std::vector<int> step_violations;      // x_k outside the state constraints, k = 1..N-1
  int terminal_violations = 0;           // x_N outside the goal set
  std::vector<int> coverage_failures;    // V_k > C_k, k = 1..N
  double max_step_violation_prob = 0.0;  // max_k over interior steps
  double terminal_violation_prob = 0.0;
  double max_failure_prob = 0.0;  // max over all chance constraints, k in [1,N]
  double min_coverage = 1.0;      // min_k fraction of runs with V_k <= C_k
};

// M independent rollouts (run i draws from the substream keyed by
// (base_seed, i)); chance constraints are audited untightened. Diverged runs
// count as violations at every remaining step. Aggregation is by run index,
// so the report does not depend on the worker count.
MCReport evaluate(const Model& model, const TrackingPolicy& policy, const Metric& metric,
                  const Trajectory& plan, const NoiseDistribution& dist, int runs,
                  const ConstraintSpec& constraints, const Vec& coverage_quantiles,
                  std::uint64_t base_seed, int workers = 1,
                  std::vector<RolloutRecord>* traces = nullptr);

// True iff x satisfies the untightened interior constraints (polytope rows
// and all obstacle signed distances).
bool state_in_constraints(const ConstraintSpec& constraints, const Vec& x);

}  // namespace ccplan
