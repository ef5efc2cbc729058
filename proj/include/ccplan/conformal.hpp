#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ccplan/contraction.hpp"
#include "ccplan/model.hpp"
#include "ccplan/noise.hpp"
#include "ccplan/rng.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

// Target-trajectory distribution: per control channel, a linear combination
// of sinusoidal basis functions at fixed frequencies with normally
// distributed weights; states follow by propagating the nominal dynamics
// from the initial state.
struct TargetSamplerConfig {
  std::vector<double> frequencies;  // rad/s
  Vec weight_std;                   // one entry per control channel, > 0
  int horizon = 0;
  Vec initial_state;

  void validate(const Model& model) const;
  std::uint64_t hash() const;
};

Trajectory sample_target(const TargetSamplerConfig& cfg, const Model& model, RandomStream& rng);

// Discount convention for accumulating per-step terms into scores.
// kRecursive weights term i of S_k by lambda^{k-1-i} (the unrolled decay
// recursion, which dominates the tracking energy); kPaperLiteral weights it
// by lambda^i.
enum class ScoreWeighting { kRecursive, kPaperLiteral };

ScoreWeighting parse_weighting(const std::string& name);
std::string weighting_name(ScoreWeighting w);

using PolicyDesigner = std::function<TrackingPolicy(const Model&, const Trajectory&)>;

// One calibration rollout: simulate the noisy closed loop along the target,
// accumulate decay residuals plus metric-weighted disturbance magnitudes.
// scores[k-1] = S_k for k = 1..N; energies[k-1] = ||Theta (x_k - xbar_k)||.
// A non-finite state marks the rollout diverged and the remaining scores +inf.
struct RolloutScore {
  Vec scores;
  Vec energies;
  bool diverged = false;
};

RolloutScore score_rollout(const Model& model, const Metric& metric, const PolicyDesigner& designer,
                           const Trajectory& target, const std::vector<Vec>& noise_seq,
                           ScoreWeighting weighting);

// K x N nonconformity scores, row j from target j scored against noise
// sequence j of the dataset.
struct ScoreTable {
  Mat S;  // K rows, N columns; S(j, k-1) = S_k for rollout j
  std::string weighting;
  std::uint64_t dataset_seed = 0;
  std::uint64_t sampler_hash = 0;
  std::uint64_t metric_hash = 0;
  int diverged_rollouts = 0;
};

ScoreTable calibrate(const Model& model, const Metric& metric, const DisturbanceDataset& dataset,
                     const TargetSamplerConfig& sampler, ScoreWeighting weighting,
                     const PolicyDesigner& designer, std::uint64_t target_seed, int workers = 1);

// (1-alpha)-quantile of the weighted empirical distribution
// sum_i wbar_i delta_{S_i} + wbar_inf delta_inf with wbar_i =
// w_i/(sum w + 1): the smallest score whose cumulative mass reaches 1-alpha,
// or +inf when only the infinity atom does. Empty weights mean all ones.
double weighted_quantile(const std::vector<double>& scores, const std::vector<double>& weights,
                         double alpha);

struct QuantileSchedule {
  Vec C;                         // length N, C[k-1] applies at step k
  double alpha = 0.0;            // miss level the quantiles were taken at
  std::vector<double> weights;   // empty = uniform
  bool collapsed = false;
  bool collapse_dominates = true;  // C_N >= max_k C_k held before collapsing
};

// Per-step quantiles C_k at miss level alpha = delta - delta_bar. With
// `collapse`, every entry is replaced by C_N and `collapse_dominates`
// records whether C_N actually was the rowwise maximum. Throws
// InsufficientCalibrationError when any quantile is +inf.
QuantileSchedule quantile_schedule(const ScoreTable& table, double delta, double delta_bar,
                                   const std::vector<double>& weights, bool collapse = false);

// Smallest K for which the uniform-weight quantile at miss level alpha is
// finite, i.e. ceil((1-alpha)(K+1)) <= K.
int minimal_calibration_size(double alpha);

std::uint64_t metric_hash(const Metric& metric);

}  // namespace ccplan
