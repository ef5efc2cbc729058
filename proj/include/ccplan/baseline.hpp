#pragma once

#include <cstdint>
#include <vector>

#include "ccplan/contraction.hpp"
#include "ccplan/model.hpp"
#include "ccplan/montecarlo.hpp"
#include "ccplan/noise.hpp"
#include "ccplan/trajopt.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

// Per-step Gaussian state belief x_k ~ N(mean, cov); covariances stay
// symmetric PSD (eigenvalues below -1e-10 are an error, small negatives are
// clipped).
struct GaussianBelief {
  Vec mean;
  Mat cov;
};

// Mean/covariance propagation through the linearized closed loop along a
// plan: mean_{k+1} = f(mean_k, policy(mean_k)), cov_{k+1} =
// A_cl cov A_cl^T + D Sigma_w D^T with A_cl the closed-loop Jacobian at the
// propagated mean. Returns beliefs for k = 0..N with cov_0 = 0.
std::vector<GaussianBelief> propagate(const Model& model, const TrackingPolicy& gains,
                                      const Trajectory& plan, const Mat& sigma_w, const Vec& mu0);

// Inverse CDF of the chi-squared distribution, bisection on the regularized
// lower incomplete gamma function (tolerance 1e-10).
double chi2_quantile(int dof, double level);

struct BaselineOptions {
  int max_sweeps = 10;
  double shape_tolerance = 1e-4;  // max-norm change of W_k between sweeps
  Mat lqr_Q;
  Mat lqr_R;
  SolveOptions solve;
  int workers = 1;
};

struct BaselineResult {
  PlanResult plan;
  MCReport report;
  Gaussian fitted;  // MLE noise approximation the pipeline planned with
  TrackingPolicy policy;
  std::vector<GaussianBelief> beliefs;
  int sweeps = 0;
};

// The comparison pipeline: Gaussian MLE fit of the pooled dataset, fixed
// point of plan <-> propagate with chi-squared ellipsoid tightening
// (W_k = chi2_{n_x}(1-p/2) Sigma_k at interior steps, level 1-p at the goal),
// then closed-loop evaluation under the true noise distribution.
BaselineResult baseline_plan_and_evaluate(const Model& model, const ConstraintSpec& constraints,
                                          const Mat& cost_R, const Vec& x0, int N, double p,
                                          const DisturbanceDataset& dataset,
                                          const NoiseDistribution& true_dist, int runs,
                                          std::uint64_t mc_seed, const BaselineOptions& options);

}  // namespace ccplan
