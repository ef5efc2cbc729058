#include "ccplan/baseline.hpp"

#include <cmath>

namespace ccplan {

namespace {

// Regularized lower incomplete gamma P(a, x): series expansion below a+1,
// Lentz continued fraction for the complement above.
double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw ConfigError("gamma_p: requires a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 1000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1.0 - a;
  double c = 1.0 / 1e-300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

Mat clip_psd(const Mat& cov) {
  const Mat sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  const double lo = eig.eigenvalues().minCoeff();
  if (lo >= 0.0) return sym;
  if (lo < -1e-10) throw NumericalError("propagate: covariance lost positive semidefiniteness");
  const Vec clipped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double chi2_quantile(int dof, double level) {
  if (dof < 1) throw ConfigError("chi2_quantile: dof must be >= 1");
  if (!(level > 0.0) || !(level < 1.0)) throw ConfigError("chi2_quantile: level outside (0,1)");
  const double a = 0.5 * dof;
  const auto cdf = [a](double x) { return gamma_p(a, 0.5 * x); };

  double hi = std::max(10.0, dof + 10.0);
  while (cdf(hi) < level) {
    hi *= 2.0;
    if (hi > 1e12) throw NumericalError("chi2_quantile: bracketing failed");
  }
  double lo = 0.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < level ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<GaussianBelief> propagate(const Model& model, const TrackingPolicy& gains,
                                      const Trajectory& plan, const Mat& sigma_w, const Vec& mu0) {
  plan.validate();
  const int N = plan.horizon();
  if (static_cast<int>(gains.gains.size()) != N) {
    throw ConfigError("propagate: gain schedule does not match plan horizon");
  }
  if (sigma_w.rows() != model.n_w || sigma_w.cols() != model.n_w) {
    throw ConfigError("propagate: sigma_w size mismatch");
  }

  std::vector<GaussianBelief> beliefs;
  beliefs.reserve(N + 1);
  beliefs.push_back({mu0, Mat::Zero(model.n_x, model.n_x)});
  for (int k = 0; k < N; ++k) {
    const Vec& mu = beliefs.back().mean;
    const Mat& cov = beliefs.back().cov;
    const Vec u = gains.evaluate(mu, plan.states[k], plan.controls[k], k);
    const Mat A_cl = model.jac_x(mu, u) + model.jac_u(mu, u) * gains.gains[k];
    const Mat D = model.D(mu);
    GaussianBelief next;
    next.mean = model.f(mu, u);
    next.cov = clip_psd(A_cl * cov * A_cl.transpose() + D * sigma_w * D.transpose());
    if (!all_finite(next.mean) || !all_finite(next.cov)) {
      throw NumericalError("propagate: belief diverged at step " + std::to_string(k));
    }
    beliefs.push_back(std::move(next));
  }
  return beliefs;
}

BaselineResult baseline_plan_and_evaluate(const Model& model, const ConstraintSpec& constraints,
                                          const Mat& cost_R, const Vec& x0, int N, double p,
                                          const DisturbanceDataset& dataset,
                                          const NoiseDistribution& true_dist, int runs,
                                          std::uint64_t mc_seed, const BaselineOptions& options) {
  if (dataset.K < 1 || dataset.samples.empty()) {
    throw ConfigError("baseline: dataset is empty");
  }

  BaselineResult result;

  std::vector<Vec> pooled;
  pooled.reserve(static_cast<std::size_t>(dataset.K) * dataset.N);
  for (const auto& seq : dataset.samples)
    for (const auto& w : seq) pooled.push_back(w);
  result.fitted = fit_gaussian_mle(pooled);

  const double chi2_step = chi2_quantile(model.n_x, 1.0 - 0.5 * p);
  const double chi2_goal = chi2_quantile(model.n_x, 1.0 - p);

  PlannerProblem prob;
  prob.model = model;
  prob.constraints = constraints;
  prob.R = cost_R;
  prob.x0 = x0;
  prob.N = N;
  prob.delta = p;
  prob.options = options.solve;
  prob.step_shapes.assign(std::max(0, N - 1), Mat::Zero(model.n_x, model.n_x));
  prob.terminal_shape = Mat::Zero(model.n_x, model.n_x);
  prob.seed_clearance = 0.0;

  // Untightened first sweep, then alternate solve <-> propagate until the
  // tightening shapes settle.
  Trajectory seed = warm_start(prob);
  std::vector<Mat> prev_shapes = prob.step_shapes;
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    result.sweeps = sweep + 1;
    result.plan = solve(prob, seed);
    if (result.plan.status == SolveStatus::kInfeasible) break;
    seed = result.plan.target;

    result.policy = design_tvlqr(model, result.plan.target, options.lqr_Q, options.lqr_R);
    result.beliefs = propagate(model, result.policy, result.plan.target, result.fitted.cov, x0);

    double change = 0.0;
    double radius = 0.0;
    for (int k = 1; k <= N - 1; ++k) {
      const Mat W = chi2_step * result.beliefs[k].cov;
      change = std::max(change, (W - prob.step_shapes[k - 1]).lpNorm<Eigen::Infinity>());
      prob.step_shapes[k - 1] = W;
      radius = std::max(radius, std::sqrt(
          Eigen::SelfAdjointEigenSolver<Mat>(W).eigenvalues().maxCoeff()));
    }
    const Mat WN = chi2_goal * result.beliefs[N].cov;
    change = std::max(change, (WN - prob.terminal_shape).lpNorm<Eigen::Infinity>());
    prob.terminal_shape = WN;
    prob.seed_clearance = radius;
    if (change < options.shape_tolerance) break;
  }

  if (result.plan.status != SolveStatus::kInfeasible) {
    result.report = evaluate(model, result.policy, scaled_identity_metric(model.n_x, 1.0, 1.0, 0.0),
                             result.plan.target, true_dist, runs, constraints, Vec(), mc_seed,
                             options.workers);
  }
  return result;
}

}  // namespace ccplan
