#pragma once

#include <vector>

#include "ccplan/model.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

// Constant metric M = Theta^T Theta with spectrum inside [m_lo, m_hi] and
// one-step decay rate lambda in [0,1). Immutable after construction.
struct Metric {
  Mat theta;
  Mat M;
  double m_lo = 0.0;
  double m_hi = 0.0;
  double lambda = 0.0;
};

// Validates the factorization, the spectrum bounds (tolerance 1e-9) and the
// rate, then freezes the bundle.
Metric make_metric(const Mat& theta, double m_lo, double m_hi, double lambda);

// Default metric c*I with c = clamp(1, m_lo, m_hi). Any constant SPD matrix
// is statistically valid here; contraction shortfalls surface as positive
// decay residuals rather than broken coverage.
Metric scaled_identity_metric(int n, double m_lo, double m_hi, double lambda);

// Spectral rescale of an SPD matrix into [m_lo, m_hi], e.g. to reuse a
// Riccati solution as the metric.
Metric metric_from_spd(const Mat& spd, double m_lo, double m_hi, double lambda);

// lambda = sqrt((1 - 2*gamma*dt) * m_lo/m_hi), the discrete-time rate induced
// by a continuous rate gamma under the metric's spectrum bounds.
double discrete_rate(double gamma, double dt, double m_lo, double m_hi);

// Error-feedback tracking policy attached to a target trajectory:
// u = u_bar_k + K_k (x - x_bar_k). Evaluating at x = x_bar_k returns
// u_bar_k exactly, so the target is a solution of the nominal closed loop.
struct TrackingPolicy {
  Trajectory target;
  std::vector<Mat> gains;  // K_0..K_{N-1}, each n_u x n_x
  Mat riccati_initial;     // P_0 from the backward pass (empty for hand-built policies)

  Vec evaluate(const Vec& x, const Vec& xbar, const Vec& ubar, int k) const;
  Vec evaluate_on_target(const Vec& x, int k) const;

  // max_k ||K_k||_2; Lipschitz constant of the error feedback.
  double feedback_lipschitz() const;
};

// Finite-horizon discrete Riccati backward pass along the linearization of
// the target. Throws DesignError if the recursion produces non-finite values.
TrackingPolicy design_tvlqr(const Model& model, const Trajectory& target, const Mat& Q,
                            const Mat& R);

// ||Theta (a - b)||, the weighted-norm specialization of the Riemann energy
// for constant metrics.
double energy(const Metric& metric, const Vec& a, const Vec& b);

// Residual of the one-step decay condition:
// max{0, ||Theta (phi(x) - phi(xbar))|| - lambda ||Theta (x - xbar)||}
// where phi(x) = f(x, policy(x, xbar, ubar)).
double delta_v(const Metric& metric, const Model& model, const TrackingPolicy& policy,
               const Vec& x, const Vec& xbar, const Vec& ubar, int k);

}  // namespace ccplan
