#include "ccplan/contraction.hpp"

#include <algorithm>
#include <cmath>

namespace ccplan {

Metric make_metric(const Mat& theta, double m_lo, double m_hi, double lambda) {
  if (theta.rows() != theta.cols() || theta.rows() == 0) {
    throw ConfigError("make_metric: Theta must be square");
  }
  if (!(m_lo > 0.0) || !(m_hi >= m_lo)) {
    throw ConfigError("make_metric: requires 0 < m_lo <= m_hi");
  }
  if (!(lambda >= 0.0) || !(lambda < 1.0)) {
    throw ConfigError("make_metric: rate must satisfy 0 <= lambda < 1");
  }

  Metric metric;
  metric.theta = theta;
  metric.M = theta.transpose() * theta;
  metric.M = 0.5 * (metric.M + metric.M.transpose());
  metric.m_lo = m_lo;
  metric.m_hi = m_hi;
  metric.lambda = lambda;

  Eigen::SelfAdjointEigenSolver<Mat> eig(metric.M);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (lo < m_lo - 1e-9 || hi > m_hi + 1e-9) {
    throw ConfigError("make_metric: spectrum of Theta^T Theta outside [m_lo, m_hi]");
  }
  if (lo <= 0.0) throw ConfigError("make_metric: Theta is singular");
  return metric;
}

Metric scaled_identity_metric(int n, double m_lo, double m_hi, double lambda) {
  // The most conservative isotropic choice consistent with the lower bound.
  return make_metric(std::sqrt(m_lo) * Mat::Identity(n, n), m_lo, m_hi, lambda);
}

Metric metric_from_spd(const Mat& spd, double m_lo, double m_hi, double lambda) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (spd + spd.transpose()));
  const Vec ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  Vec scaled(ev.size());
  if (hi - lo < 1e-12) {
    scaled.setConstant(std::clamp(lo, m_lo, m_hi));
  } else {
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      scaled(i) = m_lo + (m_hi - m_lo) * (ev(i) - lo) / (hi - lo);
    }
  }
  // Theta = diag(sqrt(scaled)) V^T reproduces V diag(scaled) V^T.
  const Mat theta = scaled.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  return make_metric(theta, m_lo, m_hi, lambda);
}

double discrete_rate(double gamma, double dt, double m_lo, double m_hi) {
  if (!(gamma > 0.0)) throw ConfigError("discrete_rate: gamma must be positive");
  if (!(dt > 0.0)) throw ConfigError("discrete_rate: dt must be positive");
  if (!(m_lo > 0.0) || !(m_hi >= m_lo)) {
    throw ConfigError("discrete_rate: requires 0 < m_lo <= m_hi");
  }
  const double decay = 1.0 - 2.0 * gamma * dt;
  if (decay <= 0.0) {
    throw ConfigError("discrete_rate: 1 - 2*gamma*dt must be positive");
  }
  const double lambda = std::sqrt(decay * (m_lo / m_hi));
  if (lambda >= 1.0) {
    throw ConfigError("discrete_rate: resulting rate is not < 1");
  }
  return lambda;
}

Vec TrackingPolicy::evaluate(const Vec& x, const Vec& xbar, const Vec& ubar, int k) const {
  if (k < 0 || k >= static_cast<int>(gains.size())) {
    throw ConfigError("TrackingPolicy: step index outside gain schedule");
  }
  return ubar + gains[k] * (x - xbar);
}

Vec TrackingPolicy::evaluate_on_target(const Vec& x, int k) const {
  return evaluate(x, target.states[k], target.controls[k], k);
}

double TrackingPolicy::feedback_lipschitz() const {
  double lip = 0.0;
  for (const Mat& K : gains) {
    Eigen::JacobiSVD<Mat> svd(K);
    lip = std::max(lip, svd.singularValues()(0));
  }
  return lip;
}

TrackingPolicy design_tvlqr(const Model& model, const Trajectory& target, const Mat& Q,
                            const Mat& R) {
  target.validate();
  const int N = target.horizon();
  if (Q.rows() != model.n_x || Q.cols() != model.n_x) throw ConfigError("design_tvlqr: bad Q size");
  if (R.rows() != model.n_u || R.cols() != model.n_u) throw ConfigError("design_tvlqr: bad R size");

  TrackingPolicy policy;
  policy.target = target;
  policy.gains.assign(N, Mat::Zero(model.n_u, model.n_x));

  // Quasi-stationary terminal weight: burn the recursion in at the terminal
  // linearization so the last gains do not fade to the one-step solution
  // (which leaves the position block with a unit closed-loop eigenvalue).
  Mat P = Q;
  {
    const Mat A = model.jac_x(target.states[N], target.controls[N - 1]);
    const Mat B = model.jac_u(target.states[N], target.controls[N - 1]);
    for (int i = 0; i < 200; ++i) {
      const Mat S = R + B.transpose() * P * B;
      const Mat K = -S.ldlt().solve(B.transpose() * P * A);
      Mat P_next = Q + A.transpose() * P * (A + B * K);
      P_next = 0.5 * (P_next + P_next.transpose());
      if ((P_next - P).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + P.lpNorm<Eigen::Infinity>())) {
        P = P_next;
        break;
      }
      P = P_next;
    }
    if (!all_finite(P)) throw DesignError("design_tvlqr: terminal Riccati burn-in diverged");
  }
  for (int k = N - 1; k >= 0; --k) {
    const Mat A = model.jac_x(target.states[k], target.controls[k]);
    const Mat B = model.jac_u(target.states[k], target.controls[k]);
    const Mat S = R + B.transpose() * P * B;
    const Mat K = -S.ldlt().solve(B.transpose() * P * A);
    P = Q + A.transpose() * P * (A + B * K);
    P = 0.5 * (P + P.transpose());
    if (!all_finite(P) || !all_finite(K)) {
      throw DesignError("design_tvlqr: Riccati recursion diverged at step " + std::to_string(k));
    }
    policy.gains[k] = K;
  }
  policy.riccati_initial = P;
  return policy;
}

double energy(const Metric& metric, const Vec& a, const Vec& b) {
  if (a.size() != b.size() || a.size() != metric.theta.cols()) {
    throw ConfigError("energy: dimension mismatch");
  }
  return (metric.theta * (a - b)).norm();
}

double delta_v(const Metric& metric, const Model& model, const TrackingPolicy& policy,
               const Vec& x, const Vec& xbar, const Vec& ubar, int k) {
  const Vec u = policy.evaluate(x, xbar, ubar, k);
  const Vec flow = model.f(x, u);
  const Vec flow_bar = model.f(xbar, ubar);  // policy returns ubar at x = xbar
  const double decayed = metric.lambda * (metric.theta * (x - xbar)).norm();
  return std::max(0.0, (metric.theta * (flow - flow_bar)).norm() - decayed);
}

}  // namespace ccplan
