#include "ccplan/tightening.hpp"

#include <cmath>
#include <set>

namespace ccplan {

Ellipsoid confidence_set(const Vec& center, const Metric& metric, double C, double level) {
  if (C < 0.0) throw ConfigError("confidence_set: radius scale must be >= 0");
  const Mat Minv = metric.M.llt().solve(Mat::Identity(metric.M.rows(), metric.M.cols()));
  return Ellipsoid{center, C * C * Minv, level};
}

bool member(const Ellipsoid& e, const Vec& x) {
  if (x.size() != e.center.size()) throw ConfigError("member: dimension mismatch");
  const Vec d = x - e.center;
  Eigen::LLT<Mat> llt(e.W);
  if (llt.info() != Eigen::Success) {
    // Degenerate shape: the set collapses onto its center.
    return d.lpNorm<Eigen::Infinity>() <= 1e-12;
  }
  return d.dot(llt.solve(d)) <= 1.0 + 1e-12;
}

Mat BallObstacle::selector(int n_x) const {
  Mat P = Mat::Zero(static_cast<Eigen::Index>(indices.size()), n_x);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= n_x) {
      throw ConfigError("BallObstacle: selector index out of range");
    }
    P(static_cast<Eigen::Index>(r), indices[r]) = 1.0;
  }
  return P;
}

void ConstraintSpec::validate(int n_x) const {
  if (A.rows() != b.size()) throw ConfigError("ConstraintSpec: A/b row mismatch");
  if (A.rows() > 0 && A.cols() != n_x) throw ConfigError("ConstraintSpec: A column mismatch");
  if (H.rows() != h.size()) throw ConfigError("ConstraintSpec: H/h row mismatch");
  if (H.rows() > 0 && H.cols() != n_x) throw ConfigError("ConstraintSpec: H column mismatch");
  if (!(risk > 0.0) || !(risk < 1.0)) throw ConfigError("ConstraintSpec: risk outside (0,1)");
  for (const auto& obs : obstacles) {
    if (!(obs.radius > 0.0)) throw ConfigError("ConstraintSpec: obstacle radius must be positive");
    if (obs.center.size() != static_cast<Eigen::Index>(obs.indices.size())) {
      throw ConfigError("ConstraintSpec: obstacle center/selector size mismatch");
    }
    std::set<int> unique(obs.indices.begin(), obs.indices.end());
    if (unique.size() != obs.indices.size()) {
      throw ConfigError("ConstraintSpec: obstacle selector indices must be distinct");
    }
    obs.selector(n_x);  // range check
  }
}

double split_risk(double p) {
  if (!(p > 0.0) || !(p < 1.0)) throw ConfigError("split_risk: p outside (0,1)");
  return 0.5 * p;
}

double support_margin(const Vec& a, const Mat& W) {
  if (a.size() != W.rows() || W.rows() != W.cols()) {
    throw ConfigError("support_margin: dimension mismatch");
  }
  const double q = a.dot(W.selfadjointView<Eigen::Lower>() * a);
  return std::sqrt(std::max(0.0, q));
}

double halfspace_margin(const Vec& a, const Mat& M, double eta) {
  if (eta < 0.0) throw ConfigError("halfspace_margin: eta must be >= 0");
  const Mat Minv = M.llt().solve(Mat::Identity(M.rows(), M.cols()));
  return eta * support_margin(a, Minv);
}

double obstacle_residual(const BallObstacle& obs, const Vec& xbar, const Mat& W) {
  const Mat P = obs.selector(static_cast<int>(xbar.size()));
  const Vec diff = P * xbar - obs.center;
  const double dist = diff.norm();
  if (dist < 1e-12) {
    throw DegenerateGeometryError("obstacle_residual: query point at obstacle center");
  }
  const Vec normal = P.transpose() * (diff / dist);
  return (dist - obs.radius) - support_margin(normal, W);
}

double obstacle_margin(const BallObstacle& obs, const Vec& xbar, const Mat& M, double eta) {
  if (eta < 0.0) throw ConfigError("obstacle_margin: eta must be >= 0");
  const Mat Minv = M.llt().solve(Mat::Identity(M.rows(), M.cols()));
  return obstacle_residual(obs, xbar, (eta * eta) * Minv);
}

Ellipsoid control_confidence(double lipschitz, const Mat& W, const Vec& ubar, double level) {
  if (lipschitz < 0.0) throw ConfigError("control_confidence: Lipschitz constant must be >= 0");
  Eigen::SelfAdjointEigenSolver<Mat> eig(W);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw ConfigError("control_confidence: W must be positive definite");
  }
  // lambda_min(W^{-1}) = 1 / lambda_max(W)
  const double scale = lipschitz * lipschitz * eig.eigenvalues().maxCoeff();
  return Ellipsoid{ubar, scale * Mat::Identity(ubar.size(), ubar.size()), level};
}

}  // namespace ccplan
