#pragma once

#include <vector>

#include "ccplan/contraction.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

// {x : (x - center)^T W^{-1} (x - center) <= 1}; W may be PSD-degenerate
// (zero directions collapse the set onto the center).
struct Ellipsoid {
  Vec center;
  Mat W;
  double level = 0.0;
};

// Theorem-style state confidence set: W = C^2 * M^{-1}.
Ellipsoid confidence_set(const Vec& center, const Metric& metric, double C, double level);

bool member(const Ellipsoid& e, const Vec& x);

// Ball obstacle in a position subspace picked out of the state by
// `indices` (rows of the selector are distinct unit basis vectors).
struct BallObstacle {
  Vec center;
  double radius = 0.0;
  std::vector<int> indices;

  Mat selector(int n_x) const;
};

struct ConstraintSpec {
  Mat A;  // l x n_x (l may be 0)
  Vec b;
  std::vector<BallObstacle> obstacles;
  Mat H;  // goal polytope, r x n_x
  Vec h;
  double risk = 0.1;  // joint violation budget p

  void validate(int n_x) const;
};

// Equal Bonferroni allocation across the polytope and obstacle families.
double split_risk(double p);

// Support function of the ellipsoid with shape W in direction a:
// sqrt(a^T W a). Shared by the conformal margins (W = eta^2 M^{-1}) and the
// covariance-based margins (W from propagated uncertainty).
double support_margin(const Vec& a, const Mat& W);

// eta * ||a||_{M^{-1}}; the tightened halfspace constraint is
// a^T xbar + margin <= b.
double halfspace_margin(const Vec& a, const Mat& M, double eta);

// Signed distance from the selected position to the ball boundary (negative
// inside) minus the support margin along the outward normal lifted to state
// dimension. The constraint is satisfied iff the result is >= 0. Throws
// DegenerateGeometryError at the ball center where the normal is undefined.
double obstacle_residual(const BallObstacle& obs, const Vec& xbar, const Mat& W);
double obstacle_margin(const BallObstacle& obs, const Vec& xbar, const Mat& M, double eta);

// Control confidence set of Corollary form: Z = L^2 / lambda_min(W^{-1}) * I
// around the target control.
Ellipsoid control_confidence(double lipschitz, const Mat& W, const Vec& ubar, double level);

}  // namespace ccplan
