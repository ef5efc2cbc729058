#pragma once

#include <functional>
#include <string>

#include "ccplan/types.hpp"

namespace ccplan {

// Discrete-time system x_{k+1} = f(x_k, u_k) + D(x_k) w_k.
//
// f and D must be total for finite inputs. Evaluation is pure; a Model may be
// shared across any number of concurrent workers.
struct Model {
  std::string id;
  int n_x = 0;
  int n_u = 0;
  int n_w = 0;
  double dt = 0.0;

  std::function<Vec(const Vec&, const Vec&)> f;
  std::function<Mat(const Vec&)> D;
  std::function<Mat(const Vec&, const Vec&)> jac_x;
  std::function<Mat(const Vec&, const Vec&)> jac_u;
};

Vec step_nominal(const Model& model, const Vec& x, const Vec& u);
Vec step_noisy(const Model& model, const Vec& x, const Vec& u, const Vec& w);

// Dubins car, states [p_x, p_y, theta, v], controls [omega, a]. Continuous
// field [v cos(theta), v sin(theta), omega, a] discretized by explicit Euler
// with zero-order hold; noise enters additively through `noise_map` (n_x x
// n_w) and is not scaled by dt. The heading is left unwrapped on R.
Model dubins_model(double dt, const Mat& noise_map);

// Registers central finite-difference Jacobians (step 1e-6 * max(1,|x_i|))
// for models without analytic ones.
void attach_fd_jacobians(Model& model);

}  // namespace ccplan
