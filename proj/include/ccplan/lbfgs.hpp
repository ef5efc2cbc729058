#pragma once

#include <functional>

#include "ccplan/types.hpp"

namespace ccplan {

struct LbfgsOptions {
  int max_iterations = 1500;
  double grad_tolerance = 1e-8;  // on the max-norm of the gradient
  int memory = 10;
};

struct LbfgsResult {
  Vec x;
  double value = 0.0;
  double grad_norm = 0.0;  // max-norm at the returned point
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

// Evaluates f(x) and writes the gradient into the second argument.
using GradObjective = std::function<double(const Vec&, Vec&)>;

// Limited-memory BFGS with a strong-Wolfe line search.
LbfgsResult minimize_lbfgs(const GradObjective& objective, Vec x0, const LbfgsOptions& options);

}  // namespace ccplan
