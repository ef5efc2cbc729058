#include "ccplan/lbfgs.hpp"

#include <cmath>
#include <deque>

namespace ccplan {

namespace {

constexpr double kC1 = 1e-4;  // sufficient decrease
constexpr double kC2 = 0.9;   // curvature

struct LinePoint {
  double alpha = 0.0;
  double value = 0.0;
  double slope = 0.0;
};

}  // namespace

LbfgsResult minimize_lbfgs(const GradObjective& objective, Vec x0, const LbfgsOptions& options) {
  const Eigen::Index n = x0.size();
  LbfgsResult result;
  result.x = std::move(x0);

  Vec grad(n);
  double value = objective(result.x, grad);
  result.evaluations = 1;
  if (!std::isfinite(value) || !all_finite(grad)) {
    throw NumericalError("minimize_lbfgs: non-finite objective at the starting point");
  }

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;

  Vec x_new(n), grad_new(n), grad_best(n), direction(n);
  Vec alpha_buf;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.grad_norm = grad.lpNorm<Eigen::Infinity>();
    if (result.grad_norm <= options.grad_tolerance) {
      result.converged = true;
      break;
    }

    // Two-loop recursion.
    direction = -grad;
    const int m = static_cast<int>(s_hist.size());
    alpha_buf.resize(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha_buf(i) = rho_hist[i] * s_hist[i].dot(direction);
      direction -= alpha_buf(i) * y_hist[i];
    }
    if (m > 0) {
      const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      direction *= gamma;
    }
    for (int i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(direction);
      direction += (alpha_buf(i) - beta) * s_hist[i];
    }

    double slope0 = grad.dot(direction);
    if (slope0 >= 0.0) {  // stale curvature; fall back to steepest descent
      direction = -grad;
      slope0 = -grad.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Strong-Wolfe line search (bracket + bisection zoom).
    const auto eval_at = [&](double alpha) -> LinePoint {
      x_new = result.x + alpha * direction;
      const double v = objective(x_new, grad_new);
      ++result.evaluations;
      return LinePoint{alpha, v, grad_new.dot(direction)};
    };

    LinePoint best{0.0, value, slope0};
    bool accepted = false;

    const auto remember = [&](const LinePoint& pt) {
      best = pt;
      grad_best = grad_new;
      accepted = true;
    };
    const auto zoom = [&](LinePoint zlo, LinePoint zhi) {
      for (int z = 0; z < 30; ++z) {
        LinePoint mid = eval_at(0.5 * (zlo.alpha + zhi.alpha));
        if (!std::isfinite(mid.value) || mid.value > value + kC1 * mid.alpha * slope0 ||
            mid.value >= zlo.value) {
          zhi = mid;
        } else {
          if (std::abs(mid.slope) <= -kC2 * slope0) {
            remember(mid);
            return;
          }
          if (mid.slope * (zhi.alpha - zlo.alpha) >= 0.0) zhi = zlo;
          zlo = mid;
        }
        if (std::abs(zhi.alpha - zlo.alpha) < 1e-16) break;
      }
      if (zlo.alpha > 0.0 && zlo.value < value) {
        // Armijo point without the curvature condition; still usable.
        x_new = result.x + zlo.alpha * direction;
        objective(x_new, grad_new);
        ++result.evaluations;
        remember(zlo);
      }
    };

    double alpha = 1.0;
    LinePoint prev{0.0, value, slope0};
    for (int ls = 0; ls < 20 && !accepted; ++ls) {
      LinePoint pt = eval_at(alpha);
      if (!std::isfinite(pt.value) || pt.value > value + kC1 * alpha * slope0 ||
          (ls > 0 && pt.value >= prev.value)) {
        zoom(prev, pt);
        break;
      }
      if (std::abs(pt.slope) <= -kC2 * slope0) {
        remember(pt);
        break;
      }
      if (pt.slope >= 0.0) {
        zoom(pt, prev);
        break;
      }
      prev = pt;
      alpha *= 2.0;
      if (alpha > 1e6) break;
    }

    if (!accepted || best.alpha <= 0.0) {
      // No acceptable step along this direction; report current point.
      break;
    }

    x_new = result.x + best.alpha * direction;
    const Vec s = x_new - result.x;
    const Vec y = grad_best - grad;
    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    result.x = x_new;
    value = best.value;
    grad = grad_best;
    result.iterations = iter + 1;
  }

  result.value = value;
  result.grad_norm = grad.lpNorm<Eigen::Infinity>();
  if (result.grad_norm <= options.grad_tolerance) result.converged = true;
  return result;
}

}  // namespace ccplan
