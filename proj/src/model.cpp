#include "ccplan/model.hpp"

#include <cmath>

namespace ccplan {

namespace {

void check_dims(const Model& model, const Vec& x, const Vec& u) {
  if (x.size() != model.n_x || u.size() != model.n_u) {
    throw ConfigError("model '" + model.id + "': state/control dimension mismatch (got " +
                      std::to_string(x.size()) + "/" + std::to_string(u.size()) + ", expected " +
                      std::to_string(model.n_x) + "/" + std::to_string(model.n_u) + ")");
  }
}

}  // namespace

Vec step_nominal(const Model& model, const Vec& x, const Vec& u) {
  check_dims(model, x, u);
  return model.f(x, u);
}

Vec step_noisy(const Model& model, const Vec& x, const Vec& u, const Vec& w) {
  check_dims(model, x, u);
  if (w.size() != model.n_w) {
    throw ConfigError("model '" + model.id + "': noise dimension mismatch");
  }
  return model.f(x, u) + model.D(x) * w;
}

Model dubins_model(double dt, const Mat& noise_map) {
  if (dt <= 0.0) throw ConfigError("dubins_model: dt must be positive");
  if (noise_map.rows() != 4) throw ConfigError("dubins_model: noise map must have 4 rows");

  Model model;
  model.id = "dubins";
  model.n_x = 4;
  model.n_u = 2;
  model.n_w = static_cast<int>(noise_map.cols());
  model.dt = dt;

  model.f = [dt](const Vec& x, const Vec& u) -> Vec {
    Vec next(4);
    next(0) = x(0) + dt * x(3) * std::cos(x(2));
    next(1) = x(1) + dt * x(3) * std::sin(x(2));
    next(2) = x(2) + dt * u(0);
    next(3) = x(3) + dt * u(1);
    return next;
  };
  model.D = [noise_map](const Vec&) -> Mat { return noise_map; };
  model.jac_x = [dt](const Vec& x, const Vec&) -> Mat {
    const double s = std::sin(x(2));
    const double c = std::cos(x(2));
    Mat A = Mat::Identity(4, 4);
    A(0, 2) = -dt * x(3) * s;
    A(0, 3) = dt * c;
    A(1, 2) = dt * x(3) * c;
    A(1, 3) = dt * s;
    return A;
  };
  model.jac_u = [dt](const Vec&, const Vec&) -> Mat {
    Mat B = Mat::Zero(4, 2);
    B(2, 0) = dt;
    B(3, 1) = dt;
    return B;
  };
  return model;
}

void attach_fd_jacobians(Model& model) {
  const auto f = model.f;
  const int n_x = model.n_x;
  const int n_u = model.n_u;
  model.jac_x = [f, n_x](const Vec& x, const Vec& u) -> Mat {
    Mat J(n_x, n_x);
    for (int i = 0; i < n_x; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
      Vec xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      J.col(i) = (f(xp, u) - f(xm, u)) / (2.0 * h);
    }
    return J;
  };
  model.jac_u = [f, n_x, n_u](const Vec& x, const Vec& u) -> Mat {
    Mat J(n_x, n_u);
    for (int i = 0; i < n_u; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(u(i)));
      Vec up = u, um = u;
      up(i) += h;
      um(i) -= h;
      J.col(i) = (f(x, up) - f(x, um)) / (2.0 * h);
    }
    return J;
  };
}

}  // namespace ccplan
