#include "ccplan/trajopt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "ccplan/lbfgs.hpp"

namespace ccplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Chebyshev center of {x : Hx <= h}: maximize r s.t. H_i x + r||H_i|| <= h_i.
// The LPs here are tiny (goal polytopes), so brute-force vertex enumeration
// over row subsets is adequate and has no solver dependency.
Vec chebyshev_center(const Mat& H, const Vec& h, const Vec& fallback) {
  const int n = static_cast<int>(fallback.size());
  const int rows = static_cast<int>(H.rows());
  if (rows < n + 1) {
    if (rows == 0) return fallback;
    return H.colPivHouseholderQr().solve(h);
  }

  Mat G(rows, n + 1);
  G.leftCols(n) = H;
  for (int i = 0; i < rows; ++i) G(i, n) = H.row(i).norm();

  Vec best = fallback;
  double best_r = -kInf;
  std::vector<int> pick(n + 1);
  // Iterate over all (n+1)-row subsets.
  std::function<void(int, int)> visit = [&](int start, int depth) {
    if (depth == n + 1) {
      Mat Gs(n + 1, n + 1);
      Vec hs(n + 1);
      for (int i = 0; i <= n; ++i) {
        Gs.row(i) = G.row(pick[i]);
        hs(i) = h(pick[i]);
      }
      Eigen::FullPivLU<Mat> lu(Gs);
      if (!lu.isInvertible()) return;
      const Vec y = lu.solve(hs);
      if (!all_finite(y)) return;
      if (((G * y - h).array() > 1e-9).any()) return;
      if (y(n) > best_r) {
        best_r = y(n);
        best = y.head(n);
      }
      return;
    }
    for (int i = start; i < rows; ++i) {
      pick[depth] = i;
      visit(i + 1, depth + 1);
    }
  };
  visit(0, 0);
  return best_r > -kInf ? best : fallback;
}

// Frozen-normal transcription of the tightened program. Layout of the
// decision vector: states x_1..x_N, then controls u_0..u_{N-1}.
struct Transcription {
  const PlannerProblem& prob;
  int N, n_x, n_u, n_obs, n_poly, n_goal;
  int n_z, n_eq, n_ineq;

  Mat halfspace_margin;  // n_poly x (N-1), support margins (constant)
  Vec terminal_margin;   // n_goal
  Mat frozen_margin;     // n_obs x (N-1), support margins along frozen normals
  std::vector<Mat> selectors;

  Vec mu, nu;
  double rho;

  explicit Transcription(const PlannerProblem& p)
      : prob(p),
        N(p.N),
        n_x(p.model.n_x),
        n_u(p.model.n_u),
        n_obs(static_cast<int>(p.constraints.obstacles.size())),
        n_poly(static_cast<int>(p.constraints.A.rows())),
        n_goal(static_cast<int>(p.constraints.H.rows())),
        rho(p.options.penalty_initial) {
    n_z = N * n_x + N * n_u;
    n_eq = N * n_x;
    n_ineq = (n_poly + n_obs) * (N - 1) + n_goal;
    mu = Vec::Zero(n_eq);
    nu = Vec::Zero(n_ineq);

    halfspace_margin = Mat::Zero(n_poly, std::max(0, N - 1));
    for (int k = 1; k <= N - 1; ++k) {
      for (int i = 0; i < n_poly; ++i) {
        halfspace_margin(i, k - 1) =
            support_margin(prob.constraints.A.row(i).transpose(), prob.step_shapes[k - 1]);
      }
    }
    terminal_margin = Vec::Zero(n_goal);
    for (int i = 0; i < n_goal; ++i) {
      terminal_margin(i) =
          support_margin(prob.constraints.H.row(i).transpose(), prob.terminal_shape);
    }
    frozen_margin = Mat::Zero(n_obs, std::max(0, N - 1));
    selectors.reserve(n_obs);
    for (const auto& obs : prob.constraints.obstacles) selectors.push_back(obs.selector(n_x));
  }

  int xi(int k) const { return (k - 1) * n_x; }          // k in [1, N]
  int ui(int k) const { return N * n_x + k * n_u; }      // k in [0, N-1]

  Vec state_at(const Vec& z, int k) const {
    return k == 0 ? prob.x0 : Vec(z.segment(xi(k), n_x));
  }

  void pack(const Trajectory& traj, Vec& z) const {
    z.resize(n_z);
    for (int k = 1; k <= N; ++k) z.segment(xi(k), n_x) = traj.states[k];
    for (int k = 0; k < N; ++k) z.segment(ui(k), n_u) = traj.controls[k];
  }

  Trajectory unpack(const Vec& z) const {
    Trajectory traj;
    traj.states.reserve(N + 1);
    traj.controls.reserve(N);
    traj.states.push_back(prob.x0);
    for (int k = 1; k <= N; ++k) traj.states.push_back(z.segment(xi(k), n_x));
    for (int k = 0; k < N; ++k) traj.controls.push_back(z.segment(ui(k), n_u));
    return traj;
  }

  void refresh_normals(const Vec& z) {
    for (int k = 1; k <= N - 1; ++k) {
      const Vec x = state_at(z, k);
      for (int j = 0; j < n_obs; ++j) {
        const auto& obs = prob.constraints.obstacles[j];
        Vec diff = selectors[j] * x - obs.center;
        double dist = diff.norm();
        if (dist < 1e-9) {
          diff = Vec::Zero(diff.size());
          diff(0) = 1.0;
          dist = 1.0;
        }
        const Vec normal = selectors[j].transpose() * (diff / dist);
        frozen_margin(j, k - 1) = support_margin(normal, prob.step_shapes[k - 1]);
      }
    }
  }

  // Inequality values with the frozen obstacle margins, ordered: per step k
  // in [1,N-1] the halfspace rows then the obstacle rows, then the goal rows.
  void constraints_at(const Vec& z, Vec& c, Vec& g) const {
    c.resize(n_eq);
    g.resize(n_ineq);
    for (int k = 0; k < N; ++k) {
      const Vec x = state_at(z, k);
      const Vec u = z.segment(ui(k), n_u);
      c.segment(xi(k + 1), n_x) = z.segment(xi(k + 1), n_x) - prob.model.f(x, u);
    }
    int idx = 0;
    for (int k = 1; k <= N - 1; ++k) {
      const Vec x = state_at(z, k);
      for (int i = 0; i < n_poly; ++i) {
        g(idx++) = prob.constraints.A.row(i).dot(x) + halfspace_margin(i, k - 1) -
                   prob.constraints.b(i);
      }
      for (int j = 0; j < n_obs; ++j) {
        const auto& obs = prob.constraints.obstacles[j];
        const double dist = (selectors[j] * x - obs.center).norm();
        g(idx++) = frozen_margin(j, k - 1) - (dist - obs.radius);
      }
    }
    const Vec xN = state_at(z, N);
    for (int i = 0; i < n_goal; ++i) {
      g(idx++) = prob.constraints.H.row(i).dot(xN) + terminal_margin(i) - prob.constraints.h(i);
    }
  }

  double augmented_lagrangian(const Vec& z, Vec& grad) const {
    grad.setZero(n_z);
    double L = 0.0;

    for (int k = 0; k < N; ++k) {
      const Vec u = z.segment(ui(k), n_u);
      L += u.dot(prob.R * u);
      grad.segment(ui(k), n_u) += 2.0 * (prob.R * u);
    }

    for (int k = 0; k < N; ++k) {
      const Vec x = state_at(z, k);
      const Vec u = z.segment(ui(k), n_u);
      const Vec ck = z.segment(xi(k + 1), n_x) - prob.model.f(x, u);
      const auto mu_k = mu.segment(xi(k + 1), n_x);
      L += mu_k.dot(ck) + 0.5 * rho * ck.squaredNorm();
      const Vec y = mu_k + rho * ck;
      grad.segment(xi(k + 1), n_x) += y;
      if (k > 0) grad.segment(xi(k), n_x) -= prob.model.jac_x(x, u).transpose() * y;
      grad.segment(ui(k), n_u) -= prob.model.jac_u(x, u).transpose() * y;
    }

    int idx = 0;
    const auto penalty = [this, &L](double g_val, double nu_val) -> double {
      const double m = std::max(0.0, nu_val + rho * g_val);
      L += (m * m - nu_val * nu_val) / (2.0 * rho);
      return m;
    };
    for (int k = 1; k <= N - 1; ++k) {
      const Vec x = state_at(z, k);
      for (int i = 0; i < n_poly; ++i) {
        const double gv = prob.constraints.A.row(i).dot(x) + halfspace_margin(i, k - 1) -
                          prob.constraints.b(i);
        const double m = penalty(gv, nu(idx++));
        if (m > 0.0) grad.segment(xi(k), n_x) += m * prob.constraints.A.row(i).transpose();
      }
      for (int j = 0; j < n_obs; ++j) {
        const auto& obs = prob.constraints.obstacles[j];
        const Vec diff = selectors[j] * x - obs.center;
        const double dist = diff.norm();
        const double gv = frozen_margin(j, k - 1) - (dist - obs.radius);
        const double m = penalty(gv, nu(idx++));
        if (m > 0.0 && dist > 1e-9) {
          grad.segment(xi(k), n_x) -= m * (selectors[j].transpose() * (diff / dist));
        }
      }
    }
    const Vec xN = state_at(z, N);
    for (int i = 0; i < n_goal; ++i) {
      const double gv =
          prob.constraints.H.row(i).dot(xN) + terminal_margin(i) - prob.constraints.h(i);
      const double m = penalty(gv, nu(idx++));
      if (m > 0.0) grad.segment(xi(N), n_x) += m * prob.constraints.H.row(i).transpose();
    }
    return L;
  }
};

double objective_value(const PlannerProblem& prob, const Trajectory& traj) {
  double obj = 0.0;
  for (const Vec& u : traj.controls) obj += u.dot(prob.R * u);
  return obj;
}

}  // namespace

void PlannerProblem::validate() const {
  if (N < 1) throw ConfigError("PlannerProblem: N must be >= 1");
  if (x0.size() != model.n_x) throw ConfigError("PlannerProblem: x0 dimension mismatch");
  constraints.validate(model.n_x);
  if (static_cast<int>(step_shapes.size()) != std::max(0, N - 1)) {
    throw ConfigError("PlannerProblem: need one step shape per interior step");
  }
  for (const Mat& W : step_shapes) {
    if (W.rows() != model.n_x || W.cols() != model.n_x) {
      throw ConfigError("PlannerProblem: step shape size mismatch");
    }
  }
  if (constraints.H.rows() > 0 &&
      (terminal_shape.rows() != model.n_x || terminal_shape.cols() != model.n_x)) {
    throw ConfigError("PlannerProblem: terminal shape size mismatch");
  }
  if (R.rows() != model.n_u || R.cols() != model.n_u) {
    throw ConfigError("PlannerProblem: R size mismatch");
  }
}

PlannerProblem conformal_problem(const Model& model, const ConstraintSpec& constraints,
                                 const Metric& metric, const Vec& step_margins,
                                 double terminal_margin, const Mat& R, const Vec& x0, int N,
                                 double delta) {
  if (step_margins.size() != std::max(0, N - 1)) {
    throw ConfigError("conformal_problem: step_margins must have length N-1");
  }
  if ((step_margins.array() < 0.0).any() || terminal_margin < 0.0) {
    throw ConfigError("conformal_problem: margins must be >= 0");
  }
  PlannerProblem prob;
  prob.model = model;
  prob.constraints = constraints;
  prob.R = R;
  prob.x0 = x0;
  prob.N = N;
  prob.delta = delta;
  const Mat Minv = metric.M.llt().solve(Mat::Identity(model.n_x, model.n_x));
  prob.step_shapes.reserve(std::max(0, N - 1));
  for (int k = 1; k <= N - 1; ++k) {
    prob.step_shapes.push_back(step_margins(k - 1) * step_margins(k - 1) * Minv);
  }
  prob.terminal_shape = terminal_margin * terminal_margin * Minv;
  prob.seed_clearance =
      (N > 1 ? std::max(step_margins.maxCoeff(), terminal_margin) : terminal_margin) /
      std::sqrt(metric.m_lo);
  return prob;
}

Trajectory warm_start(const PlannerProblem& problem) {
  problem.validate();
  const int N = problem.N;
  const Vec goal = chebyshev_center(problem.constraints.H, problem.constraints.h, problem.x0);

  Trajectory seed;
  seed.states.reserve(N + 1);
  seed.controls.assign(N, Vec::Zero(problem.model.n_u));
  for (int k = 0; k <= N; ++k) {
    seed.states.push_back(problem.x0 + (static_cast<double>(k) / N) * (goal - problem.x0));
  }

  for (const auto& obs : problem.constraints.obstacles) {
    const Mat P = obs.selector(problem.model.n_x);
    const double inflated = (obs.radius + problem.seed_clearance) * 1.05;
    Vec travel = P * (goal - problem.x0);
    if (travel.norm() < 1e-12) {
      travel = Vec::Zero(travel.size());
      travel(0) = 1.0;
    } else {
      travel.normalize();
    }
    // Counterclockwise side of the travel direction (2D subspaces); higher
    // dimensional selectors fall back to an axis orthogonalized against
    // travel.
    Vec left(travel.size());
    if (travel.size() == 2) {
      left << -travel(1), travel(0);
    } else {
      int axis = 0;
      travel.cwiseAbs().minCoeff(&axis);
      left = Vec::Unit(travel.size(), axis);
      left -= left.dot(travel) * travel;
      left.normalize();
    }

    for (int k = 1; k <= N; ++k) {
      const Vec pos = P * seed.states[k];
      Vec diff = pos - obs.center;
      const double dist = diff.norm();
      if (dist >= inflated) continue;
      Vec dir;
      if (dist < 1e-9) {
        dir = left;
      } else {
        dir = diff / dist;
        // Nearly collinear with the travel direction: detour ccw.
        if ((dir - travel * travel.dot(dir)).norm() < 1e-6) dir = left;
      }
      const Vec target_pos = obs.center + inflated * dir;
      seed.states[k] += P.transpose() * (target_pos - pos);
    }
  }
  return seed;
}

PlanResult solve(const PlannerProblem& problem, const Trajectory& seed) {
  problem.validate();
  seed.validate();
  if (seed.horizon() != problem.N) throw ConfigError("solve: seed horizon mismatch");
  const auto t_start = std::chrono::steady_clock::now();
  const SolveOptions& opts = problem.options;

  Transcription trans(problem);
  Vec z;
  trans.pack(seed, z);

  PlanResult result;
  double best_violation = kInf;
  double best_objective = kInf;
  Vec best_z = z;

  double inner_tol = opts.inner_tol_initial;
  double prev_violation = kInf;
  int stagnant_at_cap = 0;
  int feasible_streak = 0;
  bool optimal = false;
  bool feasible = false;
  Vec c, g;

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    trans.refresh_normals(z);

    LbfgsOptions lopts;
    lopts.max_iterations = opts.max_inner;
    lopts.grad_tolerance = inner_tol;
    LbfgsResult inner = minimize_lbfgs(
        [&trans](const Vec& zz, Vec& grad) { return trans.augmented_lagrangian(zz, grad); }, z,
        lopts);
    z = inner.x;
    result.inner_iterations += inner.iterations;
    result.outer_iterations = outer + 1;

    trans.constraints_at(z, c, g);
    const double defect = c.lpNorm<Eigen::Infinity>();
    const double violation = g.size() > 0 ? std::max(0.0, g.maxCoeff()) : 0.0;
    const double total = std::max(defect, violation);

    const Trajectory current = trans.unpack(z);
    const double obj = objective_value(problem, current);
    if (total < best_violation - 1e-15 ||
        (total <= best_violation + 1e-15 && obj < best_objective)) {
      best_violation = total;
      best_objective = obj;
      best_z = z;
    }

    feasible = defect <= opts.defect_tolerance && violation <= opts.violation_tolerance;
    if (feasible && inner.grad_norm <= 1e-5) {
      optimal = true;
      break;
    }
    // Feasible but the inner solver cannot certify stationarity any further;
    // three settled outers at the tolerance floor are as good as it gets.
    feasible_streak = feasible ? feasible_streak + 1 : 0;
    if (feasible_streak >= 3 && inner_tol <= opts.inner_tol_final) break;

    trans.mu += trans.rho * c;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      trans.nu(i) = std::max(0.0, trans.nu(i) + trans.rho * g(i));
    }
    if (total > 0.25 * prev_violation && !feasible) {
      // Declare infeasibility only when the violation is both stagnant at
      // the penalty cap and far from tolerance; near-tolerance stalls are an
      // inner-solver budget problem, not infeasibility.
      if (trans.rho >= opts.penalty_max && total > 0.9 * prev_violation &&
          total > 1e3 * opts.violation_tolerance) {
        if (++stagnant_at_cap >= 3) break;
      }
      trans.rho = std::min(trans.rho * opts.penalty_scale, opts.penalty_max);
    } else {
      stagnant_at_cap = 0;
    }
    prev_violation = total;
    inner_tol = std::max(inner_tol * opts.inner_tol_decay, opts.inner_tol_final);
  }

  if (!feasible) z = best_z;
  result.target = trans.unpack(z);
  result.objective = objective_value(problem, result.target);
  if (!std::isfinite(result.objective)) {
    throw NumericalError("solve: non-finite objective at the returned iterate");
  }
  const auto [defect, violation] = audit_plan(problem, result.target);
  result.max_defect = defect;
  result.max_violation = violation;

  const bool within_tol =
      defect <= opts.defect_tolerance && violation <= opts.violation_tolerance;
  if (optimal && within_tol) {
    result.status = SolveStatus::kOptimalLocal;
  } else if (within_tol) {
    result.status = SolveStatus::kFeasible;
  } else if (stagnant_at_cap >= 3) {
    result.status = SolveStatus::kInfeasible;
  } else {
    result.status = SolveStatus::kMaxIter;
  }
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

std::pair<double, double> audit_plan(const PlannerProblem& problem, const Trajectory& plan) {
  problem.validate();
  plan.validate();
  if (plan.horizon() != problem.N) throw ConfigError("audit_plan: horizon mismatch");
  const int N = problem.N;

  double defect = 0.0;
  for (int k = 0; k < N; ++k) {
    const Vec next = step_nominal(problem.model, plan.states[k], plan.controls[k]);
    defect = std::max(defect, (plan.states[k + 1] - next).lpNorm<Eigen::Infinity>());
  }

  double violation = 0.0;
  const auto& cons = problem.constraints;
  for (int k = 1; k <= N - 1; ++k) {
    const Vec& x = plan.states[k];
    const Mat& W = problem.step_shapes[k - 1];
    for (Eigen::Index i = 0; i < cons.A.rows(); ++i) {
      const double margin = support_margin(cons.A.row(i).transpose(), W);
      violation = std::max(violation, cons.A.row(i).dot(x) + margin - cons.b(i));
    }
    for (const auto& obs : cons.obstacles) {
      violation = std::max(violation, -obstacle_residual(obs, x, W));
    }
  }
  for (Eigen::Index i = 0; i < cons.H.rows(); ++i) {
    const double margin = support_margin(cons.H.row(i).transpose(), problem.terminal_shape);
    violation = std::max(violation, cons.H.row(i).dot(plan.states[N]) + margin - cons.h(i));
  }
  return {defect, violation};
}

std::string status_name(SolveStatus status) {
  switch (status) {
    case SolveStatus::kOptimalLocal: return "optimal-local";
    case SolveStatus::kFeasible: return "feasible";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kMaxIter: return "max-iter";
  }
  return "unknown";
}

}  // namespace ccplan
