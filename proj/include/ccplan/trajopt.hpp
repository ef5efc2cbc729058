#pragma once

#include <string>
#include <vector>

#include "ccplan/contraction.hpp"
#include "ccplan/model.hpp"
#include "ccplan/tightening.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

struct SolveOptions {
  double defect_tolerance = 1e-6;
  double violation_tolerance = 1e-6;
  double penalty_initial = 10.0;
  double penalty_scale = 10.0;
  double penalty_max = 1e8;
  double inner_tol_initial = 1e-3;
  double inner_tol_decay = 0.5;
  double inner_tol_final = 1e-8;
  int max_outer = 60;
  int max_inner = 1500;
};

// Deterministic nominal-trajectory program: minimize sum u^T R u subject to
// nominal dynamics, per-step halfspace and obstacle constraints tightened by
// the support function of the shape W_k, and the terminal goal polytope
// tightened by W_terminal. step_shapes[k-1] applies at step k, k in [1,N-1].
struct PlannerProblem {
  Model model;
  ConstraintSpec constraints;
  std::vector<Mat> step_shapes;
  Mat terminal_shape;
  Mat R;
  Vec x0;
  int N = 0;
  double delta = 0.0;
  double seed_clearance = 0.0;  // obstacle inflation radius for warm starts
  SolveOptions options;

  void validate() const;
};

// Shapes from conformal margins: W_k = eta_bar_k^2 M^{-1} at interior steps
// and W_N = eta^2 M^{-1} at the goal. step_margins has length N-1.
PlannerProblem conformal_problem(const Model& model, const ConstraintSpec& constraints,
                                 const Metric& metric, const Vec& step_margins,
                                 double terminal_margin, const Mat& R, const Vec& x0, int N,
                                 double delta);

enum class SolveStatus { kOptimalLocal, kFeasible, kInfeasible, kMaxIter };

std::string status_name(SolveStatus status);

struct PlanResult {
  Trajectory target;
  double objective = 0.0;
  double max_defect = 0.0;
  double max_violation = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double wall_time_s = 0.0;
  SolveStatus status = SolveStatus::kMaxIter;
};

// Straight-line seed toward the goal-set Chebyshev center, pushed off any
// obstacle ball inflated by the largest tightening radius; controls zero.
// The seed is not dynamically feasible; the transcription absorbs defects.
Trajectory warm_start(const PlannerProblem& problem);

// Augmented-Lagrangian outer loop over an L-BFGS inner solve on the full
// transcription (all states and controls are decision variables). Obstacle
// normals are frozen within an inner solve and refreshed each outer
// iteration.
PlanResult solve(const PlannerProblem& problem, const Trajectory& seed);

// Max dynamics defect and max tightened-constraint violation of a candidate
// trajectory, used by plan re-validation.
std::pair<double, double> audit_plan(const PlannerProblem& problem, const Trajectory& plan);

}  // namespace ccplan
