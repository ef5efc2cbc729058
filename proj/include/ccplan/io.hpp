#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccplan/conformal.hpp"
#include "ccplan/contraction.hpp"
#include "ccplan/montecarlo.hpp"
#include "ccplan/trajopt.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

// Calibration artifact: quantile schedules plus provenance. Saved as a JSON
// file with the score table in a CSV sidecar (<path>.scores.csv).
struct CalibrationArtifact {
  int K = 0;
  int N = 0;
  double p = 0.0;
  double delta = 0.0;
  double delta_bar = 0.0;
  std::string weighting;
  std::vector<double> weights;  // empty = uniform
  bool collapse = true;
  bool collapse_dominates = true;
  Vec coverage;  // C_k at miss level delta - delta_bar, k = 1..N
  Vec eta_bar;   // step margins q_{1-delta/2}(S_k)
  double eta = 0.0;  // terminal margin q_{1-delta}(S_N)
  Metric metric;
  Mat scores;  // K x N
  std::uint64_t dataset_seed = 0;
  std::uint64_t sampler_hash = 0;
  std::uint64_t metric_hash = 0;
  std::uint64_t config_hash = 0;
  int diverged_rollouts = 0;
};

void save_calibration(const std::string& path, const CalibrationArtifact& artifact);
CalibrationArtifact load_calibration(const std::string& path);

// Plan file: one JSON header line, then CSV rows k, x_1..x_{n_x},
// u_1..u_{n_u} (controls empty on the final row). Gains are stored in a
// sidecar (<path>.gains.csv).
struct PlanFile {
  Trajectory trajectory;
  double dt = 0.0;
  double delta = 0.0;
  double objective = 0.0;
  std::string status;
  double max_defect = 0.0;
  double max_violation = 0.0;
  double wall_time_s = 0.0;
  std::string margin_mode;  // "constant" or "per-step"
  double eta = 0.0;
  double eta_bar_max = 0.0;
  std::string calibration_hash;
  std::string method = "conformal";
  std::vector<Mat> gains;
};

void save_plan(const std::string& path, const PlanFile& plan);
PlanFile load_plan(const std::string& path);

void save_report(const std::string& path, const MCReport& report, const std::string& method,
                 std::uint64_t seed, const std::string& plan_hash);

// Figure-reproduction CSV: per step the target state, the confidence-ellipse
// semi-axes in the position plane (from C_k^2 M^{-1}), and the per-run
// positions.
void write_mc_plot_csv(const std::string& path, const Trajectory& plan, const Vec& quantiles,
                       const Metric& metric, const std::vector<RolloutRecord>& traces,
                       int pos_x_index, int pos_y_index);

void write_traces_csv(const std::string& path, const std::vector<RolloutRecord>& traces);

std::string file_hash_hex(const std::string& path);

// Hash of the file with the given JSON-header keys removed first (used to
// compare plan files while ignoring wall-time fields).
std::string file_hash_hex_excluding(const std::string& path,
                                    const std::vector<std::string>& drop_keys);

std::string format_double17(double x);

}  // namespace ccplan
