#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ccplan/baseline.hpp"
#include "ccplan/config.hpp"
#include "ccplan/hashing.hpp"
#include "ccplan/io.hpp"

namespace fs = std::filesystem;
using namespace ccplan;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitCalibration = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNumerical = 4;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out_override;
  std::string weighting_override;
};

ExperimentConfig load(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  if (args.seed) {
    cfg.seed_dataset = *args.seed;
    cfg.seed_targets = *args.seed + 1;
    cfg.seed_mc = *args.seed + 2;
  }
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  if (!args.weighting_override.empty()) cfg.weighting = parse_weighting(args.weighting_override);
  fs::create_directories(cfg.out_dir);
  return cfg;
}

std::string dataset_path(const ExperimentConfig& cfg) { return cfg.out_dir + "/dataset.csv"; }
std::string calibration_path(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/calibration.json";
}

DisturbanceDataset obtain_dataset(const ExperimentConfig& cfg) {
  const std::string path = dataset_path(cfg);
  if (fs::exists(path)) {
    DisturbanceDataset existing = load_dataset(path);
    if (existing.K == cfg.K && existing.N == cfg.N && existing.seed == cfg.seed_dataset &&
        existing.distribution_id == describe(cfg.noise)) {
      return existing;
    }
    std::cerr << "note: existing dataset does not match config, regenerating\n";
  }
  DisturbanceDataset dataset = build_dataset(cfg.noise, cfg.K, cfg.N, cfg.seed_dataset);
  save_dataset(path, dataset);
  return dataset;
}

int cmd_calibrate(const CommonArgs& args) {
  const ExperimentConfig cfg = load(args);
  const DisturbanceDataset dataset = obtain_dataset(cfg);
  const Metric metric = build_metric(cfg);
  const ScoreTable table = calibrate(cfg.model, metric, dataset, cfg.sampler, cfg.weighting,
                                     make_policy_designer(cfg), cfg.seed_targets, args.workers);

  CalibrationArtifact artifact;
  artifact.K = cfg.K;
  artifact.N = cfg.N;
  artifact.p = cfg.p;
  artifact.delta = cfg.delta;
  artifact.delta_bar = cfg.delta_bar;
  artifact.weighting = table.weighting;
  artifact.weights = cfg.cp_weights;
  artifact.collapse = cfg.collapse;
  artifact.metric = metric;
  artifact.scores = table.S;
  artifact.dataset_seed = table.dataset_seed;
  artifact.sampler_hash = table.sampler_hash;
  artifact.metric_hash = table.metric_hash;
  artifact.config_hash = cfg.content_hash;
  artifact.diverged_rollouts = table.diverged_rollouts;

  artifact.coverage =
      quantile_schedule(table, cfg.delta, cfg.delta_bar, cfg.cp_weights, cfg.collapse).C;
  artifact.eta_bar =
      quantile_schedule(table, 0.5 * cfg.delta + cfg.delta_bar, cfg.delta_bar, cfg.cp_weights).C;
  std::vector<double> last_column(cfg.K);
  for (int j = 0; j < cfg.K; ++j) last_column[j] = table.S(j, cfg.N - 1);
  artifact.eta = weighted_quantile(last_column, cfg.cp_weights, cfg.delta);
  if (std::isinf(artifact.eta)) {
    throw InsufficientCalibrationError("terminal quantile is +inf (need K >= " +
                                       std::to_string(minimal_calibration_size(cfg.delta)) + ")");
  }
  artifact.collapse_dominates = artifact.eta >= artifact.eta_bar.maxCoeff() - 1e-15;

  const std::string path = calibration_path(cfg);
  save_calibration(path, artifact);
  std::printf("calibration written to %s (hash %s)\n", path.c_str(), file_hash_hex(path).c_str());
  std::printf("eta(%.4g) = %.6g, eta_bar in [%.6g, %.6g], coverage C_N = %.6g%s\n", cfg.delta,
              artifact.eta, artifact.eta_bar.minCoeff(), artifact.eta_bar.maxCoeff(),
              artifact.coverage(cfg.N - 1),
              artifact.collapse_dominates ? "" : " (collapse is not dominating)");
  if (table.diverged_rollouts > 0) {
    std::printf("warning: %d diverged calibration rollouts scored +inf\n",
                table.diverged_rollouts);
  }
  return 0;
}

PlannerProblem problem_from(const ExperimentConfig& cfg, const CalibrationArtifact& artifact) {
  Vec step_margins(std::max(0, cfg.N - 1));
  double terminal = artifact.eta;
  if (artifact.collapse) {
    step_margins.setConstant(artifact.eta);
  } else {
    for (int k = 1; k <= cfg.N - 1; ++k) step_margins(k - 1) = artifact.eta_bar(k - 1);
  }
  PlannerProblem prob = conformal_problem(cfg.model, cfg.constraints, artifact.metric,
                                          step_margins, terminal, cfg.cost_R, cfg.x0, cfg.N,
                                          cfg.delta);
  prob.options = cfg.solver;
  return prob;
}

int cmd_plan(const CommonArgs& args, const std::string& calibration_file) {
  const ExperimentConfig cfg = load(args);
  const std::string calib = calibration_file.empty() ? calibration_path(cfg) : calibration_file;
  const CalibrationArtifact artifact = load_calibration(calib);
  if (artifact.N != cfg.N) {
    throw ConfigError("plan: calibration horizon " + std::to_string(artifact.N) +
                      " does not match config N=" + std::to_string(cfg.N));
  }

  const PlannerProblem prob = problem_from(cfg, artifact);
  const Trajectory seed = warm_start(prob);
  const PlanResult result = solve(prob, seed);

  PlanFile file;
  file.trajectory = result.target;
  file.dt = cfg.model.dt;
  file.delta = cfg.delta;
  file.objective = result.objective;
  file.status = status_name(result.status);
  file.max_defect = result.max_defect;
  file.max_violation = result.max_violation;
  file.wall_time_s = result.wall_time_s;
  file.margin_mode = artifact.collapse ? "constant" : "per-step";
  file.eta = artifact.eta;
  file.eta_bar_max = artifact.eta_bar.maxCoeff();
  file.calibration_hash = file_hash_hex(calib);
  file.gains = design_tvlqr(cfg.model, result.target, cfg.lqr_Q, cfg.lqr_R).gains;

  const std::string path = cfg.out_dir + "/plan.json";
  save_plan(path, file);
  std::printf("plan written to %s (hash %s)\n", path.c_str(),
              file_hash_hex_excluding(path, {"wall_time_s"}).c_str());
  std::printf("status %s, objective %.6g, defect %.3g, violation %.3g, %.2fs\n",
              file.status.c_str(), file.objective, file.max_defect, file.max_violation,
              file.wall_time_s);
  if (result.status == SolveStatus::kInfeasible) return kExitInfeasible;
  if (result.status == SolveStatus::kMaxIter) return kExitNumerical;
  return 0;
}

int cmd_simulate(const CommonArgs& args, const std::string& plan_file,
                 const std::string& calibration_file, const std::string& mode, bool dump_traces) {
  const ExperimentConfig cfg = load(args);
  const std::string plan_path = plan_file.empty() ? cfg.out_dir + "/plan.json" : plan_file;
  const PlanFile plan = load_plan(plan_path);
  if (plan.trajectory.horizon() != cfg.N) throw ConfigError("simulate: plan horizon mismatch");

  Metric metric = scaled_identity_metric(cfg.model.n_x, 1.0, 1.0, 0.0);
  Vec coverage;
  if (mode == "conformal") {
    const std::string calib = calibration_file.empty() ? calibration_path(cfg) : calibration_file;
    const CalibrationArtifact artifact = load_calibration(calib);
    if (!plan.calibration_hash.empty() && plan.calibration_hash != file_hash_hex(calib)) {
      throw ConfigError("simulate: plan references a different calibration artifact");
    }
    metric = artifact.metric;
    coverage = artifact.coverage;
  }

  TrackingPolicy policy;
  policy.target = plan.trajectory;
  if (!plan.gains.empty()) {
    policy.gains = plan.gains;
  } else {
    policy = design_tvlqr(cfg.model, plan.trajectory, cfg.lqr_Q, cfg.lqr_R);
  }

  std::vector<RolloutRecord> traces;
  const MCReport report = evaluate(cfg.model, policy, metric, plan.trajectory, cfg.noise,
                                   cfg.mc_runs, cfg.constraints, coverage, cfg.seed_mc,
                                   args.workers, &traces);

  const std::string report_path = cfg.out_dir + "/report.json";
  save_report(report_path, report, mode, cfg.seed_mc,
              file_hash_hex_excluding(plan_path, {"wall_time_s"}));
  if (coverage.size() > 0 && cfg.constraints.obstacles.size() > 0 &&
      cfg.constraints.obstacles[0].indices.size() == 2) {
    write_mc_plot_csv(cfg.out_dir + "/report_plot.csv", plan.trajectory, coverage, metric, traces,
                      cfg.constraints.obstacles[0].indices[0],
                      cfg.constraints.obstacles[0].indices[1]);
  }
  if (dump_traces) write_traces_csv(cfg.out_dir + "/report_traces.csv", traces);

  std::printf("report written to %s\n", report_path.c_str());
  std::printf("max_k P(x_k not in X) = %.4f, P(x_N not in X_N) = %.4f, min coverage = %.4f, "
              "diverged = %d\n",
              report.max_step_violation_prob, report.terminal_violation_prob, report.min_coverage,
              report.diverged_runs);
  return 0;
}

int cmd_baseline(const CommonArgs& args) {
  const ExperimentConfig cfg = load(args);
  const DisturbanceDataset dataset = obtain_dataset(cfg);

  BaselineOptions options;
  options.lqr_Q = cfg.lqr_Q;
  options.lqr_R = cfg.lqr_R;
  options.solve = cfg.solver;
  options.workers = args.workers;

  const BaselineResult result =
      baseline_plan_and_evaluate(cfg.model, cfg.constraints, cfg.cost_R, cfg.x0, cfg.N, cfg.p,
                                 dataset, cfg.noise, cfg.mc_runs, cfg.seed_mc, options);

  PlanFile file;
  file.trajectory = result.plan.target;
  file.dt = cfg.model.dt;
  file.delta = cfg.p;
  file.objective = result.plan.objective;
  file.status = status_name(result.plan.status);
  file.max_defect = result.plan.max_defect;
  file.max_violation = result.plan.max_violation;
  file.wall_time_s = result.plan.wall_time_s;
  file.margin_mode = "per-step";
  file.eta = 0.0;
  file.eta_bar_max = 0.0;
  file.method = "baseline";
  file.gains = result.policy.gains;
  const std::string plan_path = cfg.out_dir + "/baseline_plan.json";
  save_plan(plan_path, file);

  const std::string report_path = cfg.out_dir + "/baseline_report.json";
  save_report(report_path, result.report, "baseline", cfg.seed_mc,
              file_hash_hex_excluding(plan_path, {"wall_time_s"}));
  std::printf("baseline plan %s (%s), report %s\n", plan_path.c_str(), file.status.c_str(),
              report_path.c_str());
  std::printf("sweeps %d, max_k P(x_k not in X) = %.4f, P(x_N not in X_N) = %.4f\n", result.sweeps,
              result.report.max_step_violation_prob, result.report.terminal_violation_prob);
  if (result.plan.status == SolveStatus::kInfeasible) return kExitInfeasible;
  return 0;
}

int cmd_verify(const CommonArgs& args) {
  const ExperimentConfig cfg = load(args);
  int failures = 0;
  const auto check = [&failures](bool ok, const std::string& what) {
    std::printf("%s: %s\n", ok ? "ok" : "FAIL", what.c_str());
    if (!ok) ++failures;
  };

  if (fs::exists(dataset_path(cfg))) {
    const DisturbanceDataset loaded = load_dataset(dataset_path(cfg));
    check(loaded.K == cfg.K && loaded.N == cfg.N, "dataset dimensions match config");
    const DisturbanceDataset rebuilt =
        build_dataset(cfg.noise, loaded.K, loaded.N, loaded.seed);
    bool identical = true;
    for (int j = 0; j < loaded.K && identical; ++j)
      for (int k = 0; k < loaded.N && identical; ++k)
        identical = (loaded.samples[j][k] - rebuilt.samples[j][k]).isZero(0.0);
    check(identical, "dataset reproduces bit-exactly from its seed");
  } else {
    std::printf("skip: no dataset at %s\n", dataset_path(cfg).c_str());
  }

  if (fs::exists(calibration_path(cfg))) {
    const CalibrationArtifact artifact = load_calibration(calibration_path(cfg));
    check(artifact.scores.minCoeff() >= 0.0, "score table is nonnegative");
    ScoreTable from_file;
    from_file.S = artifact.scores;
    const Vec expected = quantile_schedule(from_file, artifact.delta, artifact.delta_bar,
                                           artifact.weights, artifact.collapse)
                             .C;
    check((expected - artifact.coverage).lpNorm<Eigen::Infinity>() <= 1e-12,
          "coverage schedule reproduces from the score table");
    check(artifact.metric_hash == metric_hash(artifact.metric),
          "metric hash matches the stored metric");
    check(artifact.sampler_hash == cfg.sampler.hash(), "sampler hash matches config");

    if (fs::exists(cfg.out_dir + "/plan.json")) {
      const PlanFile plan = load_plan(cfg.out_dir + "/plan.json");
      check(plan.calibration_hash == file_hash_hex(calibration_path(cfg)),
            "plan references this calibration artifact");
      const PlannerProblem prob = problem_from(cfg, artifact);
      const auto [defect, violation] = audit_plan(prob, plan.trajectory);
      check(defect <= prob.options.defect_tolerance + 1e-12,
            "plan dynamics defect within tolerance (" + std::to_string(defect) + ")");
      check(violation <= prob.options.violation_tolerance + 1e-9,
            "plan tightened constraints within tolerance (" + std::to_string(violation) + ")");
    } else {
      std::printf("skip: no plan at %s\n", (cfg.out_dir + "/plan.json").c_str());
    }
  } else {
    std::printf("skip: no calibration at %s\n", calibration_path(cfg).c_str());
  }

  return failures == 0 ? 0 : kExitNumerical;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file")->required();
  cmd->add_option("--seed", args.seed, "base seed override (dataset, targets, mc = seed, +1, +2)");
  cmd->add_option("--workers", args.workers, "worker thread count");
  cmd->add_option("--out", args.out_override, "output directory override");
  cmd->add_option("--weighting", args.weighting_override, "score weighting override")
      ->check(CLI::IsMember({"recursive", "paper-literal"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conformal chance-constrained trajectory planning"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string plan_file, calibration_file, mode = "conformal";
  bool dump_traces = false;

  CLI::App* calibrate_cmd = app.add_subcommand("calibrate", "build dataset and quantile schedules");
  add_common(calibrate_cmd, args);

  CLI::App* plan_cmd = app.add_subcommand("plan", "solve the tightened trajectory program");
  add_common(plan_cmd, args);
  plan_cmd->add_option("--calibration", calibration_file, "calibration artifact path");
  plan_cmd->add_option("--mode", mode, "pipeline variant")
      ->check(CLI::IsMember({"conformal", "baseline"}));

  CLI::App* simulate_cmd = app.add_subcommand("simulate", "closed-loop Monte-Carlo audit");
  add_common(simulate_cmd, args);
  simulate_cmd->add_option("--plan", plan_file, "plan file path");
  simulate_cmd->add_option("--calibration", calibration_file, "calibration artifact path");
  simulate_cmd->add_option("--mode", mode, "pipeline variant")
      ->check(CLI::IsMember({"conformal", "baseline"}));
  simulate_cmd->add_flag("--traces", dump_traces, "write per-run trajectories");

  CLI::App* baseline_cmd =
      app.add_subcommand("baseline", "Gaussian-MLE + LQR + chi-squared comparison pipeline");
  add_common(baseline_cmd, args);

  CLI::App* verify_cmd = app.add_subcommand("verify", "audit artifacts against their invariants");
  add_common(verify_cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (calibrate_cmd->parsed()) return cmd_calibrate(args);
    if (plan_cmd->parsed()) {
      if (mode == "baseline") return cmd_baseline(args);
      return cmd_plan(args, calibration_file);
    }
    if (simulate_cmd->parsed()) return cmd_simulate(args, plan_file, calibration_file, mode,
                                                    dump_traces);
    if (baseline_cmd->parsed()) return cmd_baseline(args);
    if (verify_cmd->parsed()) return cmd_verify(args);
  } catch (const InsufficientCalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCalibration;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DesignError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
