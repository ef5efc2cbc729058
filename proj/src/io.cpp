#include "ccplan/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ccplan/hashing.hpp"

namespace ccplan {

namespace {

using nlohmann::json;

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec json_vec(const json& a) {
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

json mat_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

Mat json_mat(const json& a, Eigen::Index rows, Eigen::Index cols) {
  if (a.size() != static_cast<std::size_t>(rows * cols)) {
    throw ConfigError("artifact: matrix payload has wrong length");
  }
  Mat m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[i++].get<double>();
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

std::string format_double17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void save_calibration(const std::string& path, const CalibrationArtifact& artifact) {
  json j;
  j["kind"] = "calibration";
  j["K"] = artifact.K;
  j["N"] = artifact.N;
  j["p"] = artifact.p;
  j["delta"] = artifact.delta;
  j["delta_bar"] = artifact.delta_bar;
  j["weighting"] = artifact.weighting;
  j["weights"] = artifact.weights;
  j["collapse"] = artifact.collapse;
  j["collapse_dominates"] = artifact.collapse_dominates;
  j["coverage"] = vec_json(artifact.coverage);
  j["eta_bar"] = vec_json(artifact.eta_bar);
  j["eta"] = artifact.eta;
  j["metric"] = {{"theta", mat_json(artifact.metric.theta)},
                 {"n", artifact.metric.theta.rows()},
                 {"m_lo", artifact.metric.m_lo},
                 {"m_hi", artifact.metric.m_hi},
                 {"lambda", artifact.metric.lambda}};
  j["provenance"] = {{"dataset_seed", artifact.dataset_seed},
                     {"sampler_hash", hex64(artifact.sampler_hash)},
                     {"metric_hash", hex64(artifact.metric_hash)},
                     {"config_hash", hex64(artifact.config_hash)},
                     {"diverged_rollouts", artifact.diverged_rollouts}};
  j["scores_file"] = path + ".scores.csv";

  std::ofstream scores(path + ".scores.csv");
  if (!scores) throw ConfigError("save_calibration: cannot open scores sidecar");
  for (Eigen::Index r = 0; r < artifact.scores.rows(); ++r) {
    for (Eigen::Index c = 0; c < artifact.scores.cols(); ++c) {
      if (c > 0) scores << ",";
      scores << format_double17(artifact.scores(r, c));
    }
    scores << "\n";
  }

  std::ofstream out(path);
  if (!out) throw ConfigError("save_calibration: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

CalibrationArtifact load_calibration(const std::string& path) {
  const json j = json::parse(read_file(path));
  if (j.value("kind", "") != "calibration") {
    throw ConfigError("'" + path + "' is not a calibration artifact");
  }
  CalibrationArtifact a;
  a.K = j.at("K").get<int>();
  a.N = j.at("N").get<int>();
  a.p = j.at("p").get<double>();
  a.delta = j.at("delta").get<double>();
  a.delta_bar = j.at("delta_bar").get<double>();
  a.weighting = j.at("weighting").get<std::string>();
  a.weights = j.at("weights").get<std::vector<double>>();
  a.collapse = j.at("collapse").get<bool>();
  a.collapse_dominates = j.at("collapse_dominates").get<bool>();
  a.coverage = json_vec(j.at("coverage"));
  a.eta_bar = json_vec(j.at("eta_bar"));
  a.eta = j.at("eta").get<double>();
  const json& m = j.at("metric");
  const Eigen::Index n = m.at("n").get<Eigen::Index>();
  a.metric = make_metric(json_mat(m.at("theta"), n, n), m.at("m_lo").get<double>(),
                         m.at("m_hi").get<double>(), m.at("lambda").get<double>());
  const json& prov = j.at("provenance");
  a.dataset_seed = prov.at("dataset_seed").get<std::uint64_t>();
  a.sampler_hash = std::stoull(prov.at("sampler_hash").get<std::string>(), nullptr, 16);
  a.metric_hash = std::stoull(prov.at("metric_hash").get<std::string>(), nullptr, 16);
  a.config_hash = std::stoull(prov.at("config_hash").get<std::string>(), nullptr, 16);
  a.diverged_rollouts = prov.at("diverged_rollouts").get<int>();

  a.scores = Mat::Zero(a.K, a.N);
  std::ifstream scores(j.at("scores_file").get<std::string>());
  if (!scores) throw ConfigError("load_calibration: missing scores sidecar");
  std::string line;
  int r = 0;
  while (std::getline(scores, line) && r < a.K) {
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < a.N; ++c) {
      if (!std::getline(ss, cell, ',')) throw ConfigError("load_calibration: short score row");
      a.scores(r, c) = std::stod(cell);
    }
    ++r;
  }
  if (r != a.K) throw ConfigError("load_calibration: score row count mismatch");
  return a;
}

void save_plan(const std::string& path, const PlanFile& plan) {
  plan.trajectory.validate();
  const int N = plan.trajectory.horizon();
  json j;
  j["kind"] = "plan";
  j["N"] = N;
  j["dt"] = plan.dt;
  j["delta"] = plan.delta;
  j["objective"] = plan.objective;
  j["status"] = plan.status;
  j["max_defect"] = plan.max_defect;
  j["max_violation"] = plan.max_violation;
  j["wall_time_s"] = plan.wall_time_s;
  j["margins"] = {{"mode", plan.margin_mode}, {"eta", plan.eta},
                  {"eta_bar_max", plan.eta_bar_max}};
  j["calibration_hash"] = plan.calibration_hash;
  j["method"] = plan.method;
  j["n_x"] = plan.trajectory.states[0].size();
  j["n_u"] = plan.trajectory.controls[0].size();

  std::ofstream out(path);
  if (!out) throw ConfigError("save_plan: cannot open '" + path + "'");
  out << j.dump() << "\n";
  for (int k = 0; k <= N; ++k) {
    out << k;
    const Vec& x = plan.trajectory.states[k];
    for (Eigen::Index i = 0; i < x.size(); ++i) out << "," << format_double17(x(i));
    if (k < N) {
      const Vec& u = plan.trajectory.controls[k];
      for (Eigen::Index i = 0; i < u.size(); ++i) out << "," << format_double17(u(i));
    } else {
      for (Eigen::Index i = 0; i < plan.trajectory.controls[0].size(); ++i) out << ",";
    }
    out << "\n";
  }

  if (!plan.gains.empty()) {
    std::ofstream gout(path + ".gains.csv");
    if (!gout) throw ConfigError("save_plan: cannot open gains sidecar");
    for (std::size_t k = 0; k < plan.gains.size(); ++k) {
      gout << k;
      const Mat& K = plan.gains[k];
      for (Eigen::Index r = 0; r < K.rows(); ++r)
        for (Eigen::Index c = 0; c < K.cols(); ++c) gout << "," << format_double17(K(r, c));
      gout << "\n";
    }
  }
}

PlanFile load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_plan: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("load_plan: empty file");
  const json j = json::parse(line);
  if (j.value("kind", "") != "plan") throw ConfigError("'" + path + "' is not a plan file");

  PlanFile plan;
  plan.dt = j.at("dt").get<double>();
  plan.delta = j.at("delta").get<double>();
  plan.objective = j.at("objective").get<double>();
  plan.status = j.at("status").get<std::string>();
  plan.max_defect = j.at("max_defect").get<double>();
  plan.max_violation = j.at("max_violation").get<double>();
  plan.wall_time_s = j.at("wall_time_s").get<double>();
  plan.margin_mode = j.at("margins").at("mode").get<std::string>();
  plan.eta = j.at("margins").at("eta").get<double>();
  plan.eta_bar_max = j.at("margins").at("eta_bar_max").get<double>();
  plan.calibration_hash = j.at("calibration_hash").get<std::string>();
  plan.method = j.value("method", "conformal");
  const int N = j.at("N").get<int>();
  const int n_x = j.at("n_x").get<int>();
  const int n_u = j.at("n_u").get<int>();

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const int k = std::stoi(cell);
    Vec x(n_x);
    for (int i = 0; i < n_x; ++i) {
      if (!std::getline(ss, cell, ',')) throw ConfigError("load_plan: short state row");
      x(i) = std::stod(cell);
    }
    plan.trajectory.states.push_back(x);
    if (k < N) {
      Vec u(n_u);
      for (int i = 0; i < n_u; ++i) {
        if (!std::getline(ss, cell, ',')) throw ConfigError("load_plan: short control row");
        u(i) = std::stod(cell);
      }
      plan.trajectory.controls.push_back(u);
    }
  }
  plan.trajectory.validate();
  if (plan.trajectory.horizon() != N) throw ConfigError("load_plan: horizon mismatch");

  std::ifstream gin(path + ".gains.csv");
  if (gin) {
    while (std::getline(gin, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      std::getline(ss, cell, ',');  // step index
      Mat K(n_u, n_x);
      for (int r = 0; r < n_u; ++r)
        for (int c = 0; c < n_x; ++c) {
          if (!std::getline(ss, cell, ',')) throw ConfigError("load_plan: short gain row");
          K(r, c) = std::stod(cell);
        }
      plan.gains.push_back(K);
    }
    if (static_cast<int>(plan.gains.size()) != N) {
      throw ConfigError("load_plan: gain schedule length mismatch");
    }
  }
  return plan;
}

void save_report(const std::string& path, const MCReport& report, const std::string& method,
                 std::uint64_t seed, const std::string& plan_hash) {
  json j;
  j["kind"] = "report";
  j["method"] = method;
  j["runs"] = report.runs;
  j["diverged_runs"] = report.diverged_runs;
  j["max_step_violation_prob"] = report.max_step_violation_prob;
  j["terminal_violation_prob"] = report.terminal_violation_prob;
  j["min_coverage"] = report.min_coverage;
  j["step_violations"] = report.step_violations;
  j["coverage_failures"] = report.coverage_failures;
  j["terminal_violations"] = report.terminal_violations;
  j["seed"] = seed;
  j["plan_hash"] = plan_hash;
  std::ofstream out(path);
  if (!out) throw ConfigError("save_report: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

void write_mc_plot_csv(const std::string& path, const Trajectory& plan, const Vec& quantiles,
                       const Metric& metric, const std::vector<RolloutRecord>& traces,
                       int pos_x_index, int pos_y_index) {
  plan.validate();
  const int N = plan.horizon();
  const Mat Minv = metric.M.llt().solve(Mat::Identity(metric.M.rows(), metric.M.cols()));
  Mat pos_block(2, 2);
  pos_block << Minv(pos_x_index, pos_x_index), Minv(pos_x_index, pos_y_index),
      Minv(pos_y_index, pos_x_index), Minv(pos_y_index, pos_y_index);

  std::ofstream out(path);
  if (!out) throw ConfigError("write_mc_plot_csv: cannot open '" + path + "'");
  out << "k";
  for (Eigen::Index i = 0; i < plan.states[0].size(); ++i) out << ",xbar_" << (i + 1);
  out << ",axis_major,axis_minor";
  for (std::size_t r = 0; r < traces.size(); ++r) out << ",px_" << r << ",py_" << r;
  out << "\n";

  for (int k = 0; k <= N; ++k) {
    out << k;
    for (Eigen::Index i = 0; i < plan.states[k].size(); ++i) {
      out << "," << format_double17(plan.states[k](i));
    }
    const double C = k == 0 ? 0.0 : quantiles(k - 1);
    Eigen::SelfAdjointEigenSolver<Mat> eig(C * C * pos_block);
    out << "," << format_double17(std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff())));
    out << "," << format_double17(std::sqrt(std::max(0.0, eig.eigenvalues().minCoeff())));
    for (const auto& trace : traces) {
      out << "," << format_double17(trace.trajectory.states[k](pos_x_index)) << ","
          << format_double17(trace.trajectory.states[k](pos_y_index));
    }
    out << "\n";
  }
}

void write_traces_csv(const std::string& path, const std::vector<RolloutRecord>& traces) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_traces_csv: cannot open '" + path + "'");
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const auto& traj = traces[r].trajectory;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      out << r << "," << k;
      for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) {
        out << "," << format_double17(traj.states[k](i));
      }
      out << "\n";
    }
  }
}

std::string file_hash_hex(const std::string& path) { return hex64(fnv1a64(read_file(path))); }

std::string file_hash_hex_excluding(const std::string& path,
                                    const std::vector<std::string>& drop_keys) {
  const std::string content = read_file(path);
  const auto newline = content.find('\n');
  const std::string first = newline == std::string::npos ? content : content.substr(0, newline);
  json j;
  try {
    j = json::parse(first);
  } catch (const json::parse_error&) {
    return hex64(fnv1a64(content));
  }
  for (const auto& key : drop_keys) j.erase(key);
  std::string rebuilt = j.dump();
  if (newline != std::string::npos) rebuilt += content.substr(newline);
  return hex64(fnv1a64(rebuilt));
}

}  // namespace ccplan
