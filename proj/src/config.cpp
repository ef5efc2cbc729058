#include "ccplan/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ccplan/hashing.hpp"

namespace ccplan {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

TomlValue parse_scalar(const std::string& raw) {
  TomlValue v;
  const std::string s = trim(raw);
  if (s.empty()) throw ConfigError("toml: empty value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw ConfigError("toml: unterminated string: " + s);
    v.kind = TomlValue::Kind::kString;
    v.string = s.substr(1, s.size() - 2);
    return v;
  }
  if (s == "true" || s == "false") {
    v.kind = TomlValue::Kind::kBool;
    v.boolean = (s == "true");
    return v;
  }
  std::size_t consumed = 0;
  try {
    v.number = std::stod(s, &consumed);
  } catch (const std::exception&) {
    throw ConfigError("toml: cannot parse value '" + s + "'");
  }
  if (consumed != s.size()) throw ConfigError("toml: trailing junk in value '" + s + "'");
  v.kind = TomlValue::Kind::kNumber;
  return v;
}

TomlValue parse_value(const std::string& raw) {
  const std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError("toml: unterminated array: " + s);
    TomlValue v;
    v.kind = TomlValue::Kind::kArray;
    const std::string body = s.substr(1, s.size() - 2);
    std::string cell;
    std::stringstream ss(body);
    while (std::getline(ss, cell, ',')) {
      if (trim(cell).empty()) continue;
      v.array.push_back(parse_scalar(cell));
    }
    return v;
  }
  return parse_scalar(s);
}

const TomlValue* find_key(const TomlTable& table, const std::string& key) {
  const auto it = table.find(key);
  return it == table.end() ? nullptr : &it->second;
}

double get_number(const TomlTable& table, const std::string& key, double fallback) {
  const TomlValue* v = find_key(table, key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::kNumber) throw ConfigError("config: '" + key + "' must be a number");
  return v->number;
}

double require_number(const TomlTable& table, const std::string& key) {
  const TomlValue* v = find_key(table, key);
  if (!v) throw ConfigError("config: missing key '" + key + "'");
  if (v->kind != TomlValue::Kind::kNumber) throw ConfigError("config: '" + key + "' must be a number");
  return v->number;
}

bool get_bool(const TomlTable& table, const std::string& key, bool fallback) {
  const TomlValue* v = find_key(table, key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::kBool) throw ConfigError("config: '" + key + "' must be a boolean");
  return v->boolean;
}

std::string get_string(const TomlTable& table, const std::string& key, const std::string& fallback) {
  const TomlValue* v = find_key(table, key);
  if (!v) return fallback;
  if (v->kind != TomlValue::Kind::kString) throw ConfigError("config: '" + key + "' must be a string");
  return v->string;
}

std::vector<double> get_number_array(const TomlTable& table, const std::string& key) {
  const TomlValue* v = find_key(table, key);
  if (!v) return {};
  if (v->kind != TomlValue::Kind::kArray) throw ConfigError("config: '" + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v->array.size());
  for (const auto& item : v->array) {
    if (item.kind != TomlValue::Kind::kNumber) {
      throw ConfigError("config: '" + key + "' must contain numbers only");
    }
    out.push_back(item.number);
  }
  return out;
}

std::vector<double> require_number_array(const TomlTable& table, const std::string& key) {
  if (!find_key(table, key)) throw ConfigError("config: missing key '" + key + "'");
  return get_number_array(table, key);
}

Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

Mat row_major(const std::vector<double>& flat, int rows, int cols, const std::string& what) {
  if (static_cast<int>(flat.size()) != rows * cols) {
    throw ConfigError("config: '" + what + "' needs " + std::to_string(rows * cols) +
                      " row-major entries, got " + std::to_string(flat.size()));
  }
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r) * cols + c];
  return m;
}

Mat diag_or_full(const TomlTable& table, const std::string& base, int n, const Mat& fallback) {
  if (find_key(table, base + "_diag")) {
    const auto d = require_number_array(table, base + "_diag");
    if (static_cast<int>(d.size()) != n) {
      throw ConfigError("config: '" + base + "_diag' needs " + std::to_string(n) + " entries");
    }
    return to_vec(d).asDiagonal();
  }
  if (find_key(table, base)) {
    return row_major(require_number_array(table, base), n, n, base);
  }
  return fallback;
}

}  // namespace

const TomlTable* TomlDoc::find(const std::string& name) const {
  const auto it = tables.find(name);
  return it == tables.end() ? nullptr : &it->second;
}

const TomlTable& TomlDoc::require(const std::string& name) const {
  const TomlTable* t = find(name);
  if (!t) throw ConfigError("config: missing [" + name + "] table");
  return *t;
}

TomlDoc parse_toml(const std::string& text) {
  TomlDoc doc;
  TomlTable* current = &doc.tables[""];

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string logical = strip_comment(line);
    // Arrays may span lines; keep consuming until brackets balance.
    auto unbalanced = [](const std::string& s) {
      long depth = 0;
      bool in_string = false;
      for (char c : s) {
        if (c == '"') in_string = !in_string;
        if (in_string) continue;
        if (c == '[') ++depth;
        if (c == ']') --depth;
      }
      return depth > 0;
    };
    while (unbalanced(logical)) {
      std::string more;
      if (!std::getline(in, more)) throw ConfigError("toml: unterminated multi-line array");
      logical += strip_comment(more);
    }
    const std::string s = trim(logical);
    if (s.empty()) continue;

    if (s.size() >= 4 && s.substr(0, 2) == "[[" && s.substr(s.size() - 2) == "]]") {
      const std::string name = trim(s.substr(2, s.size() - 4));
      doc.table_arrays[name].emplace_back();
      current = &doc.table_arrays[name].back();
      continue;
    }
    if (s.front() == '[' && s.back() == ']') {
      const std::string name = trim(s.substr(1, s.size() - 2));
      current = &doc.tables[name];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("toml: expected key = value, got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ConfigError("toml: empty key");
    (*current)[key] = parse_value(s.substr(eq + 1));
  }
  return doc;
}

TomlDoc parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_toml(buffer.str());
}

ExperimentConfig config_from_toml(const TomlDoc& doc) {
  ExperimentConfig cfg;

  const TomlTable& model_t = doc.require("model");
  const std::string model_id = get_string(model_t, "id", "dubins");
  const double dt = require_number(model_t, "dt");
  if (model_id == "dubins") {
    const int n_w = static_cast<int>(get_number(model_t, "n_w", 4));
    Mat D = Mat::Identity(4, n_w);
    if (find_key(model_t, "D")) {
      D = row_major(require_number_array(model_t, "D"), 4, n_w, "D");
    }
    cfg.noise_map = D;
    cfg.model = dubins_model(dt, D);
  } else {
    throw ConfigError("config: unknown model id '" + model_id + "'");
  }

  const TomlTable& noise_t = doc.require("noise");
  const std::string noise_type = get_string(noise_t, "type", "");
  const int n_w = cfg.model.n_w;
  if (noise_type == "uniform_box") {
    UniformBox box;
    box.lo = to_vec(require_number_array(noise_t, "lo"));
    box.hi = to_vec(require_number_array(noise_t, "hi"));
    cfg.noise = box;
  } else if (noise_type == "gaussian") {
    Gaussian g;
    g.mean = to_vec(require_number_array(noise_t, "mean"));
    g.cov = row_major(require_number_array(noise_t, "cov"), n_w, n_w, "cov");
    cfg.noise = g;
  } else if (noise_type == "gaussian_mixture") {
    GaussianMixture mix;
    mix.weights = require_number_array(noise_t, "weights");
    const auto means = require_number_array(noise_t, "means");
    const auto covs = require_number_array(noise_t, "covs");
    const int m = static_cast<int>(mix.weights.size());
    if (static_cast<int>(means.size()) != m * n_w || static_cast<int>(covs.size()) != m * n_w * n_w) {
      throw ConfigError("config: mixture means/covs sizes inconsistent with weights");
    }
    for (int i = 0; i < m; ++i) {
      mix.means.push_back(to_vec({means.begin() + i * n_w, means.begin() + (i + 1) * n_w}));
      mix.covs.push_back(row_major({covs.begin() + i * n_w * n_w, covs.begin() + (i + 1) * n_w * n_w},
                                   n_w, n_w, "covs"));
    }
    cfg.noise = mix;
  } else {
    throw ConfigError("config: unknown noise type '" + noise_type + "'");
  }
  validate(cfg.noise);
  if (noise_dimension(cfg.noise) != n_w) {
    throw ConfigError("config: noise dimension does not match the model noise map");
  }

  const TomlTable& conformal_t = doc.require("conformal");
  cfg.K = static_cast<int>(get_number(conformal_t, "K", 20));
  cfg.N = static_cast<int>(get_number(conformal_t, "N", 200));
  cfg.p = require_number(conformal_t, "p");
  cfg.delta_bar = get_number(conformal_t, "delta_bar", 0.0);
  cfg.delta = cfg.p - 2.0 * cfg.delta_bar;
  if (find_key(conformal_t, "delta") &&
      std::abs(get_number(conformal_t, "delta", cfg.delta) - cfg.delta) > 1e-12) {
    throw ConfigError("config: delta must equal p - 2*delta_bar");
  }
  if (!(cfg.delta > 0.0) || !(cfg.delta < 1.0)) {
    throw ConfigError("config: p - 2*delta_bar must lie in (0,1)");
  }
  cfg.weighting = parse_weighting(get_string(conformal_t, "weighting", "recursive"));
  cfg.cp_weights = get_number_array(conformal_t, "weights");
  cfg.collapse = get_bool(conformal_t, "collapse", true);

  const TomlTable& initial_t = doc.require("initial");
  cfg.x0 = to_vec(require_number_array(initial_t, "x0"));
  if (cfg.x0.size() != cfg.model.n_x) throw ConfigError("config: x0 dimension mismatch");

  const TomlTable* sampler_t = doc.find("sampler");
  cfg.sampler.frequencies = {0.5, 1.0, 2.0, 3.0, 4.0};
  cfg.sampler.weight_std = Vec::Constant(cfg.model.n_u, 0.5);
  if (sampler_t) {
    if (find_key(*sampler_t, "frequencies")) {
      cfg.sampler.frequencies = get_number_array(*sampler_t, "frequencies");
    }
    if (find_key(*sampler_t, "weight_std")) {
      cfg.sampler.weight_std = to_vec(get_number_array(*sampler_t, "weight_std"));
    }
  }
  cfg.sampler.horizon = cfg.N;
  cfg.sampler.initial_state = cfg.x0;
  cfg.sampler.validate(cfg.model);

  const TomlTable* metric_t = doc.find("metric");
  if (metric_t) {
    cfg.m_lo = get_number(*metric_t, "m_lo", cfg.m_lo);
    cfg.m_hi = get_number(*metric_t, "m_hi", cfg.m_hi);
    cfg.metric_source = get_string(*metric_t, "source", cfg.metric_source);
    if (find_key(*metric_t, "lambda")) {
      cfg.lambda = require_number(*metric_t, "lambda");
      cfg.gamma = 0.0;
    } else {
      cfg.gamma = get_number(*metric_t, "gamma", cfg.gamma);
      cfg.lambda = discrete_rate(cfg.gamma, cfg.model.dt, cfg.m_lo, cfg.m_hi);
    }
  } else {
    cfg.lambda = discrete_rate(cfg.gamma, cfg.model.dt, cfg.m_lo, cfg.m_hi);
  }
  if (!(cfg.lambda >= 0.0) || !(cfg.lambda < 1.0)) {
    throw ConfigError("config: lambda must lie in [0,1)");
  }

  const TomlTable* tracking_t = doc.find("tracking");
  cfg.lqr_Q = Mat::Identity(cfg.model.n_x, cfg.model.n_x);
  cfg.lqr_R = Mat::Identity(cfg.model.n_u, cfg.model.n_u);
  if (tracking_t) {
    cfg.lqr_Q = diag_or_full(*tracking_t, "q", cfg.model.n_x, cfg.lqr_Q);
    cfg.lqr_R = diag_or_full(*tracking_t, "r", cfg.model.n_u, cfg.lqr_R);
  }

  const TomlTable* cost_t = doc.find("cost");
  cfg.cost_R = 0.1 * Mat::Identity(cfg.model.n_u, cfg.model.n_u);
  if (cost_t) cfg.cost_R = diag_or_full(*cost_t, "r", cfg.model.n_u, cfg.cost_R);

  const TomlTable* cons_t = doc.find("constraints");
  cfg.constraints.risk = cfg.p;
  if (cons_t) {
    const auto a_flat = get_number_array(*cons_t, "A");
    const auto b_flat = get_number_array(*cons_t, "b");
    if (!b_flat.empty()) {
      cfg.constraints.A = row_major(a_flat, static_cast<int>(b_flat.size()), cfg.model.n_x, "A");
      cfg.constraints.b = to_vec(b_flat);
    } else {
      cfg.constraints.A = Mat::Zero(0, cfg.model.n_x);
      cfg.constraints.b = Vec::Zero(0);
    }
    const auto h_flat = get_number_array(*cons_t, "h");
    if (!h_flat.empty()) {
      cfg.constraints.H = row_major(get_number_array(*cons_t, "H"),
                                    static_cast<int>(h_flat.size()), cfg.model.n_x, "H");
      cfg.constraints.h = to_vec(h_flat);
    } else {
      cfg.constraints.H = Mat::Zero(0, cfg.model.n_x);
      cfg.constraints.h = Vec::Zero(0);
    }
  } else {
    cfg.constraints.A = Mat::Zero(0, cfg.model.n_x);
    cfg.constraints.b = Vec::Zero(0);
    cfg.constraints.H = Mat::Zero(0, cfg.model.n_x);
    cfg.constraints.h = Vec::Zero(0);
  }
  const auto obstacles = doc.table_arrays.find("obstacle");
  if (obstacles != doc.table_arrays.end()) {
    for (const auto& obs_t : obstacles->second) {
      BallObstacle obs;
      obs.center = to_vec(require_number_array(obs_t, "center"));
      obs.radius = require_number(obs_t, "radius");
      for (double idx : require_number_array(obs_t, "indices")) {
        obs.indices.push_back(static_cast<int>(idx));
      }
      cfg.constraints.obstacles.push_back(std::move(obs));
    }
  }
  cfg.constraints.validate(cfg.model.n_x);

  const TomlTable* sim_t = doc.find("simulate");
  if (sim_t) cfg.mc_runs = static_cast<int>(get_number(*sim_t, "runs", cfg.mc_runs));

  const TomlTable* seeds_t = doc.find("seeds");
  if (seeds_t) {
    cfg.seed_dataset = static_cast<std::uint64_t>(get_number(*seeds_t, "dataset", 1));
    cfg.seed_targets = static_cast<std::uint64_t>(get_number(*seeds_t, "targets", 2));
    cfg.seed_mc = static_cast<std::uint64_t>(get_number(*seeds_t, "montecarlo", 3));
  }

  const TomlTable* solver_t = doc.find("solver");
  if (solver_t) {
    cfg.solver.defect_tolerance =
        get_number(*solver_t, "defect_tolerance", cfg.solver.defect_tolerance);
    cfg.solver.violation_tolerance =
        get_number(*solver_t, "violation_tolerance", cfg.solver.violation_tolerance);
    cfg.solver.penalty_initial = get_number(*solver_t, "penalty_initial", cfg.solver.penalty_initial);
    cfg.solver.penalty_scale = get_number(*solver_t, "penalty_scale", cfg.solver.penalty_scale);
    cfg.solver.penalty_max = get_number(*solver_t, "penalty_max", cfg.solver.penalty_max);
    cfg.solver.inner_tol_initial =
        get_number(*solver_t, "inner_tol_initial", cfg.solver.inner_tol_initial);
    cfg.solver.inner_tol_decay = get_number(*solver_t, "inner_tol_decay", cfg.solver.inner_tol_decay);
    cfg.solver.inner_tol_final = get_number(*solver_t, "inner_tol_final", cfg.solver.inner_tol_final);
    cfg.solver.max_outer = static_cast<int>(get_number(*solver_t, "max_outer", cfg.solver.max_outer));
    cfg.solver.max_inner = static_cast<int>(get_number(*solver_t, "max_inner", cfg.solver.max_inner));
  }

  const TomlTable* out_t = doc.find("output");
  if (out_t) cfg.out_dir = get_string(*out_t, "dir", cfg.out_dir);

  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  ExperimentConfig cfg = config_from_toml(parse_toml(text));
  cfg.content_hash = fnv1a64(text);
  return cfg;
}

Metric build_metric(const ExperimentConfig& config) {
  if (config.metric_source == "identity") {
    return scaled_identity_metric(config.model.n_x, config.m_lo, config.m_hi, config.lambda);
  }
  if (config.metric_source == "riccati") {
    // Riccati matrix of the tracking design along the uncontrolled nominal
    // flow, rescaled into the metric bounds.
    Trajectory flow;
    flow.states.push_back(config.x0);
    flow.controls.assign(config.N, Vec::Zero(config.model.n_u));
    for (int k = 0; k < config.N; ++k) {
      flow.states.push_back(step_nominal(config.model, flow.states.back(), flow.controls[k]));
    }
    const TrackingPolicy policy = design_tvlqr(config.model, flow, config.lqr_Q, config.lqr_R);
    return metric_from_spd(policy.riccati_initial, config.m_lo, config.m_hi, config.lambda);
  }
  throw ConfigError("config: unknown metric source '" + config.metric_source + "'");
}

PolicyDesigner make_policy_designer(const ExperimentConfig& config) {
  const Mat Q = config.lqr_Q;
  const Mat R = config.lqr_R;
  return [Q, R](const Model& model, const Trajectory& target) {
    return design_tvlqr(model, target, Q, R);
  };
}

}  // namespace ccplan
