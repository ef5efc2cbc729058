#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccplan/conformal.hpp"
#include "ccplan/contraction.hpp"
#include "ccplan/model.hpp"
#include "ccplan/noise.hpp"
#include "ccplan/tightening.hpp"
#include "ccplan/trajopt.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

// Minimal TOML-style document: [table] headers, [[table]] arrays, and
// key = value lines with numbers, booleans, quoted strings, and flat arrays.
struct TomlValue {
  enum class Kind { kNumber, kBool, kString, kArray };
  Kind kind = Kind::kNumber;
  double number = 0.0;
  bool boolean = false;
  std::string string;
  std::vector<TomlValue> array;
};

using TomlTable = std::map<std::string, TomlValue>;

struct TomlDoc {
  std::map<std::string, TomlTable> tables;
  std::map<std::string, std::vector<TomlTable>> table_arrays;

  const TomlTable* find(const std::string& name) const;
  const TomlTable& require(const std::string& name) const;
};

TomlDoc parse_toml(const std::string& text);
TomlDoc parse_toml_file(const std::string& path);

// Fully resolved experiment description. delta = p - 2*delta_bar is derived
// at load time; an explicit delta that disagrees is rejected.
struct ExperimentConfig {
  Model model;
  Mat noise_map;
  NoiseDistribution noise;
  TargetSamplerConfig sampler;

  double m_lo = 0.5;
  double m_hi = 10.0;
  double gamma = 1.0;
  double lambda = 0.0;
  std::string metric_source = "identity";  // identity | riccati

  Mat lqr_Q;
  Mat lqr_R;
  Mat cost_R;

  int K = 20;
  int N = 200;
  double p = 0.1;
  double delta = 0.1;
  double delta_bar = 0.0;
  ScoreWeighting weighting = ScoreWeighting::kRecursive;
  std::vector<double> cp_weights;  // empty = uniform
  bool collapse = true;

  Vec x0;
  ConstraintSpec constraints;

  int mc_runs = 200;
  std::uint64_t seed_dataset = 1;
  std::uint64_t seed_targets = 2;
  std::uint64_t seed_mc = 3;

  SolveOptions solver;
  std::string out_dir = "out";
  std::uint64_t content_hash = 0;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_toml(const TomlDoc& doc);

Metric build_metric(const ExperimentConfig& config);
PolicyDesigner make_policy_designer(const ExperimentConfig& config);

}  // namespace ccplan
