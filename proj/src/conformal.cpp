#include "ccplan/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "ccplan/hashing.hpp"
#include "ccplan/parallel.hpp"

namespace ccplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string canonical(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g;", x);
  return buf;
}

}  // namespace

void TargetSamplerConfig::validate(const Model& model) const {
  if (frequencies.empty()) throw ConfigError("target sampler: frequencies must be nonempty");
  if (weight_std.size() != model.n_u) {
    throw ConfigError("target sampler: weight_std needs one entry per control channel");
  }
  if ((weight_std.array() <= 0.0).any()) {
    throw ConfigError("target sampler: weight_std must be positive");
  }
  if (horizon < 1) throw ConfigError("target sampler: horizon must be >= 1");
  if (initial_state.size() != model.n_x) {
    throw ConfigError("target sampler: initial state dimension mismatch");
  }
}

std::uint64_t TargetSamplerConfig::hash() const {
  std::string s = "sampler;";
  for (double f : frequencies) s += canonical(f);
  s += "|";
  for (Eigen::Index i = 0; i < weight_std.size(); ++i) s += canonical(weight_std(i));
  s += "|" + std::to_string(horizon) + "|";
  for (Eigen::Index i = 0; i < initial_state.size(); ++i) s += canonical(initial_state(i));
  return fnv1a64(s);
}

std::uint64_t metric_hash(const Metric& metric) {
  std::string s = "metric;";
  for (Eigen::Index r = 0; r < metric.theta.rows(); ++r)
    for (Eigen::Index c = 0; c < metric.theta.cols(); ++c) s += canonical(metric.theta(r, c));
  s += canonical(metric.m_lo) + canonical(metric.m_hi) + canonical(metric.lambda);
  return fnv1a64(s);
}

Trajectory sample_target(const TargetSamplerConfig& cfg, const Model& model, RandomStream& rng) {
  cfg.validate(model);
  const int N = cfg.horizon;
  const int n_u = model.n_u;
  const std::size_t n_freq = cfg.frequencies.size();

  // Weight draw order is fixed (channel-major, then sin/cos per frequency)
  // so a given stream always produces the same target.
  Mat sin_w(n_u, n_freq), cos_w(n_u, n_freq);
  for (int c = 0; c < n_u; ++c) {
    for (std::size_t m = 0; m < n_freq; ++m) {
      sin_w(c, m) = cfg.weight_std(c) * rng.normal();
      cos_w(c, m) = cfg.weight_std(c) * rng.normal();
    }
  }

  Trajectory traj;
  traj.controls.reserve(N);
  traj.states.reserve(N + 1);
  traj.states.push_back(cfg.initial_state);
  for (int k = 0; k < N; ++k) {
    const double t = k * model.dt;
    Vec u = Vec::Zero(n_u);
    for (int c = 0; c < n_u; ++c) {
      for (std::size_t m = 0; m < n_freq; ++m) {
        const double w = cfg.frequencies[m] * t;
        u(c) += sin_w(c, m) * std::sin(w) + cos_w(c, m) * std::cos(w);
      }
    }
    traj.controls.push_back(u);
    traj.states.push_back(step_nominal(model, traj.states.back(), u));
  }
  return traj;
}

ScoreWeighting parse_weighting(const std::string& name) {
  if (name == "recursive") return ScoreWeighting::kRecursive;
  if (name == "paper-literal") return ScoreWeighting::kPaperLiteral;
  throw ConfigError("unknown score weighting '" + name + "' (use recursive|paper-literal)");
}

std::string weighting_name(ScoreWeighting w) {
  return w == ScoreWeighting::kRecursive ? "recursive" : "paper-literal";
}

RolloutScore score_rollout(const Model& model, const Metric& metric, const PolicyDesigner& designer,
                           const Trajectory& target, const std::vector<Vec>& noise_seq,
                           ScoreWeighting weighting) {
  target.validate();
  const int N = target.horizon();
  if (static_cast<int>(noise_seq.size()) < N) {
    throw ConfigError("score_rollout: noise sequence shorter than target horizon");
  }

  const TrackingPolicy policy = designer(model, target);
  RolloutScore out;
  out.scores = Vec::Zero(N);
  out.energies = Vec::Zero(N);

  Vec x = target.states[0];
  double recursive_sum = 0.0;   // S_{k} -> lambda * S_k + e_k
  double literal_sum = 0.0;     // S_{k} -> S_k + lambda^k e_k
  double lambda_pow = 1.0;
  for (int k = 0; k < N; ++k) {
    const Vec& xbar = target.states[k];
    const Vec& ubar = target.controls[k];
    const double residual = delta_v(metric, model, policy, x, xbar, ubar, k);
    const double disturbance = (metric.theta * (model.D(x) * noise_seq[k])).norm();
    const double term = residual + disturbance;

    recursive_sum = metric.lambda * recursive_sum + term;
    literal_sum += lambda_pow * term;
    lambda_pow *= metric.lambda;

    const Vec u = policy.evaluate(x, xbar, ubar, k);
    x = model.f(x, u) + model.D(x) * noise_seq[k];
    if (!all_finite(x)) {
      out.diverged = true;
      for (int r = k; r < N; ++r) {
        out.scores(r) = kInf;
        out.energies(r) = kInf;
      }
      return out;
    }
    out.scores(k) = weighting == ScoreWeighting::kRecursive ? recursive_sum : literal_sum;
    out.energies(k) = energy(metric, x, target.states[k + 1]);
  }
  return out;
}

ScoreTable calibrate(const Model& model, const Metric& metric, const DisturbanceDataset& dataset,
                     const TargetSamplerConfig& sampler, ScoreWeighting weighting,
                     const PolicyDesigner& designer, std::uint64_t target_seed, int workers) {
  sampler.validate(model);
  if (dataset.N < sampler.horizon) {
    throw ConfigError("calibrate: dataset horizon shorter than sampler horizon");
  }

  ScoreTable table;
  table.S = Mat::Zero(dataset.K, sampler.horizon);
  table.weighting = weighting_name(weighting);
  table.dataset_seed = dataset.seed;
  table.sampler_hash = sampler.hash();
  table.metric_hash = metric_hash(metric);

  std::vector<char> diverged(dataset.K, 0);
  RandomStream targets(target_seed);
  parallel_for(dataset.K, workers, [&](int j) {
    RandomStream rng = targets.substream(static_cast<std::uint64_t>(j));
    const Trajectory target = sample_target(sampler, model, rng);
    const RolloutScore score =
        score_rollout(model, metric, designer, target, dataset.samples[j], weighting);
    table.S.row(j) = score.scores.transpose();
    diverged[j] = score.diverged ? 1 : 0;
  });
  table.diverged_rollouts = static_cast<int>(std::count(diverged.begin(), diverged.end(), 1));
  return table;
}

double weighted_quantile(const std::vector<double>& scores, const std::vector<double>& weights,
                         double alpha) {
  if (scores.empty()) throw ConfigError("weighted_quantile: empty scores");
  if (!(alpha > 0.0) || !(alpha < 1.0)) throw ConfigError("weighted_quantile: alpha outside (0,1)");
  if (!weights.empty() && weights.size() != scores.size()) {
    throw ConfigError("weighted_quantile: weight count mismatch");
  }
  for (double w : weights) {
    if (!(w >= 0.0) || !(w <= 1.0)) throw ConfigError("weighted_quantile: weights must be in [0,1]");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw NumericalError("weighted_quantile: NaN score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const auto weight_of = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double total = 1.0;  // the infinity atom
  for (std::size_t i = 0; i < scores.size(); ++i) total += weight_of(i);

  // First atom whose cumulative mass reaches 1 - alpha; ties need no special
  // case because later duplicates only add mass at the same point.
  const double target = 1.0 - alpha;
  double cum = 0.0;
  for (std::size_t idx : order) {
    cum += weight_of(idx);
    if (cum / total >= target) return scores[idx];
  }
  return kInf;
}

int minimal_calibration_size(double alpha) {
  for (int K = 1; K < 1000000; ++K) {
    if (static_cast<int>(std::ceil((1.0 - alpha) * (K + 1))) <= K) return K;
  }
  throw ConfigError("minimal_calibration_size: alpha too small");
}

QuantileSchedule quantile_schedule(const ScoreTable& table, double delta, double delta_bar,
                                   const std::vector<double>& weights, bool collapse) {
  if (!(delta > 0.0) || !(delta < 1.0)) throw ConfigError("quantile_schedule: delta outside (0,1)");
  if (!(delta_bar >= 0.0) || !(delta_bar < delta)) {
    throw ConfigError("quantile_schedule: requires 0 <= delta_bar < delta");
  }
  const double alpha = delta - delta_bar;
  const int K = static_cast<int>(table.S.rows());
  const int N = static_cast<int>(table.S.cols());

  QuantileSchedule schedule;
  schedule.alpha = alpha;
  schedule.weights = weights;
  schedule.C = Vec::Zero(N);
  std::vector<double> column(K);
  for (int k = 0; k < N; ++k) {
    for (int j = 0; j < K; ++j) column[j] = table.S(j, k);
    schedule.C(k) = weighted_quantile(column, weights, alpha);
    if (std::isinf(schedule.C(k))) {
      throw InsufficientCalibrationError(
          "quantile at step " + std::to_string(k + 1) + " is +inf: K=" + std::to_string(K) +
          " calibration rollouts cannot support miss level " + std::to_string(alpha) +
          " (need K >= " + std::to_string(minimal_calibration_size(alpha)) +
          " under uniform weights, more if rollouts diverged)");
    }
  }
  if (collapse) {
    const double tail = schedule.C(N - 1);
    schedule.collapse_dominates = tail >= schedule.C.maxCoeff() - 1e-15;
    schedule.C.setConstant(tail);
    schedule.collapsed = true;
  }
  return schedule;
}

}  // namespace ccplan
