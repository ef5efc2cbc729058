#include "ccplan/noise.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ccplan {

namespace {

using nlohmann::json;

Mat cholesky_factor(const Mat& cov, const char* what) {
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw ConfigError(std::string(what) + ": covariance is not positive definite");
  }
  return llt.matrixL();
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_to_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

std::string format17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

int noise_dimension(const NoiseDistribution& dist) {
  return std::visit(
      [](const auto& d) -> int {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformBox>) return static_cast<int>(d.lo.size());
        if constexpr (std::is_same_v<T, Gaussian>) return static_cast<int>(d.mean.size());
        if constexpr (std::is_same_v<T, GaussianMixture>)
          return d.means.empty() ? 0 : static_cast<int>(d.means.front().size());
      },
      dist);
}

void validate(const NoiseDistribution& dist) {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          if (d.lo.size() == 0 || d.lo.size() != d.hi.size()) {
            throw ConfigError("UniformBox: lo/hi size mismatch");
          }
          if (((d.hi - d.lo).array() < 0.0).any()) {
            throw ConfigError("UniformBox: requires lo <= hi componentwise");
          }
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          if (d.mean.size() == 0 || d.cov.rows() != d.mean.size() || d.cov.cols() != d.mean.size()) {
            throw ConfigError("Gaussian: mean/cov size mismatch");
          }
          cholesky_factor(d.cov, "Gaussian");
        } else {
          if (d.weights.empty() || d.weights.size() != d.means.size() ||
              d.weights.size() != d.covs.size()) {
            throw ConfigError("GaussianMixture: component count mismatch");
          }
          double total = 0.0;
          for (double w : d.weights) {
            if (w <= 0.0) throw ConfigError("GaussianMixture: weights must be positive");
            total += w;
          }
          if (std::abs(total - 1.0) > 1e-12) {
            throw ConfigError("GaussianMixture: weights must sum to 1");
          }
          const Eigen::Index n = d.means.front().size();
          for (std::size_t i = 0; i < d.means.size(); ++i) {
            if (d.means[i].size() != n || d.covs[i].rows() != n || d.covs[i].cols() != n) {
              throw ConfigError("GaussianMixture: inconsistent component dimensions");
            }
            cholesky_factor(d.covs[i], "GaussianMixture");
          }
        }
      },
      dist);
}

std::string describe(const NoiseDistribution& dist) {
  json j;
  std::visit(
      [&j](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          j["type"] = "uniform_box";
          j["lo"] = vec_to_json(d.lo);
          j["hi"] = vec_to_json(d.hi);
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          j["type"] = "gaussian";
          j["mean"] = vec_to_json(d.mean);
          j["cov"] = mat_to_json(d.cov);
        } else {
          j["type"] = "gaussian_mixture";
          j["weights"] = d.weights;
          json means = json::array(), covs = json::array();
          for (const auto& m : d.means) means.push_back(vec_to_json(m));
          for (const auto& c : d.covs) covs.push_back(mat_to_json(c));
          j["means"] = means;
          j["covs"] = covs;
        }
      },
      dist);
  return j.dump();
}

Vec sample(const NoiseDistribution& dist, RandomStream& rng) {
  return std::visit(
      [&rng](const auto& d) -> Vec {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          Vec w(d.lo.size());
          for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(d.lo(i), d.hi(i));
          return w;
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          const Mat L = cholesky_factor(d.cov, "Gaussian");
          return d.mean + L * rng.normal_vector(static_cast<int>(d.mean.size()));
        } else {
          const double u = rng.uniform01();
          std::size_t comp = d.weights.size() - 1;
          double cum = 0.0;
          for (std::size_t i = 0; i < d.weights.size(); ++i) {
            cum += d.weights[i];
            if (u < cum) {
              comp = i;
              break;
            }
          }
          const Mat L = cholesky_factor(d.covs[comp], "GaussianMixture");
          return d.means[comp] + L * rng.normal_vector(static_cast<int>(d.means[comp].size()));
        }
      },
      dist);
}

DisturbanceDataset build_dataset(const NoiseDistribution& dist, int K, int N, std::uint64_t seed) {
  if (K < 1 || N < 1) throw ConfigError("build_dataset: requires K >= 1 and N >= 1");
  validate(dist);

  DisturbanceDataset dataset;
  dataset.K = K;
  dataset.N = N;
  dataset.seed = seed;
  dataset.distribution_id = describe(dist);
  dataset.samples.resize(K);

  RandomStream root(seed);
  for (int j = 0; j < K; ++j) {
    RandomStream rollout = root.substream(static_cast<std::uint64_t>(j));
    dataset.samples[j].reserve(N);
    for (int k = 0; k < N; ++k) {
      RandomStream step = rollout.substream(static_cast<std::uint64_t>(k));
      dataset.samples[j].push_back(sample(dist, step));
    }
  }
  return dataset;
}

Gaussian fit_gaussian_mle(const std::vector<Vec>& samples) {
  if (samples.empty()) throw ConfigError("fit_gaussian_mle: no samples");
  const Eigen::Index n = samples.front().size();
  if (static_cast<Eigen::Index>(samples.size()) < n + 1) {
    throw ConfigError("fit_gaussian_mle: need at least dim+1 samples");
  }

  Vec mean = Vec::Zero(n);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());

  Mat cov = Mat::Zero(n, n);
  for (const auto& s : samples) {
    const Vec d = s - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(samples.size());  // MLE normalization, not Bessel
  cov = 0.5 * (cov + cov.transpose());

  Gaussian g{mean, cov, false};
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.eigenvalues().minCoeff() < 1e-12) {
    g.cov += 1e-9 * Mat::Identity(n, n);
    g.regularized = true;
  }
  return g;
}

void save_dataset(const std::string& path, const DisturbanceDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw ConfigError("save_dataset: cannot open '" + path + "'");

  const int n_w = dataset.samples.empty() || dataset.samples[0].empty()
                      ? 0
                      : static_cast<int>(dataset.samples[0][0].size());
  json header;
  header["kind"] = "disturbance_dataset";
  header["K"] = dataset.K;
  header["N"] = dataset.N;
  header["n_w"] = n_w;
  header["seed"] = dataset.seed;
  header["distribution"] = json::parse(dataset.distribution_id);
  out << header.dump() << "\n";

  for (int j = 0; j < dataset.K; ++j) {
    for (int k = 0; k < dataset.N; ++k) {
      out << j << "," << k;
      const Vec& w = dataset.samples[j][k];
      for (Eigen::Index i = 0; i < w.size(); ++i) out << "," << format17(w(i));
      out << "\n";
    }
  }
}

DisturbanceDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_dataset: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw ConfigError("load_dataset: empty file");
  const json header = json::parse(line);
  if (header.value("kind", "") != "disturbance_dataset") {
    throw ConfigError("load_dataset: '" + path + "' is not a dataset file");
  }

  DisturbanceDataset dataset;
  dataset.K = header.at("K").get<int>();
  dataset.N = header.at("N").get<int>();
  dataset.seed = header.at("seed").get<std::uint64_t>();
  dataset.distribution_id = header.at("distribution").dump();
  const int n_w = header.at("n_w").get<int>();
  dataset.samples.assign(dataset.K, std::vector<Vec>(dataset.N, Vec::Zero(n_w)));

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const int j = std::stoi(cell);
    std::getline(ss, cell, ',');
    const int k = std::stoi(cell);
    if (j < 0 || j >= dataset.K || k < 0 || k >= dataset.N) {
      throw ConfigError("load_dataset: row index out of range");
    }
    Vec w(n_w);
    for (int i = 0; i < n_w; ++i) {
      std::getline(ss, cell, ',');
      w(i) = std::stod(cell);
    }
    dataset.samples[j][k] = w;
  }
  return dataset;
}

}  // namespace ccplan
