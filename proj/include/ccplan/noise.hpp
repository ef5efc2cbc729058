#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "ccplan/rng.hpp"
#include "ccplan/types.hpp"

namespace ccplan {

struct UniformBox {
  Vec lo;
  Vec hi;
};

struct Gaussian {
  Vec mean;
  Mat cov;
  bool regularized = false;  // set when the MLE fit had to add 1e-9*I
};

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Vec> means;
  std::vector<Mat> covs;
};

// Immutable after construction; sampling always goes through an explicitly
// passed stream.
using NoiseDistribution = std::variant<UniformBox, GaussianMixture, Gaussian>;

int noise_dimension(const NoiseDistribution& dist);
void validate(const NoiseDistribution& dist);

// Compact descriptor used for file headers and provenance hashing.
std::string describe(const NoiseDistribution& dist);

Vec sample(const NoiseDistribution& dist, RandomStream& rng);

// K sequences of N noise vectors (Assumption: i.i.d. draws from one
// distribution). Sequence j, step k draws from the substream keyed
// (seed, j, k), so parallel generation is reproducible and order-independent.
struct DisturbanceDataset {
  int K = 0;
  int N = 0;
  std::vector<std::vector<Vec>> samples;  // [K][N]
  std::uint64_t seed = 0;
  std::string distribution_id;
};

DisturbanceDataset build_dataset(const NoiseDistribution& dist, int K, int N, std::uint64_t seed);

// Sample mean and 1/K-normalized covariance. Near-singular covariances are
// bumped by 1e-9*I and flagged.
Gaussian fit_gaussian_mle(const std::vector<Vec>& samples);

// File format: one JSON header line {K, N, n_w, seed, distribution}, then CSV
// rows j,k,w_1..w_{n_w} with 17 significant digits (lossless round-trip).
void save_dataset(const std::string& path, const DisturbanceDataset& dataset);
DisturbanceDataset load_dataset(const std::string& path);

}  // namespace ccplan
