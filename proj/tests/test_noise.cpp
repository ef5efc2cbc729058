#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "ccplan/noise.hpp"
#include "test_helpers.hpp"

using namespace ccplan;
using namespace ccplan::testing;

TEST_CASE("noise: degenerate box always returns its corner") {
  const Vec c = Vec::Constant(3, 0.75);
  const NoiseDistribution dist = UniformBox{c, c};
  RandomStream rng(5);
  for (int i = 0; i < 10; ++i) CHECK((sample(dist, rng) - c).isZero(0.0));
}

TEST_CASE("noise: case (i) box bounds") {
  const NoiseDistribution dist = case1_noise();
  RandomStream rng(9);
  for (int i = 0; i < 2000; ++i) {
    const Vec w = sample(dist, rng);
    CHECK(w.lpNorm<Eigen::Infinity>() <= 0.15);
    CHECK(std::abs(w(0)) <= 0.03);
    CHECK(std::abs(w(1)) <= 0.03);
  }
}

TEST_CASE("noise: mixture mean is zero") {
  const NoiseDistribution dist = case2_noise();
  RandomStream rng(13);
  const int n = 100000;
  Vec sum = Vec::Zero(4);
  for (int i = 0; i < n; ++i) sum += sample(dist, rng);
  const Vec mean = sum / n;
  // Per-channel sd: 0.1*(0.25+0.0025)*2 + 0.8*0.0025 -> var = 0.0525.
  const double tol = 3.0 * std::sqrt(0.0525 / n);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(mean(i)) <= tol);
}

TEST_CASE("noise: mixture component frequencies within binomial bounds") {
  const NoiseDistribution dist = case2_noise();
  RandomStream rng(17);
  const int n = 100000;
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const double m = sample(dist, rng).mean();
    counts[m < -0.25 ? 0 : (m > 0.25 ? 2 : 1)]++;
  }
  const double psi[3] = {0.1, 0.8, 0.1};
  for (int c = 0; c < 3; ++c) {
    const double bound = 3.0 * std::sqrt(psi[c] * (1 - psi[c]) * n);
    CHECK(std::abs(counts[c] - psi[c] * n) <= bound);
  }
}

TEST_CASE("noise: dataset shape, determinism, seed sensitivity") {
  const NoiseDistribution dist = case1_noise();
  const DisturbanceDataset a = build_dataset(dist, 20, 200, 42);
  CHECK(a.K == 20);
  CHECK(a.samples.size() == 20);
  for (const auto& seq : a.samples) CHECK(seq.size() == 200);

  const DisturbanceDataset b = build_dataset(dist, 20, 200, 42);
  bool identical = true;
  for (int j = 0; j < 20; ++j)
    for (int k = 0; k < 200; ++k) identical &= (a.samples[j][k] - b.samples[j][k]).isZero(0.0);
  CHECK(identical);

  const DisturbanceDataset c = build_dataset(dist, 20, 200, 43);
  bool differs = false;
  for (int j = 0; j < 20 && !differs; ++j)
    for (int k = 0; k < 200 && !differs; ++k)
      differs = !(a.samples[j][k] - c.samples[j][k]).isZero(0.0);
  CHECK(differs);

  CHECK_THROWS_AS(build_dataset(dist, 0, 10, 1), ConfigError);
  CHECK_THROWS_AS(build_dataset(dist, 10, 0, 1), ConfigError);
}

TEST_CASE("noise: dataset persistence round-trips bit-exactly") {
  const NoiseDistribution dist = case2_noise();
  const DisturbanceDataset a = build_dataset(dist, 5, 17, 777);
  const std::string path = temp_path("dataset_roundtrip.csv");
  save_dataset(path, a);
  const DisturbanceDataset b = load_dataset(path);
  CHECK(b.K == a.K);
  CHECK(b.N == a.N);
  CHECK(b.seed == a.seed);
  CHECK(b.distribution_id == a.distribution_id);
  for (int j = 0; j < a.K; ++j)
    for (int k = 0; k < a.N; ++k) CHECK((a.samples[j][k] - b.samples[j][k]).isZero(0.0));
  std::filesystem::remove(path);
}

TEST_CASE("noise: MLE fit") {
  SUBCASE("identical samples collapse to a regularized point mass") {
    const Vec c = Vec::Constant(2, 1.5);
    const Gaussian g = fit_gaussian_mle(std::vector<Vec>(10, c));
    CHECK((g.mean - c).isZero(1e-15));
    CHECK(g.regularized);
    CHECK(g.cov.lpNorm<Eigen::Infinity>() <= 1e-8);
  }
  SUBCASE("two-point scalar sample: MLE divides by the count") {
    std::vector<Vec> samples{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
    const Gaussian g = fit_gaussian_mle(samples);
    CHECK(g.mean(0) == doctest::Approx(0.0));
    CHECK(g.cov(0, 0) == doctest::Approx(1.0));  // (1+1)/2, not /1
  }
  SUBCASE("case (i) variance approaches sigma^2/3") {
    const NoiseDistribution dist = case1_noise();
    RandomStream rng(23);
    std::vector<Vec> samples;
    samples.reserve(100000);
    for (int i = 0; i < 100000; ++i) samples.push_back(sample(dist, rng));
    const Gaussian g = fit_gaussian_mle(samples);
    CHECK(g.cov(2, 2) == doctest::Approx(0.0075).epsilon(0.10));
    CHECK(g.cov(3, 3) == doctest::Approx(0.0075).epsilon(0.10));
  }
  SUBCASE("too few samples rejected") {
    CHECK_THROWS_AS(fit_gaussian_mle({Vec::Zero(4)}), ConfigError);
  }
}

TEST_CASE("noise: validation rejects malformed distributions") {
  Vec lo(2), hi(2);
  lo << 0.5, 0.0;
  hi << 0.0, 1.0;
  CHECK_THROWS_AS(validate(NoiseDistribution(UniformBox{lo, hi})), ConfigError);

  GaussianMixture mix;
  mix.weights = {0.5, 0.4};  // does not sum to 1
  mix.means = {Vec::Zero(2), Vec::Zero(2)};
  mix.covs.assign(2, Mat::Identity(2, 2));
  CHECK_THROWS_AS(validate(NoiseDistribution(mix)), ConfigError);

  Mat bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
  CHECK_THROWS_AS(validate(NoiseDistribution(Gaussian{Vec::Zero(2), bad})), ConfigError);
}
