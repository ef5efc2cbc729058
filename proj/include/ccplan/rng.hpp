#pragma once

#include <cmath>
#include <cstdint>

#include "ccplan/types.hpp"

namespace ccplan {

// Counter-based random stream. Draw i is a bit-mix of (key, i), so a stream
// is fully determined by its key and substreams derived from (seed, id...)
// can be consumed in any order across workers without changing the values
// produced by any of them.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : key_(mix(seed + kGolden)) {}

  // Independent stream keyed by (this stream, id). Derivation goes through a
  // separate mixing domain so substream draws never collide with our own.
  RandomStream substream(std::uint64_t id) const {
    return RandomStream(FromKey{}, mix(key_ ^ mix((id + 1) * kStreamSalt)));
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  // Uniform on [0,1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0,1], keeps log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vec normal_vector(int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

 private:
  struct FromKey {};
  RandomStream(FromKey, std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kStreamSalt = 0xD6E8FEB86659FD93ULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ccplan
