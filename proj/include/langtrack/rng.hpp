#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace langtrack {

/// Seeded random stream. Normal deviates use an explicit Box-Muller so the
/// byte stream of draws depends only on the seed, not on the standard
/// library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  double normal(double mean = 0.0, double stdev = 1.0) {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    const double z = std::sqrt(-2.0 * std::log(u1)) *
                     std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + stdev * z;
  }

  /// Derive an independent stream; `salt` keeps sub-streams decorrelated.
  Rng fork(std::uint64_t salt) {
    std::uint64_t s = gen_() ^ (salt * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull);
    return Rng(s);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace langtrack
