#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lanecraft {

// Portable seeded generator. std::mt19937_64 is fully specified by the
// standard, but the <random> distributions are not, so the uniform and
// normal draws below are computed by hand to keep streams identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi_inclusive) {
    auto span = static_cast<std::uint64_t>(hi_inclusive - lo + 1);
    return lo + static_cast<int>(next_u64() % span);
  }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream; used to give each episode / module its own RNG.
  Rng fork(std::uint64_t salt) {
    return Rng(next_u64() ^ (salt * 0xD1B54A32D192ED03ull));
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  Rng r(a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
  return r.next_u64();
}

}  // namespace lanecraft
