#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sonnet {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

/// Stateless counter-based generator: each draw is a pure function of
/// (seed, stream, step, index), so replays never depend on call order.
class CounterRng {
 public:
  CounterRng() = default;
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t step)
      : key_(hash_combine(hash_combine(seed, stream), step)) {}

  std::uint64_t bits(std::uint64_t index) const noexcept { return mix64(key_ ^ mix64(index)); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform(std::uint64_t index) const noexcept {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_ = 0;
};

/// Named roots for every stochastic source in a run.
struct SeedRoots {
  std::uint64_t seed = 0;
  std::uint64_t init = 0;
  std::uint64_t dropout = 0;
  std::uint64_t shuffle = 0;
};

inline SeedRoots set_seed(std::uint64_t seed) {
  SeedRoots r;
  r.seed = seed;
  r.init = hash_combine(seed, 0x696e6974ULL);      // "init"
  r.dropout = hash_combine(seed, 0x64726f70ULL);   // "drop"
  r.shuffle = hash_combine(seed, 0x73687566ULL);   // "shuf"
  return r;
}

/// Sequential generator for parameter initialization. Normal draws are
/// Box-Muller over the raw engine bits.
class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sonnet
