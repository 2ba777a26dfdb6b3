#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "sonnet/data.hpp"
#include "sonnet/errors.hpp"
#include "sonnet/numerics/init.hpp"
#include "sonnet/numerics/rng.hpp"

namespace sonnet {

/// Synthetic series generators.
///   sinusoid           y = sin(2πt/period), x1 = cos(2πt/period); noiseless
///   seasonal-walk      y = random walk + amplitude·sin(2πt/period),
///                      x1 = noisy copy of the seasonal term
///   leading-indicator  y is a stationary AR(1) process, x1_t = y_{t+lead},
///                      x2 an independent AR(1) distractor
struct SynthOptions {
  std::string kind = "sinusoid";
  std::size_t N = 2000;
  std::uint64_t seed = 42;
  std::size_t lead = 7;
  double period = 24.0;
  double noise = 0.1;
  double phi = 0.9;
  std::int64_t start = 1577836800;  // 2020-01-01T00:00:00
  std::int64_t step = 3600;
};

inline const std::vector<std::string>& synth_kinds() {
  static const std::vector<std::string> kinds{"sinusoid", "seasonal-walk", "leading-indicator"};
  return kinds;
}

inline SeriesTable synthesize(const SynthOptions& o) {
  if (o.N == 0) throw ConfigError("synth: N must be >= 1");
  if (!(o.period > 0)) throw ConfigError("synth: period must be positive");
  SeriesTable t;
  t.target_name = "y";
  for (std::size_t i = 0; i < o.N; ++i) {
    t.time.push_back(o.start + static_cast<std::int64_t>(i) * o.step);
    t.stamps.push_back(format_iso8601(t.time.back()));
  }
  InitRng rng(hash_combine(o.seed, name_hash(o.kind)));
  const double w = 2.0 * std::numbers::pi / o.period;
  if (o.kind == "sinusoid") {
    t.exo_names = {"x1"};
    t.exo.resize(1);
    for (std::size_t i = 0; i < o.N; ++i) {
      t.target.push_back(std::sin(w * static_cast<double>(i)));
      t.exo[0].push_back(std::cos(w * static_cast<double>(i)));
    }
  } else if (o.kind == "seasonal-walk") {
    t.exo_names = {"x1"};
    t.exo.resize(1);
    double walk = 0;
    for (std::size_t i = 0; i < o.N; ++i) {
      const double season = std::sin(w * static_cast<double>(i));
      walk += rng.normal(0.0, o.noise);
      t.target.push_back(walk + season);
      t.exo[0].push_back(season + rng.normal(0.0, o.noise));
    }
  } else if (o.kind == "leading-indicator") {
    t.exo_names = {"x1", "x2"};
    t.exo.resize(2);
    std::vector<double> z(o.N + o.lead);
    double zi = 0, d = 0;
    for (auto& v : z) {
      zi = o.phi * zi + rng.normal();
      v = zi;
    }
    for (std::size_t i = 0; i < o.N; ++i) {
      d = o.phi * d + rng.normal();
      t.target.push_back(z[i]);
      t.exo[0].push_back(z[i + o.lead]);
      t.exo[1].push_back(d);
    }
  } else {
    throw ConfigError("synth: unknown kind '" + o.kind + "' (expected sinusoid, seasonal-walk or leading-indicator)");
  }
  return t;
}

}  // namespace sonnet
