#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "sonnet/numerics/rng.hpp"
#include "sonnet/numerics/tensor.hpp"

namespace sonnet {

/// FNV-1a over a parameter name; used to give every parameter its own
/// initialization stream.
constexpr std::uint64_t name_hash(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Generator for one named parameter under an init root.
inline InitRng param_rng(std::uint64_t init_root, std::string_view name) {
  return InitRng(hash_combine(init_root, name_hash(name)));
}

template <class T>
void fill_normal(Tensor<T>& t, InitRng& rng, double mean, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal(mean, stddev));
}

/// Glorot/Xavier uniform: U(−a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <class T>
void fill_xavier_uniform(Tensor<T>& t, InitRng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-a, a));
}

}  // namespace sonnet
