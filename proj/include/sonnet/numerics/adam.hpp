#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/numerics/tape.hpp"

namespace sonnet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one per parameter, plus the step count.
template <class T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::span<const Parameter<T>> params) {
    for (const auto& p : params) {
      m.emplace_back(p.value.shape());
      v.emplace_back(p.value.shape());
    }
  }
  explicit AdamState(const std::vector<Parameter<T>*>& params) {
    for (const auto* p : params) {
      m.emplace_back(p->value.shape());
      v.emplace_back(p->value.shape());
    }
  }
};

/// One bias-corrected Adam update using the gradients stored on `params`.
template <class T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr,
               const AdamConfig& cfg = {}) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam: state does not match parameter list");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw DimensionError("adam: buffer shape mismatch for parameter '" + p.name + "'");
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      p.value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template <class T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state, double lr, const AdamConfig& cfg = {}) {
  std::vector<Parameter<T>*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  adam_step(ptrs, state, lr, cfg);
}

}  // namespace sonnet
