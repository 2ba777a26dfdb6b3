#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/numerics/init.hpp"
#include "sonnet/numerics/ops.hpp"

namespace sonnet {

/// Normalized time steps t_i = i/(L−1). A single step maps to t = {0}.
template <class T>
Tensor<T> time_grid(std::size_t L) {
  if (L == 0) throw DimensionError("time grid needs L >= 1");
  Tensor<T> t(Shape{L});
  for (std::size_t i = 0; i < L && L > 1; ++i) t[i] = static_cast<T>(i) / static_cast<T>(L - 1);
  return t;
}

/// K learnable atoms, each with its own (w_α, w_β, w_γ) vectors of length d.
template <class T>
struct WaveletBank {
  std::size_t K = 0;
  std::size_t L = 0;
  std::size_t d = 0;
  Parameter<T> alpha;
  Parameter<T> beta;
  Parameter<T> gamma;

  WaveletBank() = default;
  WaveletBank(std::size_t k, std::size_t l, std::size_t width)
      : K(k),
        L(l),
        d(width),
        alpha("wavelet.alpha", Tensor<T>(Shape{k, width})),
        beta("wavelet.beta", Tensor<T>(Shape{k, width})),
        gamma("wavelet.gamma", Tensor<T>(Shape{k, width})) {}

  /// Standard normal draws, one stream per parameter.
  void init(std::uint64_t init_root) {
    for (auto* p : parameters()) {
      auto rng = param_rng(init_root, p->name);
      fill_normal(p->value, rng, 0.0, 1.0);
    }
  }

  std::vector<Parameter<T>*> parameters() { return {&alpha, &beta, &gamma}; }
};

/// Atoms M[k, j, i] = exp(−α[k,j]·t_i²)·cos(β[k,j]·t_i + γ[k,j]·t_i²) from
/// tape nodes α, β, γ of shape [K, d]. Returns [K, d, L].
template <class T>
Var<T> make_atoms(const Var<T>& alpha, const Var<T>& beta, const Var<T>& gamma, std::size_t L) {
  const Shape& s = alpha.shape();
  if (s.size() != 2 || beta.shape() != s || gamma.shape() != s) {
    throw DimensionError("wavelet parameters must share shape [K, d], got " + shape_string(s));
  }
  for (const auto* v : {&alpha, &beta, &gamma}) {
    if (!v->value().all_finite()) throw NumericError("wavelet", "non-finite wavelet parameters");
  }
  Tape<T>& tape = *alpha.tape;
  Tensor<T> t = time_grid<T>(L).reshaped({1, 1, L});
  Tensor<T> t2 = t;
  for (std::size_t i = 0; i < L; ++i) t2[i] = t[i] * t[i];
  const Var<T> tv = tape.constant(std::move(t));
  const Var<T> t2v = tape.constant(std::move(t2));
  const Shape col{s[0], s[1], 1};
  const Var<T> envelope = exp(neg(mul(reshape(alpha, col), t2v)));
  const Var<T> angle = add(mul(reshape(beta, col), tv), mul(reshape(gamma, col), t2v));
  return mul(envelope, cos(angle));
}

template <class T>
Var<T> make_atoms(Tape<T>& tape, WaveletBank<T>& bank) {
  return make_atoms(tape.leaf(bank.alpha), tape.leaf(bank.beta), tape.leaf(bank.gamma), bank.L);
}

/// P[..., k] = E ⊙ M_kᵀ. E: [..., L, d], atoms: [K, d, L] -> [..., K, L, d].
template <class T>
Var<T> project(const Var<T>& E, const Var<T>& atoms) {
  const Shape& se = E.shape();
  const Shape& sa = atoms.shape();
  if (se.size() < 2 || sa.size() != 3 || se[se.size() - 2] != sa[2] || se.back() != sa[1]) {
    throw DimensionError("project: embedding " + shape_string(se) + " does not match atoms " + shape_string(sa));
  }
  return mul(unsqueeze(E, -3), transpose(atoms));
}

/// R = Σ_k O[..., k] ⊙ M_kᵀ. O: [..., K, L, d], atoms: [K, d, L] -> [..., L, d].
template <class T>
Var<T> reconstruct(const Var<T>& O, const Var<T>& atoms) {
  const Shape& so = O.shape();
  const Shape& sa = atoms.shape();
  if (so.size() < 3 || sa.size() != 3 || so[so.size() - 3] != sa[0] || so[so.size() - 2] != sa[2] ||
      so.back() != sa[1]) {
    throw DimensionError("reconstruct: state " + shape_string(so) + " does not match atoms " + shape_string(sa));
  }
  return sum_axis(mul(O, transpose(atoms)), -3);
}

}  // namespace sonnet
