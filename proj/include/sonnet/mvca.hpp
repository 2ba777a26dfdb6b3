#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/numerics/init.hpp"
#include "sonnet/numerics/ops.hpp"

namespace sonnet {

inline constexpr double kCoherenceEps = 1e-6;

struct MvcaOptions {
  bool coherence = true;  // false: V passes through unweighted
  bool mlp = true;        // false: O_m = O_r
  double dropout = 0.0;
  double eps = kCoherenceEps;
};

/// Shared projections W_q, W_k, W_v, W_out (d×d) and the residual MLP
/// (two d-wide layers with biases). The MLP is omitted when `with_mlp` is
/// false.
template <class T>
struct MvcaWeights {
  std::size_t d = 0;
  bool with_mlp = true;
  Parameter<T> wq, wk, wv, wout;
  Parameter<T> w1, b1, w2, b2;

  MvcaWeights() = default;
  MvcaWeights(std::size_t width, bool mlp)
      : d(width),
        with_mlp(mlp),
        wq("mvca.W_q", Tensor<T>(Shape{width, width})),
        wk("mvca.W_k", Tensor<T>(Shape{width, width})),
        wv("mvca.W_v", Tensor<T>(Shape{width, width})),
        wout("mvca.W_out", Tensor<T>(Shape{width, width})) {
    if (mlp) {
      w1 = Parameter<T>("mvca.mlp.W1", Tensor<T>(Shape{width, width}));
      b1 = Parameter<T>("mvca.mlp.b1", Tensor<T>(Shape{width}));
      w2 = Parameter<T>("mvca.mlp.W2", Tensor<T>(Shape{width, width}));
      b2 = Parameter<T>("mvca.mlp.b2", Tensor<T>(Shape{width}));
    }
  }

  /// Xavier-uniform matrices, zero biases.
  void init(std::uint64_t init_root) {
    for (auto* p : parameters()) {
      if (p->value.rank() == 2) {
        auto rng = param_rng(init_root, p->name);
        fill_xavier_uniform(p->value, rng, d, d);
      } else {
        p->value.fill(T(0));
      }
    }
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out{&wq, &wk, &wv, &wout};
    if (with_mlp) {
      for (auto* p : {&w1, &b1, &w2, &b2}) out.push_back(p);
    }
    return out;
  }
};

/// Tape handles for one forward pass of MVCA.
template <class T>
struct MvcaVars {
  Var<T> wq, wk, wv, wout;
  Var<T> w1, b1, w2, b2;
  bool with_mlp = false;
};

template <class T>
MvcaVars<T> bind(Tape<T>& tape, MvcaWeights<T>& w) {
  MvcaVars<T> v{tape.leaf(w.wq), tape.leaf(w.wk), tape.leaf(w.wv), tape.leaf(w.wout), {}, {}, {}, {}, w.with_mlp};
  if (w.with_mlp) {
    v.w1 = tape.leaf(w.w1);
    v.b1 = tape.leaf(w.b1);
    v.w2 = tape.leaf(w.w2);
    v.b2 = tape.leaf(w.b2);
  }
  return v;
}

/// Normalized spectral coherence per row: Q, K of shape [..., L, d] give
/// C of shape [..., L] with C = |mean P_qk|² / (mean P_qq · mean P_kk + eps),
/// the means taken over the ⌊d/2⌋+1 frequency bins.
template <class T>
Var<T> spectral_coherence(const Var<T>& Q, const Var<T>& K, double eps = kCoherenceEps) {
  if (Q.shape() != K.shape()) {
    throw DimensionError("coherence: Q " + shape_string(Q.shape()) + " vs K " + shape_string(K.shape()));
  }
  if (!(eps > 0.0)) throw ParameterError("coherence eps must be positive");
  const auto [qr, qi] = rfft_last_axis(Q);
  const auto [kr, ki] = rfft_last_axis(K);
  const Var<T> pqk_re = mean_axis(add(mul(qr, kr), mul(qi, ki)), -1);
  const Var<T> pqk_im = mean_axis(sub(mul(qi, kr), mul(qr, ki)), -1);
  const Var<T> pqq = mean_axis(add(square(qr), square(qi)), -1);
  const Var<T> pkk = mean_axis(add(square(kr), square(ki)), -1);
  const Var<T> num = add(square(pqk_re), square(pqk_im));
  return div(num, add_scalar(mul(pqq, pkk), static_cast<T>(eps)));
}

/// Softmax over the time axis of C/√d.
template <class T>
Var<T> coherence_attention(const Var<T>& C, std::size_t d) {
  return softmax(scale(C, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)))), -1);
}

/// Multivariable coherence attention over wavelet heads.
/// P: [..., K, L, d] -> [..., K, L, d].
template <class T>
Var<T> mvca_forward(const Var<T>& P, const MvcaVars<T>& w, const MvcaOptions& opt, const CounterRng& rng,
                    bool training) {
  const Shape& s = P.shape();
  if (s.size() < 3) throw DimensionError("mvca expects [..., K, L, d], got " + shape_string(s));
  const std::size_t d = s.back();
  if (w.wq.shape() != Shape{d, d}) throw DimensionError("mvca weights do not match feature width " + std::to_string(d));
  if (opt.mlp && !w.with_mlp) throw ConfigError("mvca: MLP requested but weights were built without it");

  const Var<T> V = matmul(P, w.wv);
  Var<T> O_r = V;
  if (opt.coherence) {
    const Var<T> Q = matmul(P, w.wq);
    const Var<T> K = matmul(P, w.wk);
    const Var<T> C = spectral_coherence(Q, K, opt.eps);
    const Var<T> A = dropout(coherence_attention(C, d), opt.dropout, rng, training);
    O_r = mul(unsqueeze(A, -1), V);
  }
  Var<T> O_m = O_r;
  if (opt.mlp) {
    const Var<T> hidden = gelu(add(matmul(O_r, w.w1), w.b1));
    O_m = add(O_r, add(matmul(hidden, w.w2), w.b2));
  }
  return matmul(O_m, w.wout);
}

/// Runs MVCA on a plain [..., u, v] representation by splitting the feature
/// axis into `heads` chunks of width v/heads, and concatenating back.
template <class T>
Var<T> mvca_2d_adapter(const Var<T>& E, std::size_t heads, const MvcaVars<T>& w, const MvcaOptions& opt,
                       const CounterRng& rng, bool training) {
  const Shape& s = E.shape();
  if (s.size() < 2) throw DimensionError("mvca adapter expects [..., u, v], got " + shape_string(s));
  const std::size_t v = s.back();
  if (heads == 0 || v % heads != 0) {
    throw ConfigError("mvca adapter: feature width " + std::to_string(v) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t width = v / heads;
  const std::size_t r = s.size();
  Shape split(s.begin(), s.end() - 1);
  split.push_back(heads);
  split.push_back(width);  // [..., u, heads, width]
  std::vector<std::size_t> to_heads(r + 1);
  for (std::size_t i = 0; i + 2 < r; ++i) to_heads[i] = i;
  to_heads[r - 2] = r - 1;  // heads
  to_heads[r - 1] = r - 2;  // u
  to_heads[r] = r;          // width
  const Var<T> P = permute(reshape(E, split), to_heads);
  const Var<T> O = mvca_forward(P, w, opt, rng, training);  // [..., heads, u, width]
  const Var<T> back = permute(O, to_heads);                   // the swap is its own inverse
  return reshape(back, s);
}

}  // namespace sonnet
