#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/numerics/complex.hpp"
#include "sonnet/numerics/init.hpp"

namespace sonnet {

/// Learnable seed matrix S (K×K complex) and phase vector p (length K).
template <class T>
struct KoopmanParams {
  std::size_t K = 0;
  Parameter<T> s_re;
  Parameter<T> s_im;
  Parameter<T> phase;

  KoopmanParams() = default;
  explicit KoopmanParams(std::size_t k)
      : K(k),
        s_re("koopman.S_re", Tensor<T>(Shape{k, k})),
        s_im("koopman.S_im", Tensor<T>(Shape{k, k})),
        phase("koopman.p", Tensor<T>(Shape{k})) {}

  /// Re S, Im S ~ N(0, 1/K); p = 0.
  void init(std::uint64_t init_root) {
    const double sd = std::sqrt(1.0 / static_cast<double>(K));
    for (auto* p : {&s_re, &s_im}) {
      auto rng = param_rng(init_root, p->name);
      fill_normal(p->value, rng, 0.0, sd);
    }
    phase.value.fill(T(0));
  }

  /// S = I, p = 0, which makes the operator the identity.
  void set_identity() {
    s_re.value = identity_matrix<T>(K);
    s_im.value.fill(T(0));
    phase.value.fill(T(0));
  }

  std::vector<Parameter<T>*> parameters() { return {&s_re, &s_im, &phase}; }
};

/// K_op = U·diag(e^{i p})·U† with U the unitary QR factor of S.
template <class T>
ComplexVar<T> build_operator(const ComplexVar<T>& s, const Var<T>& p) {
  const Shape& sh = s.shape();
  if (sh.size() != 2 || sh[0] != sh[1]) throw DimensionError("koopman: S must be square, got " + shape_string(sh));
  if (p.shape() != Shape{sh[0]}) throw DimensionError("koopman: phase vector must have length " + std::to_string(sh[0]));
  if (!s.re.value().all_finite() || !s.im.value().all_finite() || !p.value().all_finite()) {
    throw NumericError("koopman", "non-finite Koopman parameters");
  }
  const ComplexVar<T> U = qr_unitary(s);
  const Shape row{1, sh[0]};
  const ComplexVar<T> v{reshape(cos(p), row), reshape(sin(p), row)};
  // U·D scales column k of U by v_k.
  return cmatmul(cmul(U, v), adjoint(U));
}

template <class T>
ComplexVar<T> build_operator(Tape<T>& tape, KoopmanParams<T>& params) {
  return build_operator(ComplexVar<T>{tape.leaf(params.s_re), tape.leaf(params.s_im)}, tape.leaf(params.phase));
}

/// O_l = K_op · O_c with O lifted to the complex plane and viewed as
/// [..., K, L·d]. O: [..., K, L, d] real -> complex of the same shape.
template <class T>
ComplexVar<T> evolve(const Var<T>& O, const ComplexVar<T>& op) {
  const Shape& s = O.shape();
  if (s.size() < 3) throw DimensionError("evolve expects [..., K, L, d], got " + shape_string(s));
  const std::size_t K = s[s.size() - 3];
  if (op.shape() != Shape{K, K}) {
    throw DimensionError("evolve: operator " + shape_string(op.shape()) + " does not act on " + std::to_string(K) +
                         " atoms");
  }
  Shape flat(s.begin(), s.end() - 2);
  flat.push_back(s[s.size() - 2] * s.back());
  const Var<T> oc = reshape(O, flat);
  // Im(O_c) = 0, so the product splits into two real products.
  return {reshape(matmul(op.re, oc), s), reshape(matmul(op.im, oc), s)};
}

}  // namespace sonnet
