#pragma once

#include <cmath>
#include <cstddef>
#include <utility>

#include "sonnet/numerics/ops.hpp"

namespace sonnet {

/// Complex values stored as separate real and imaginary planes.
template <class T>
struct ComplexTensor {
  Tensor<T> re;
  Tensor<T> im;

  ComplexTensor() = default;
  explicit ComplexTensor(const Shape& shape) : re(shape), im(shape) {}
  ComplexTensor(Tensor<T> r, Tensor<T> i) : re(std::move(r)), im(std::move(i)) {
    if (re.shape() != im.shape()) {
      throw DimensionError("complex planes differ: " + shape_string(re.shape()) + " vs " + shape_string(im.shape()));
    }
  }

  const Shape& shape() const noexcept { return re.shape(); }

  ComplexTensor conj() const {
    ComplexTensor out(re, im);
    for (std::size_t i = 0; i < out.im.size(); ++i) out.im[i] = -out.im[i];
    return out;
  }
};

/// A complex quantity on a tape, as a pair of real nodes.
template <class T>
struct ComplexVar {
  Var<T> re;
  Var<T> im;

  const Shape& shape() const { return re.shape(); }
  ComplexTensor<T> value() const { return ComplexTensor<T>(re.value(), im.value()); }
};

template <class T>
ComplexVar<T> constant(Tape<T>& tape, const ComplexTensor<T>& z) {
  return {tape.constant(z.re), tape.constant(z.im)};
}

/// Real tensor lifted to the complex plane with a zero imaginary part.
template <class T>
ComplexVar<T> lift(const Var<T>& x) {
  return {x, x.tape->constant(Tensor<T>(x.shape()))};
}

template <class T>
ComplexVar<T> cadd(const ComplexVar<T>& a, const ComplexVar<T>& b) {
  return {add(a.re, b.re), add(a.im, b.im)};
}

template <class T>
ComplexVar<T> csub(const ComplexVar<T>& a, const ComplexVar<T>& b) {
  return {sub(a.re, b.re), sub(a.im, b.im)};
}

template <class T>
ComplexVar<T> conj(const ComplexVar<T>& z) {
  return {z.re, neg(z.im)};
}

/// Elementwise (broadcasting) complex product.
template <class T>
ComplexVar<T> cmul(const ComplexVar<T>& a, const ComplexVar<T>& b) {
  return {sub(mul(a.re, b.re), mul(a.im, b.im)), add(mul(a.re, b.im), mul(a.im, b.re))};
}

/// a ⊙ conj(b), without materializing the conjugate.
template <class T>
ComplexVar<T> cmul_conj(const ComplexVar<T>& a, const ComplexVar<T>& b) {
  return {add(mul(a.re, b.re), mul(a.im, b.im)), sub(mul(a.im, b.re), mul(a.re, b.im))};
}

template <class T>
ComplexVar<T> cscale(const ComplexVar<T>& z, T c) {
  return {scale(z.re, c), scale(z.im, c)};
}

/// |z|² as a real tensor.
template <class T>
Var<T> abs2(const ComplexVar<T>& z) {
  return add(square(z.re), square(z.im));
}

template <class T>
ComplexVar<T> cmatmul(const ComplexVar<T>& a, const ComplexVar<T>& b) {
  return {sub(matmul(a.re, b.re), matmul(a.im, b.im)), add(matmul(a.re, b.im), matmul(a.im, b.re))};
}

/// Conjugate transpose of the last two axes.
template <class T>
ComplexVar<T> adjoint(const ComplexVar<T>& z) {
  return {transpose(z.re), neg(transpose(z.im))};
}

template <class T>
ComplexVar<T> csum(const ComplexVar<T>& z) {
  return {sum(z.re), sum(z.im)};
}

/// z/|z| elementwise, with phase 1 where z = 0.
template <class T>
ComplexVar<T> phase(const ComplexVar<T>& z) {
  Tape<T>& t = *z.re.tape;
  const Var<T> magnitude = sqrt(abs2(z));
  const Var<T> inv = safe_reciprocal(magnitude);
  Tensor<T> at_zero(magnitude.shape());
  for (std::size_t i = 0; i < at_zero.size(); ++i) at_zero[i] = magnitude.value()[i] == T(0) ? T(1) : T(0);
  return {add(mul(z.re, inv), t.constant(std::move(at_zero))), mul(z.im, inv)};
}

template <class T>
Tensor<T> identity_matrix(std::size_t n) {
  Tensor<T> eye(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = T(1);
  return eye;
}

template <class T>
struct QrFactors {
  ComplexVar<T> q;
  ComplexVar<T> r;
};

/// Householder QR of a square complex matrix, built entirely from tape
/// primitives so gradients reach `s` through every reflection. The phases
/// are normalized so diag(R) is real and non-negative.
template <class T>
QrFactors<T> qr_householder(const ComplexVar<T>& s) {
  const Shape& sh = s.shape();
  if (sh.size() != 2 || sh[0] != sh[1]) throw DimensionError("qr: expected a square matrix, got " + shape_string(sh));
  if (s.im.shape() != sh) throw DimensionError("qr: real and imaginary planes differ");
  Tape<T>& t = *s.re.tape;
  const std::size_t n = sh[0];

  ComplexVar<T> a = s;
  ComplexVar<T> q{t.constant(identity_matrix<T>(n)), t.constant(Tensor<T>(Shape{n, n}))};

  for (std::size_t j = 0; j + 1 < n; ++j) {
    Tensor<T> ej(Shape{n, 1});
    ej[j] = T(1);
    Tensor<T> below(Shape{n, 1});
    for (std::size_t i = j; i < n; ++i) below[i] = T(1);
    const Var<T> e = t.constant(ej);
    const Var<T> mask = t.constant(below);

    // x: column j restricted to rows j..n-1
    const ComplexVar<T> x{mul(matmul(a.re, e), mask), mul(matmul(a.im, e), mask)};
    const Var<T> norm_x = sqrt(sum(abs2(x)));
    const ComplexVar<T> pivot{sum(mul(x.re, e)), sum(mul(x.im, e))};
    const ComplexVar<T> ph = phase(pivot);
    // v = x + phase(x_j)·‖x‖·e_j, reflecting x onto −phase·‖x‖·e_j
    const ComplexVar<T> v{add(x.re, mul(mul(ph.re, norm_x), e)), add(x.im, mul(mul(ph.im, norm_x), e))};
    const Var<T> inv_norm_v = safe_reciprocal(sqrt(sum(abs2(v))));
    const ComplexVar<T> u{mul(v.re, inv_norm_v), mul(v.im, inv_norm_v)};

    // A ← A − 2u(u†A),  Q ← Q − 2(Qu)u†
    const ComplexVar<T> uh_a = cmatmul(adjoint(u), a);
    a = csub(a, cscale(cmatmul(u, uh_a), T(2)));
    const ComplexVar<T> qu = cmatmul(q, u);
    q = csub(q, cscale(cmatmul(qu, adjoint(u)), T(2)));
  }

  const Var<T> eye = t.constant(identity_matrix<T>(n));
  const ComplexVar<T> diag{sum_axis(mul(a.re, eye), 0, true), sum_axis(mul(a.im, eye), 0, true)};  // [1, n]
  const ComplexVar<T> ph = phase(diag);
  // Q·diag(ph) scales columns; diag(ph)*·R scales rows.
  const ComplexVar<T> q_fixed = cmul(q, ph);
  const ComplexVar<T> ph_col{transpose(ph.re), transpose(ph.im)};
  const ComplexVar<T> r_fixed = cmul(conj(ph_col), a);
  return {q_fixed, r_fixed};
}

/// Unitary factor U of the phase-normalized QR of `s`.
template <class T>
ComplexVar<T> qr_unitary(const ComplexVar<T>& s) {
  return qr_householder(s).q;
}

}  // namespace sonnet
