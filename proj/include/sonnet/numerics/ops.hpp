#pragma once

// Differentiable primitives over Tape/Var. Every op computes its value
// eagerly and, when any input needs a gradient, records a backward closure
// that accumulates vector-Jacobian products into its inputs.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/numerics/fft.hpp"
#include "sonnet/numerics/rng.hpp"
#include "sonnet/numerics/tape.hpp"
#include "sonnet/numerics/tensor.hpp"

namespace sonnet {

namespace detail {

template <class T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape != b.tape) throw Error("operands belong to different tapes");
}

/// NumPy-style right-aligned broadcasting plan for two operands.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
};

inline std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

inline Broadcast make_broadcast(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Broadcast bc;
  bc.out.assign(r, 1);
  bc.stride_a.assign(r, 0);
  bc.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const std::size_t eb = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    bc.out[i] = std::max(ea, eb);
    if (ea != 1) bc.stride_a[i] = sa[i + a.size() - r];
    if (eb != 1) bc.stride_b[i] = sb[i + b.size() - r];
  }
  return bc;
}

/// Calls f(out_index, a_offset, b_offset) for every output element.
template <class F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t r = bc.out.size();
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t n_inner = bc.out[r - 1];
  const std::size_t ia_step = bc.stride_a[r - 1];
  const std::size_t ib_step = bc.stride_b[r - 1];
  const std::size_t total = shape_size(bc.out);
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t base = 0; base < total; base += n_inner) {
    for (std::size_t j = 0; j < n_inner; ++j) f(base + j, oa + j * ia_step, ob + j * ib_step);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      oa += bc.stride_a[d];
      ob += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      oa -= bc.stride_a[d] * bc.out[d];
      ob -= bc.stride_b[d] * bc.out[d];
      idx[d] = 0;
    }
  }
}

template <class T, class Fwd, class Da, class Db>
Var<T> binary(const Var<T>& a, const Var<T>& b, Fwd fwd, Da da, Db db) {
  require_same_tape(a, b);
  Tape<T>& t = *a.tape;
  const auto bc = make_broadcast(a.shape(), b.shape());
  Tensor<T> out(bc.out);
  {
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    T* po = out.data();
    for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = fwd(pa[ia], pb[ib]); });
  }
  const auto ida = a.id;
  const auto idb = b.id;
  return t.record(std::move(out), {a, b}, [bc, ida, idb, da, db](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const T* pa = tp.value(ida).data();
    const T* pb = tp.value(idb).data();
    if (tp.requires_grad(ida)) {
      auto& ga = tp.grad(ida);
      for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { ga[ia] += g[i] * da(pa[ia], pb[ib]); });
    }
    if (tp.requires_grad(idb)) {
      auto& gb = tp.grad(idb);
      for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { gb[ib] += g[i] * db(pa[ia], pb[ib]); });
    }
  });
}

/// Elementwise unary op; `deriv(x, y)` receives input and output values.
template <class T, class Fwd, class Deriv>
Var<T> unary(const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tape<T>& t = *x.tape;
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const auto idx = x.id;
  return t.record(std::move(out), {x}, [idx, deriv](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& xv = tp.value(idx);
    const auto& yv = tp.value(self);
    auto& gx = tp.grad(idx);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

// C[m,p] += A[m,n] B[n,p]
template <class T>
void gemm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m, std::size_t n,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict ci = c + i * p;
    const T* ai = a + i * n;
    for (std::size_t k = 0; k < n; ++k) {
      const T aik = ai[k];
      const T* __restrict bk = b + k * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
}

// C[m,n] += G[m,p] B[n,p]ᵀ
template <class T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t n, std::size_t p) {
  std::vector<T> bt(n * p);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < p; ++j) bt[j * n + k] = b[k * p + j];
  gemm_nn(g, bt.data(), c, m, p, n);
}

// C[n,p] += A[m,n]ᵀ G[m,p]
template <class T>
void gemm_tn(const T* __restrict a, const T* __restrict g, T* __restrict c, std::size_t m, std::size_t n,
             std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * n;
    const T* __restrict gi = g + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const T aik = ai[k];
      T* __restrict ck = c + k * p;
      for (std::size_t j = 0; j < p; ++j) ck[j] += aik * gi[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (broadcasting)

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return detail::binary(
      a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <class T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }

template <class T>
Var<T> scale(const Var<T>& x, T c) {
  return detail::unary(x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <class T>
Var<T> neg(const Var<T>& x) { return scale(x, T(-1)); }

template <class T>
Var<T> add_scalar(const Var<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> exp(const Var<T>& x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> cos(const Var<T>& x) {
  return detail::unary(x, [](T v) { return std::cos(v); }, [](T v, T) { return -std::sin(v); });
}

template <class T>
Var<T> sin(const Var<T>& x) {
  return detail::unary(x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

/// sqrt with the subgradient 0 at the origin.
template <class T>
Var<T> sqrt(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

/// 1/x for x ≠ 0 and 0 at x = 0 (gradient likewise 0 there).
template <class T>
Var<T> safe_reciprocal(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return v != T(0) ? T(1) / v : T(0); },
      [](T v, T) { return v != T(0) ? T(-1) / (v * v) : T(0); });
}

/// Exact GELU: x·Φ(x).
template <class T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
  return detail::unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) { return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v); });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const auto idx = x.id;
  return x.tape->record(std::move(out), {x}, [idx](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(idx);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

/// Inserts a unit axis at `axis` (negative counts from the end of the result).
template <class T>
Var<T> unsqueeze(const Var<T>& x, std::ptrdiff_t axis) {
  Shape s = x.shape();
  const auto r = static_cast<std::ptrdiff_t>(s.size()) + 1;
  const auto a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("unsqueeze axis out of range");
  s.insert(s.begin() + a, 1);
  return reshape(x, std::move(s));
}

/// Generic axis permutation: out.shape[i] = in.shape[axes[i]].
template <class T>
Var<T> permute(const Var<T>& x, std::vector<std::size_t> axes) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  if (axes.size() != r) throw DimensionError("permute: axes rank mismatch");
  std::vector<bool> seen(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || seen[axes[i]]) throw DimensionError("permute: invalid axes");
    seen[axes[i]] = true;
    out_shape[i] = in[axes[i]];
  }
  const auto in_strides = detail::contiguous_strides(in);
  // stride in the input for each output axis
  std::vector<std::size_t> st(r);
  for (std::size_t i = 0; i < r; ++i) st[i] = in_strides[axes[i]];
  std::vector<std::size_t> map(shape_size(out_shape));
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < map.size(); ++o) {
      map[o] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += st[d];
        if (idx[d] < out_shape[d]) break;
        off -= st[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  const auto& xv = x.value();
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < map.size(); ++o) out[o] = xv[map[o]];
  const auto idx = x.id;
  return x.tape->record(std::move(out), {x}, [idx, map = std::move(map)](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(idx);
    for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += g[o];
  });
}

/// Swaps the last two axes.
template <class T>
Var<T> transpose(const Var<T>& x) {
  const std::size_t r = x.rank();
  if (r < 2) throw DimensionError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(r);
  for (std::size_t i = 0; i < r; ++i) axes[i] = i;
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(x, std::move(axes));
}

/// Concatenation along `axis`.
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  Tape<T>& t = *parts.front().tape;
  const std::size_t r = parts.front().rank();
  const std::size_t ax = Tensor<T>::normalize_axis(axis, r);
  Shape out_shape = parts.front().shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.tape != &t) throw Error("concat: operands belong to different tapes");
    const auto& s = p.shape();
    if (s.size() != r) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < r; ++i) {
      if (i != ax && s[i] != parts.front().shape()[i]) {
        throw DimensionError("concat: extent mismatch " + shape_string(s) + " vs " + shape_string(parts.front().shape()));
      }
    }
    out_shape[ax] += s[ax];
  }
  const auto outer = split_at(out_shape, ax);
  Tensor<T> out(out_shape);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  std::size_t col = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    const std::size_t w = p.shape()[ax] * outer.inner;
    for (std::size_t o = 0; o < outer.outer; ++o) {
      std::copy_n(v.data() + o * w, w, out.data() + o * outer.n * outer.inner + col);
    }
    col += w;
    ids.push_back(p.id);
    widths.push_back(w);
  }
  const std::size_t row = outer.n * outer.inner;
  const std::size_t n_outer = outer.outer;
  // Any part that needs a gradient makes the output need one.
  Var<T> anchor = parts.front();
  for (const auto& p : parts) {
    if (p.requires_grad()) anchor = p;
  }
  return t.record(std::move(out), {anchor}, [ids, widths, row, n_outer](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    std::size_t c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        auto& gk = tp.grad(ids[k]);
        for (std::size_t o = 0; o < n_outer; ++o) {
          for (std::size_t j = 0; j < widths[k]; ++j) gk[o * widths[k] + j] += g[o * row + c + j];
        }
      }
      c += widths[k];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(const Var<T>& x) {
  const auto& xv = x.value();
  T s = T(0);
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  const auto idx = x.id;
  return x.tape->record(Tensor<T>::scalar(s), {x}, [idx](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad(self)[0];
    auto& gx = tp.grad(idx);
    for (auto& v : gx) v += g;
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

/// Sum over one axis; keepdim retains it with extent 1.
template <class T>
Var<T> sum_axis(const Var<T>& x, std::ptrdiff_t axis, bool keepdim = false) {
  const std::size_t ax = Tensor<T>::normalize_axis(axis, x.rank());
  const auto sp = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t k = 0; k < sp.n; ++k) {
      const T* src = xv.data() + (o * sp.n + k) * sp.inner;
      T* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  const auto idx = x.id;
  return x.tape->record(std::move(out), {x}, [idx, sp](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(idx);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t k = 0; k < sp.n; ++k) {
        T* dst = gx.data() + (o * sp.n + k) * sp.inner;
        const T* src = g.data() + o * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

template <class T>
Var<T> mean_axis(const Var<T>& x, std::ptrdiff_t axis, bool keepdim = false) {
  const T n = static_cast<T>(x.extent(axis));
  return scale(sum_axis(x, axis, keepdim), T(1) / n);
}

/// Numerically stable softmax along `axis`.
template <class T>
Var<T> softmax(const Var<T>& x, std::ptrdiff_t axis = -1) {
  const std::size_t ax = Tensor<T>::normalize_axis(axis, x.rank());
  const auto sp = split_at(x.shape(), ax);
  const auto& xv = x.value();
  Tensor<T> out(x.shape());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      T mx = xv[base];
      for (std::size_t k = 1; k < sp.n; ++k) mx = std::max(mx, xv[base + k * sp.inner]);
      T z = T(0);
      for (std::size_t k = 0; k < sp.n; ++k) {
        const T e = std::exp(xv[base + k * sp.inner] - mx);
        out[base + k * sp.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < sp.n; ++k) out[base + k * sp.inner] /= z;
    }
  }
  const auto idx = x.id;
  return x.tape->record(std::move(out), {x}, [idx, sp](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& y = tp.value(self);
    auto& gx = tp.grad(idx);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.n * sp.inner + i;
        T dot = T(0);
        for (std::size_t k = 0; k < sp.n; ++k) dot += g[base + k * sp.inner] * y[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.n; ++k) {
          const std::size_t j = base + k * sp.inner;
          gx[j] += y[j] * (g[j] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Matrix product over the last two axes. Leading axes are batch axes; one
/// operand may be a plain matrix shared across the other's batch.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) throw DimensionError("matmul needs rank >= 2 operands");
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t n = sa.back();
  const std::size_t p = sb.back();
  if (sb[sb.size() - 2] != n) {
    throw DimensionError("matmul inner extents differ: " + shape_string(sa) + " x " + shape_string(sb));
  }
  const Shape lead_a(sa.begin(), sa.end() - 2);
  const Shape lead_b(sb.begin(), sb.end() - 2);
  const std::size_t batch_a = shape_size(lead_a);
  const std::size_t batch_b = shape_size(lead_b);
  Shape out_shape;
  std::size_t batch = 1;
  if (lead_b.empty()) {
    out_shape = lead_a;
    batch = batch_a;
  } else if (lead_a.empty()) {
    out_shape = lead_b;
    batch = batch_b;
  } else if (lead_a == lead_b) {
    out_shape = lead_a;
    batch = batch_a;
  } else {
    throw DimensionError("matmul batch extents differ: " + shape_string(sa) + " x " + shape_string(sb));
  }
  out_shape.push_back(m);
  out_shape.push_back(p);
  const bool shared_b = lead_b.empty();
  const bool shared_a = lead_a.empty() && !lead_b.empty();
  Tensor<T> out(out_shape);
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  if (shared_b) {
    // Fold a's batch into its rows.
    detail::gemm_nn(pa, pb, out.data(), batch * m, n, p);
  } else {
    for (std::size_t k = 0; k < batch; ++k) {
      detail::gemm_nn(pa + (shared_a ? 0 : k * m * n), pb + k * n * p, out.data() + k * m * p, m, n, p);
    }
  }
  const auto ida = a.id;
  const auto idb = b.id;
  return a.tape->record(std::move(out), {a, b},
                        [ida, idb, m, n, p, batch, shared_a, shared_b](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.grad(self);
                          const T* pa = tp.value(ida).data();
                          const T* pb = tp.value(idb).data();
                          if (tp.requires_grad(ida)) {
                            auto& ga = tp.grad(ida);
                            if (shared_b) {
                              detail::gemm_nt(g.data(), pb, ga.data(), batch * m, n, p);
                            } else {
                              for (std::size_t k = 0; k < batch; ++k) {
                                detail::gemm_nt(g.data() + k * m * p, pb + k * n * p,
                                                ga.data() + (shared_a ? 0 : k * m * n), m, n, p);
                              }
                            }
                          }
                          if (tp.requires_grad(idb)) {
                            auto& gb = tp.grad(idb);
                            if (shared_b) {
                              detail::gemm_tn(pa, g.data(), gb.data(), batch * m, n, p);
                            } else {
                              for (std::size_t k = 0; k < batch; ++k) {
                                detail::gemm_tn(pa + (shared_a ? 0 : k * m * n), g.data() + k * m * p,
                                                gb.data() + k * n * p, m, n, p);
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Regularization and convolution

/// Inverted dropout. Returns `x` itself when not training or rate is 0.
/// The keep mask is a pure function of (rng key, element index).
template <class T>
Var<T> dropout(const Var<T>& x, double rate, const CounterRng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const auto& xv = x.value();
  std::vector<T> mask(xv.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform(i) >= rate ? keep_scale : T(0);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = xv[i] * mask[i];
  const auto idx = x.id;
  return x.tape->record(std::move(out), {x}, [idx, mask = std::move(mask)](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(idx);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

/// 1-D convolution (cross-correlation, stride 1) with symmetric zero padding.
/// x: [B, Cin, T], kernel: [Cout, Cin, k], bias: [Cout] -> [B, Cout, T + 2p - k + 1].
template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& kernel, const Var<T>& bias, std::size_t padding) {
  detail::require_same_tape(x, kernel);
  detail::require_same_tape(x, bias);
  const Shape& sx = x.shape();
  const Shape& sk = kernel.shape();
  if (sx.size() != 3 || sk.size() != 3) throw DimensionError("conv1d expects x [B,C,T] and kernel [O,C,k]");
  const std::size_t nb = sx[0], cin = sx[1], len = sx[2];
  const std::size_t cout = sk[0], ksz = sk[2];
  if (sk[1] != cin) throw DimensionError("conv1d channel mismatch: " + shape_string(sx) + " vs " + shape_string(sk));
  if (bias.shape() != Shape{cout}) throw DimensionError("conv1d bias must have shape [Cout]");
  if (len + 2 * padding < ksz) throw DimensionError("conv1d kernel longer than padded input");
  const std::size_t lo = len + 2 * padding - ksz + 1;
  Tensor<T> out(Shape{nb, cout, lo});
  const T* px = x.value().data();
  const T* pk = kernel.value().data();
  const T* pbias = bias.value().data();
  // Tap j touches outputs t in [t_begin(j), t_end(j)), reading input t + j - padding.
  auto t_begin = [padding](std::size_t j) { return j < padding ? padding - j : std::size_t{0}; };
  auto t_end = [len, padding, lo](std::size_t j) {
    const std::size_t limit = len + padding > j ? len + padding - j : 0;
    return std::min(lo, limit);
  };
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      T* __restrict dst = out.data() + (b * cout + o) * lo;
      for (std::size_t t = 0; t < lo; ++t) dst[t] = pbias[o];
      for (std::size_t c = 0; c < cin; ++c) {
        const T* __restrict src = px + (b * cin + c) * len;
        const T* w = pk + (o * cin + c) * ksz;
        for (std::size_t j = 0; j < ksz; ++j) {
          const T wj = w[j];
          for (std::size_t t = t_begin(j), e = t_end(j); t < e; ++t) dst[t] += wj * src[t + j - padding];
        }
      }
    }
  }
  const auto idx = x.id, idk = kernel.id, idb = bias.id;
  return x.tape->record(std::move(out), {x, kernel, bias},
                        [=](Tape<T>& tp, std::size_t self) {
                          const auto& g = tp.grad(self);
                          const T* px = tp.value(idx).data();
                          const T* pk = tp.value(idk).data();
                          const bool gx_on = tp.requires_grad(idx);
                          const bool gk_on = tp.requires_grad(idk);
                          T* gx = gx_on ? tp.grad(idx).data() : nullptr;
                          T* gk = gk_on ? tp.grad(idk).data() : nullptr;
                          if (tp.requires_grad(idb)) {
                            auto& gb = tp.grad(idb);
                            for (std::size_t b = 0; b < nb; ++b) {
                              for (std::size_t o = 0; o < cout; ++o) {
                                const T* go = g.data() + (b * cout + o) * lo;
                                for (std::size_t t = 0; t < lo; ++t) gb[o] += go[t];
                              }
                            }
                          }
                          for (std::size_t b = 0; b < nb; ++b) {
                            for (std::size_t o = 0; o < cout; ++o) {
                              const T* __restrict go = g.data() + (b * cout + o) * lo;
                              for (std::size_t c = 0; c < cin; ++c) {
                                const std::size_t xoff = (b * cin + c) * len;
                                const std::size_t koff = (o * cin + c) * ksz;
                                for (std::size_t j = 0; j < ksz; ++j) {
                                  const std::size_t tb = t_begin(j), te = t_end(j);
                                  if (gx_on) {
                                    T* __restrict gxs = gx + xoff;
                                    const T wj = pk[koff + j];
                                    for (std::size_t t = tb; t < te; ++t) gxs[t + j - padding] += go[t] * wj;
                                  }
                                  if (gk_on) {
                                    const T* __restrict xs = px + xoff;
                                    T acc = T(0);
                                    for (std::size_t t = tb; t < te; ++t) acc += go[t] * xs[t + j - padding];
                                    gk[koff + j] += acc;
                                  }
                                }
                              }
                            }
                          }
                        });
}

/// Adaptive average pooling of the last axis to `target` bins; bin i covers
/// [floor(i·n/target), ceil((i+1)·n/target)).
template <class T>
Var<T> adaptive_avg_pool(const Var<T>& x, std::size_t target) {
  if (target == 0) throw DimensionError("adaptive_avg_pool target must be positive");
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("adaptive_avg_pool needs rank >= 1");
  const std::size_t n = s.back();
  const std::size_t rows = x.value().size() / n;
  std::vector<std::size_t> lo(target), hi(target);
  for (std::size_t i = 0; i < target; ++i) {
    lo[i] = (i * n) / target;
    hi[i] = ((i + 1) * n + target - 1) / target;
  }
  Shape out_shape = s;
  out_shape.back() = target;
  Tensor<T> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < target; ++i) {
      T acc = T(0);
      for (std::size_t j = lo[i]; j < hi[i]; ++j) acc += xv[r * n + j];
      out[r * target + i] = acc / static_cast<T>(hi[i] - lo[i]);
    }
  }
  const auto idx = x.id;
  return x.tape->record(std::move(out), {x}, [=](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad(idx);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < target; ++i) {
        const T gi = g[r * target + i] / static_cast<T>(hi[i] - lo[i]);
        for (std::size_t j = lo[i]; j < hi[i]; ++j) gx[r * n + j] += gi;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Spectral

/// Real FFT along the last axis: [..., d] -> ([..., ⌊d/2⌋+1] real, imaginary).
template <class T>
std::pair<Var<T>, Var<T>> rfft_last_axis(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("rfft_last_axis needs rank >= 1");
  const std::size_t d = s.back();
  const std::size_t bins = fft::rfft_bins(d);
  const std::size_t rows = x.value().size() / d;
  Shape out_shape = s;
  out_shape.back() = bins;
  Tensor<T> re(out_shape), im(out_shape);
  std::vector<std::complex<T>> scratch;
  const T* px = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    fft::rfft_row<T>(std::span<const T>(px + r * d, d), std::span<T>(re.data() + r * bins, bins),
                     std::span<T>(im.data() + r * bins, bins), scratch);
  }
  const auto idx = x.id;
  auto make_backward = [idx, d, bins, rows](bool imag_part) {
    return [idx, d, bins, rows, imag_part](Tape<T>& tp, std::size_t self) {
      const auto& g = tp.grad(self);
      auto& gx = tp.grad(idx);
      std::vector<std::complex<T>> scratch;
      for (std::size_t r = 0; r < rows; ++r) {
        const std::span<const T> gr(g.data() + r * bins, bins);
        const std::span<T> dx(gx.data() + r * d, d);
        if (imag_part) {
          fft::rfft_row_adjoint<T>({}, gr, dx, scratch);
        } else {
          fft::rfft_row_adjoint<T>(gr, {}, dx, scratch);
        }
      }
    };
  };
  Var<T> vre = x.tape->record(std::move(re), {x}, make_backward(false));
  Var<T> vim = x.tape->record(std::move(im), {x}, make_backward(true));
  return {vre, vim};
}

// ---------------------------------------------------------------------------
// Losses

template <class T>
Var<T> mse(const Var<T>& pred, const Var<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse shape mismatch: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  }
  return mean(square(sub(pred, target)));
}

/// Throws NumericError naming `layer` when any value is non-finite.
template <class T>
const Var<T>& check_finite(const Var<T>& x, const std::string& layer) {
  if (!x.value().all_finite()) throw NumericError(layer, "non-finite values produced by layer '" + layer + "'");
  return x;
}

}  // namespace sonnet
