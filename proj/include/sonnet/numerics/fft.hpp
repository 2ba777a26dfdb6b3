#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

namespace sonnet::fft {

// Iterative radix-2 Cooley-Tukey for power-of-two lengths and Bluestein's
// chirp-z reduction for everything else. Forward uses e^{-2πi kn/N};
// the inverse is unnormalized.

/// Complex product without the NaN/Inf recovery of std::complex's operator*.
template <class T>
inline std::complex<T> cmul(std::complex<T> a, std::complex<T> b) noexcept {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

template <class T>
class Plan {
 public:
  explicit Plan(std::size_t n) : n_(n) {
    if (n_ <= 1) return;
    if (std::has_single_bit(n_)) {
      build_radix2(n_, twiddle_, bitrev_);
    } else {
      build_bluestein();
    }
  }

  std::size_t size() const noexcept { return n_; }

  void forward(std::span<std::complex<T>> x) const { run(x, false); }
  void inverse(std::span<std::complex<T>> x) const { run(x, true); }

 private:
  using C = std::complex<T>;

  static void build_radix2(std::size_t n, std::vector<C>& twiddle, std::vector<std::size_t>& bitrev) {
    twiddle.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle[k] = C(static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a)));
    }
    bitrev.resize(n);
    const int bits = std::countr_zero(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      bitrev[i] = r;
    }
  }

  static void radix2(std::span<C> x, const std::vector<C>& twiddle, const std::vector<std::size_t>& bitrev,
                     bool inverse) {
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (i < bitrev[i]) std::swap(x[i], x[bitrev[i]]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          C w = twiddle[j * stride];
          if (inverse) w = std::conj(w);
          const C u = x[start + j];
          const C v = cmul(x[start + j + half], w);
          x[start + j] = u + v;
          x[start + j + half] = u - v;
        }
      }
    }
  }

  void build_bluestein() {
    m_ = std::bit_ceil(2 * n_ - 1);
    build_radix2(m_, m_twiddle_, m_bitrev_);
    chirp_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      // k² mod 2n keeps the angle argument small for large n.
      const auto k2 = static_cast<double>((k * k) % (2 * n_));
      const double a = -std::numbers::pi * k2 / static_cast<double>(n_);
      chirp_[k] = C(static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a)));
    }
    kernel_.assign(m_, C(0));
    kernel_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) {
      kernel_[k] = std::conj(chirp_[k]);
      kernel_[m_ - k] = std::conj(chirp_[k]);
    }
    radix2(kernel_, m_twiddle_, m_bitrev_, false);
  }

  void run(std::span<C> x, bool inverse) const {
    if (n_ <= 1) return;
    if (!chirp_.empty()) {
      bluestein(x, inverse);
      return;
    }
    radix2(x, twiddle_, bitrev_, inverse);
  }

  void bluestein(std::span<C> x, bool inverse) const {
    // The inverse transform is conj(F(conj(x))).
    std::vector<C> a(m_, C(0));
    for (std::size_t k = 0; k < n_; ++k) {
      const C v = inverse ? std::conj(x[k]) : x[k];
      a[k] = cmul(v, chirp_[k]);
    }
    radix2(a, m_twiddle_, m_bitrev_, false);
    for (std::size_t i = 0; i < m_; ++i) a[i] = cmul(a[i], kernel_[i]);
    radix2(a, m_twiddle_, m_bitrev_, true);
    const T scale = T(1) / static_cast<T>(m_);
    for (std::size_t k = 0; k < n_; ++k) {
      const C v = cmul(a[k] * scale, chirp_[k]);
      x[k] = inverse ? std::conj(v) : v;
    }
  }

  std::size_t n_ = 0;
  std::vector<C> twiddle_;
  std::vector<std::size_t> bitrev_;
  std::size_t m_ = 0;
  std::vector<C> m_twiddle_;
  std::vector<std::size_t> m_bitrev_;
  std::vector<C> chirp_;
  std::vector<C> kernel_;
};

/// Per-thread plan cache keyed by length.
template <class T>
const Plan<T>& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Plan<T>>> cache;
  thread_local const Plan<T>* last = nullptr;
  if (last != nullptr && last->size() == n) return *last;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Plan<T>>(n);
  last = slot.get();
  return *slot;
}

/// Number of non-redundant bins of a length-n real transform.
constexpr std::size_t rfft_bins(std::size_t n) noexcept { return n / 2 + 1; }

/// Real forward transform of one row; writes rfft_bins(n) bins.
template <class T>
void rfft_row(std::span<const T> in, std::span<T> out_re, std::span<T> out_im,
              std::vector<std::complex<T>>& scratch) {
  const std::size_t n = in.size();
  scratch.resize(n);
  for (std::size_t i = 0; i < n; ++i) scratch[i] = std::complex<T>(in[i], T(0));
  plan_for<T>(n).forward(scratch);
  for (std::size_t k = 0; k < rfft_bins(n); ++k) {
    out_re[k] = scratch[k].real();
    out_im[k] = scratch[k].imag();
  }
}

/// Adjoint of rfft_row: given bin cotangents (g_re, g_im) accumulates
///   dx_n += Σ_k g_re[k] cos(2πkn/N) − g_im[k] sin(2πkn/N)
/// which is Re(FFT(conj(g) zero-padded to N)).
template <class T>
void rfft_row_adjoint(std::span<const T> g_re, std::span<const T> g_im, std::span<T> dx,
                      std::vector<std::complex<T>>& scratch) {
  const std::size_t n = dx.size();
  const std::size_t bins = rfft_bins(n);
  scratch.assign(n, std::complex<T>(0));
  for (std::size_t k = 0; k < bins; ++k) {
    const T re = g_re.empty() ? T(0) : g_re[k];
    const T im = g_im.empty() ? T(0) : g_im[k];
    scratch[k] = std::complex<T>(re, -im);
  }
  plan_for<T>(n).forward(scratch);
  for (std::size_t i = 0; i < n; ++i) dx[i] += scratch[i].real();
}

}  // namespace sonnet::fft
