#pragma once

// Independent reference implementations used only by the tests. Nothing in
// here calls into the library's FFT, matmul or model code.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace oracle {

using cd = std::complex<double>;

/// Direct O(d²) DFT of a real row, first ⌊d/2⌋+1 bins.
inline std::vector<cd> naive_rdft(const std::vector<double>& x) {
  const std::size_t d = x.size();
  std::vector<cd> out(d / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    cd acc = 0;
    for (std::size_t n = 0; n < d; ++n) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k * n) / static_cast<double>(d);
      acc += x[n] * cd(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

/// Row-major triple-loop product.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                        std::size_t n, std::size_t p) {
  std::vector<double> c(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += a[i * n + k] * b[k * p + j];
      c[i * p + j] = s;
    }
  return c;
}

using CMatrix = std::vector<std::vector<cd>>;

inline CMatrix cmat_mul(const CMatrix& a, const CMatrix& b) {
  const std::size_t m = a.size(), n = b.size(), p = b[0].size();
  CMatrix c(m, std::vector<cd>(p, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k < n; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

/// Coherence per row of Q/K ([L][d]) straight from the formula using the
/// direct DFT.
inline std::vector<double> naive_coherence(const std::vector<std::vector<double>>& q,
                                           const std::vector<std::vector<double>>& k, double eps) {
  std::vector<double> c(q.size());
  for (std::size_t t = 0; t < q.size(); ++t) {
    const auto qf = naive_rdft(q[t]);
    const auto kf = naive_rdft(k[t]);
    cd pqk = 0;
    double pqq = 0, pkk = 0;
    for (std::size_t b = 0; b < qf.size(); ++b) {
      pqk += qf[b] * std::conj(kf[b]);
      pqq += std::norm(qf[b]);
      pkk += std::norm(kf[b]);
    }
    const double nb = static_cast<double>(qf.size());
    pqk /= nb;
    pqq /= nb;
    pkk /= nb;
    c[t] = std::norm(pqk) / (pqq * pkk + eps);
  }
  return c;
}

/// Exact GELU via the error function.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// Direct zero-padded 1-D convolution of one batch item.
/// x[c][t], w[o][c][j], bias[o] -> out[o][t]
inline std::vector<std::vector<double>> naive_conv1d(const std::vector<std::vector<double>>& x,
                                                     const std::vector<std::vector<std::vector<double>>>& w,
                                                     const std::vector<double>& bias, int pad) {
  const int len = static_cast<int>(x[0].size());
  const int k = static_cast<int>(w[0][0].size());
  const int lo = len + 2 * pad - k + 1;
  std::vector<std::vector<double>> out(w.size(), std::vector<double>(lo, 0.0));
  for (std::size_t o = 0; o < w.size(); ++o)
    for (int t = 0; t < lo; ++t) {
      double s = bias[o];
      for (std::size_t c = 0; c < x.size(); ++c)
        for (int j = 0; j < k; ++j) {
          const int src = t + j - pad;
          if (src >= 0 && src < len) s += w[o][c][j] * x[c][src];
        }
      out[o][t] = s;
    }
  return out;
}

/// PyTorch-style adaptive average pooling of one row.
inline std::vector<double> naive_adaptive_pool(const std::vector<double>& x, std::size_t target) {
  const std::size_t n = x.size();
  std::vector<double> out(target);
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t lo = static_cast<std::size_t>(std::floor(static_cast<double>(i * n) / target));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(static_cast<double>((i + 1) * n) / target));
    double s = 0;
    for (std::size_t j = lo; j < hi; ++j) s += x[j];
    out[i] = s / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace oracle
