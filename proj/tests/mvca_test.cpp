#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sonnet/mvca.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace sonnet;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& g, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(g);
  return t;
}

std::vector<std::vector<double>> rows(const Tensor<double>& t, std::size_t offset, std::size_t L, std::size_t d) {
  std::vector<std::vector<double>> out(L, std::vector<double>(d));
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i][j] = t[offset + i * d + j];
  return out;
}

MvcaWeights<double> random_weights(std::size_t d, std::uint64_t seed, bool mlp = true) {
  MvcaWeights<double> w(d, mlp);
  w.init(seed);
  if (mlp) {
    std::mt19937_64 g(seed);
    w.b1.value = random_tensor({d}, g, -0.2, 0.2);
    w.b2.value = random_tensor({d}, g, -0.2, 0.2);
  }
  return w;
}

// Reference pipeline for one head built from the test oracles only.
std::vector<std::vector<double>> reference_head(const std::vector<std::vector<double>>& P, MvcaWeights<double>& w,
                                                bool coherence, bool mlp) {
  const std::size_t L = P.size(), d = P[0].size();
  auto proj = [&](const Tensor<double>& W) {
    std::vector<double> flat;
    for (const auto& r : P) flat.insert(flat.end(), r.begin(), r.end());
    auto out = oracle::naive_matmul(flat, W.storage(), L, d, d);
    std::vector<std::vector<double>> res(L, std::vector<double>(d));
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < d; ++j) res[i][j] = out[i * d + j];
    return res;
  };
  auto V = proj(w.wv.value);
  auto O = V;
  if (coherence) {
    auto C = oracle::naive_coherence(proj(w.wq.value), proj(w.wk.value), kCoherenceEps);
    double mx = -1e300;
    for (double c : C) mx = std::max(mx, c / std::sqrt(double(d)));
    std::vector<double> a(L);
    double z = 0;
    for (std::size_t i = 0; i < L; ++i) z += a[i] = std::exp(C[i] / std::sqrt(double(d)) - mx);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < d; ++j) O[i][j] = a[i] / z * V[i][j];
  }
  auto mat = [&](const std::vector<std::vector<double>>& X, const Tensor<double>& W) {
    std::vector<std::vector<double>> r(L, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = 0; k < d; ++k) r[i][j] += X[i][k] * W[k * d + j];
    return r;
  };
  if (mlp) {
    auto h = mat(O, w.w1.value);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < d; ++j) h[i][j] = oracle::gelu(h[i][j] + w.b1.value[j]);
    auto h2 = mat(h, w.w2.value);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < d; ++j) O[i][j] += h2[i][j] + w.b2.value[j];
  }
  return mat(O, w.wout.value);
}

}  // namespace

TEST(Coherence, SelfCoherenceNearOne) {
  std::mt19937_64 g(1);
  Tape<double> t;
  auto q = random_tensor({4, 8}, g, -3, 3);
  auto c = spectral_coherence(t.constant(q), t.constant(q)).value();
  auto [re, im] = rfft_last_axis(t.constant(q));
  for (std::size_t r = 0; r < 4; ++r) {
    double m = 0;
    for (std::size_t b = 0; b < 5; ++b) m += re.value()[r * 5 + b] * re.value()[r * 5 + b] +
                                             im.value()[r * 5 + b] * im.value()[r * 5 + b];
    m /= 5;
    EXPECT_NEAR(c[r], m * m / (m * m + kCoherenceEps), 1e-12);
    EXPECT_GT(c[r], 0.999);
  }
}

TEST(Coherence, ZeroRowGivesZero) {
  std::mt19937_64 g(2);
  Tape<double> t;
  auto q = random_tensor({3, 6}, g);
  auto k = random_tensor({3, 6}, g);
  for (std::size_t j = 0; j < 6; ++j) q[6 + j] = 0.0;
  auto c = spectral_coherence(t.constant(q), t.constant(k)).value();
  EXPECT_EQ(c[1], 0.0);
}

TEST(Coherence, MatchesNaiveDftPipeline) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<double> t;
    auto q = random_tensor({4, 8}, g);
    auto k = random_tensor({4, 8}, g);
    auto c = spectral_coherence(t.constant(q), t.constant(k)).value();
    auto ref = oracle::naive_coherence(rows(q, 0, 4, 8), rows(k, 0, 4, 8), kCoherenceEps);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(c[i], ref[i], 1e-10);
  }
}

TEST(Coherence, BoundedInUnitInterval) {
  std::mt19937_64 g(4);
  std::uniform_int_distribution<std::size_t> dim(1, 16);
  for (int trial = 0; trial < 2000; ++trial) {
    Tape<double> t(false);
    const std::size_t L = dim(g), d = dim(g);
    auto q = random_tensor({L, d}, g, -5, 5);
    auto k = trial % 3 == 0 ? q : random_tensor({L, d}, g, -5, 5);
    auto c = spectral_coherence(t.constant(q), t.constant(k)).value();
    for (std::size_t i = 0; i < L; ++i) {
      ASSERT_GE(c[i], 0.0);
      ASSERT_LT(c[i], 1.0);
    }
  }
}

TEST(Coherence, JointRowPermutationPermutesOutput) {
  std::mt19937_64 g(5);
  Tape<double> t;
  auto q = random_tensor({5, 6}, g);
  auto k = random_tensor({5, 6}, g);
  const std::size_t perm[] = {3, 0, 4, 1, 2};
  Tensor<double> qp({5, 6}), kp({5, 6});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      qp[i * 6 + j] = q[perm[i] * 6 + j];
      kp[i * 6 + j] = k[perm[i] * 6 + j];
    }
  auto c = spectral_coherence(t.constant(q), t.constant(k)).value();
  auto cp = spectral_coherence(t.constant(qp), t.constant(kp)).value();
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(cp[i], c[perm[i]]);
}

TEST(Coherence, ShapeMismatchThrows) {
  Tape<double> t;
  EXPECT_THROW(spectral_coherence(t.constant(Tensor<double>({2, 4})), t.constant(Tensor<double>({2, 5}))),
               DimensionError);
}

TEST(Mvca, AttentionSumsToOneOverTime) {
  std::mt19937_64 g(6);
  Tape<double> t;
  auto C = t.constant(random_tensor({3, 7}, g, 0, 1));
  auto A = coherence_attention(C, 8).value();
  for (std::size_t h = 0; h < 3; ++h) {
    double s = 0;
    for (std::size_t i = 0; i < 7; ++i) s += A[h * 7 + i];
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
}

TEST(Mvca, ZeroValuePathGivesZero) {
  std::mt19937_64 g(7);
  auto w = random_weights(8, 1);
  w.wv.value.fill(0.0);
  w.b1.value.fill(0.0);
  w.b2.value.fill(0.0);
  Tape<double> t;
  auto out = mvca_forward(t.constant(random_tensor({2, 4, 8}, g)), bind(t, w), {}, CounterRng(), false).value();
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], 0.0);
}

TEST(Mvca, MatchesReferencePipeline) {
  std::mt19937_64 g(8);
  auto w = random_weights(8, 2);
  const std::size_t K = 2, L = 4, d = 8;
  auto P = random_tensor({K, L, d}, g);
  for (bool coherence : {true, false}) {
    for (bool mlp : {true, false}) {
      Tape<double> t;
      MvcaOptions opt;
      opt.coherence = coherence;
      opt.mlp = mlp;
      auto out = mvca_forward(t.constant(P), bind(t, w), opt, CounterRng(), false).value();
      for (std::size_t k = 0; k < K; ++k) {
        auto ref = reference_head(rows(P, k * L * d, L, d), w, coherence, mlp);
        for (std::size_t i = 0; i < L; ++i)
          for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(out[(k * L + i) * d + j], ref[i][j], 1e-12);
      }
    }
  }
}

TEST(Mvca, NoMlpLeavesResidualUntouched) {
  std::mt19937_64 g(9);
  auto full = random_weights(6, 3);
  auto bare = random_weights(6, 3, false);
  auto P = random_tensor({3, 5, 6}, g);
  full.w1.value.fill(0.0);
  full.w2.value.fill(0.0);
  full.b1.value.fill(0.0);
  full.b2.value.fill(0.0);
  Tape<double> t;
  MvcaOptions no_mlp;
  no_mlp.mlp = false;
  auto a = mvca_forward(t.constant(P), bind(t, full), {}, CounterRng(), false).value();
  auto b = mvca_forward(t.constant(P), bind(t, bare), no_mlp, CounterRng(), false).value();
  EXPECT_EQ(a, b);
}

TEST(Mvca, MlpRequestedWithoutWeightsThrows) {
  auto bare = random_weights(4, 3, false);
  Tape<double> t;
  EXPECT_THROW(mvca_forward(t.constant(Tensor<double>({1, 2, 4})), bind(t, bare), {}, CounterRng(), false),
               ConfigError);
}

TEST(Mvca, DropoutAppliesOnlyWhenTraining) {
  std::mt19937_64 g(10);
  auto w = random_weights(4, 4);
  auto P = random_tensor({2, 6, 4}, g);
  MvcaOptions opt;
  opt.dropout = 0.5;
  Tape<double> t;
  auto eval = mvca_forward(t.constant(P), bind(t, w), opt, CounterRng(1, 1, 1), false).value();
  opt.dropout = 0.0;
  auto plain = mvca_forward(t.constant(P), bind(t, w), opt, CounterRng(1, 1, 1), true).value();
  EXPECT_EQ(eval, plain);
  opt.dropout = 0.5;
  auto a = mvca_forward(t.constant(P), bind(t, w), opt, CounterRng(1, 1, 1), true).value();
  auto b = mvca_forward(t.constant(P), bind(t, w), opt, CounterRng(1, 1, 1), true).value();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, eval);
}

TEST(Mvca, GradientsMatchFiniteDifferences) {
  std::mt19937_64 g(11);
  auto w = random_weights(4, 5);
  Parameter<double> P("P", random_tensor({2, 5, 4}, g));
  auto target = random_tensor({2, 5, 4}, g);
  auto params = w.parameters();
  params.push_back(&P);
  MvcaOptions opt;
  opt.dropout = 0.3;
  auto rep = testing_support::check_gradients(params, [&](Tape<double>& t) {
    auto out = mvca_forward(t.leaf(P), bind(t, w), opt, CounterRng(9, 1, 2), true);
    return sum(square(sub(out, t.constant(target))));
  });
  for (const auto& e : rep.entries) EXPECT_LT(e.rel_error, 1e-6) << e.name;
}

TEST(Adapter, SingleHeadEqualsDirectCall) {
  std::mt19937_64 g(12);
  auto w = random_weights(6, 6);
  auto E = random_tensor({5, 6}, g);
  Tape<double> t;
  auto vars = bind(t, w);
  auto a = mvca_2d_adapter(t.constant(E), 1, vars, {}, CounterRng(), false).value();
  auto b = mvca_forward(t.constant(E.reshaped({1, 5, 6})), vars, {}, CounterRng(), false).value();
  EXPECT_EQ(a.storage(), b.storage());
}

TEST(Adapter, EightHeadsOfWidthTwo) {
  std::mt19937_64 g(13);
  auto w = random_weights(2, 7);
  auto E = random_tensor({6, 16}, g);
  Tape<double> t;
  auto vars = bind(t, w);
  auto out = mvca_2d_adapter(t.constant(E), 8, vars, {}, CounterRng(), false).value();
  ASSERT_EQ(out.shape(), (Shape{6, 16}));
  for (std::size_t h = 0; h < 8; ++h) {
    Tensor<double> head({1, 6, 2});
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 2; ++j) head[i * 2 + j] = E[i * 16 + h * 2 + j];
    auto ref = mvca_forward(t.constant(head), vars, {}, CounterRng(), false).value();
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(out[i * 16 + h * 2 + j], ref[i * 2 + j]);
  }
}

TEST(Adapter, IndivisibleWidthIsConfigError) {
  auto w = random_weights(3, 8);
  Tape<double> t;
  EXPECT_THROW(mvca_2d_adapter(t.constant(Tensor<double>({4, 10})), 3, bind(t, w), {}, CounterRng(), false),
               ConfigError);
}
