#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sonnet/wavelet.hpp"
#include "support/gradcheck.hpp"

using namespace sonnet;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& g, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(g);
  return t;
}

double atom_formula(double a, double b, double c, double t) {
  return std::exp(-a * t * t) * std::cos(b * t + c * t * t);
}

}  // namespace

TEST(TimeGrid, EndpointsAndMonotone) {
  auto t = time_grid<double>(5);
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[4], 1.0);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GT(t[i], t[i - 1]);
}

TEST(TimeGrid, SingleStepIsZero) {
  auto t = time_grid<double>(1);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0], 0.0);
}

TEST(Atoms, ZeroParametersGiveOnes) {
  WaveletBank<double> bank(3, 6, 4);
  Tape<double> tape;
  auto m = make_atoms(tape, bank);
  ASSERT_EQ(m.shape(), (Shape{3, 4, 6}));
  for (std::size_t i = 0; i < m.value().size(); ++i) EXPECT_EQ(m.value()[i], 1.0);
}

TEST(Atoms, PureCosineAtThreeSteps) {
  WaveletBank<double> bank(1, 3, 1);
  bank.beta.value[0] = std::numbers::pi;
  Tape<double> tape;
  auto m = make_atoms(tape, bank).value();
  EXPECT_NEAR(m[0], 1.0, 1e-15);
  EXPECT_NEAR(m[1], 0.0, 1e-15);
  EXPECT_NEAR(m[2], -1.0, 1e-15);
}

TEST(Atoms, MatchScalarFormula) {
  WaveletBank<double> bank(3, 16, 4);
  bank.init(7);
  Tape<double> tape;
  auto m = make_atoms(tape, bank).value();
  auto t = time_grid<double>(16);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t i = 0; i < 16; ++i) {
        const std::size_t p = k * 4 + j;
        EXPECT_NEAR(m[(k * 4 + j) * 16 + i],
                    atom_formula(bank.alpha.value[p], bank.beta.value[p], bank.gamma.value[p], t[i]), 1e-14);
      }
}

TEST(Atoms, RebuiltFromCurrentParameters) {
  WaveletBank<double> bank(1, 4, 2);
  Tape<double> tape;
  auto before = make_atoms(tape, bank).value();
  bank.beta.value.fill(1.0);
  auto after = make_atoms(tape, bank).value();
  EXPECT_NE(before, after);
}

TEST(Atoms, BoundedByOneForNonNegativeAlpha) {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 50; ++trial) {
    WaveletBank<double> bank(4, 12, 5);
    bank.alpha.value = random_tensor({4, 5}, g, 0, 5);
    bank.beta.value = random_tensor({4, 5}, g, -10, 10);
    bank.gamma.value = random_tensor({4, 5}, g, -10, 10);
    Tape<double> tape(false);
    auto m = make_atoms(tape, bank).value();
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_LE(std::abs(m[i]), 1.0);
  }
}

TEST(Atoms, NonFiniteParametersThrow) {
  WaveletBank<double> bank(1, 4, 2);
  bank.gamma.value[1] = std::nan("");
  Tape<double> tape;
  EXPECT_THROW(make_atoms(tape, bank), NumericError);
}

TEST(Atoms, GradientsMatchFiniteDifferences) {
  WaveletBank<double> bank(2, 7, 3);
  bank.init(3);
  std::mt19937_64 g(2);
  auto w = random_tensor({2, 3, 7}, g);
  auto rep = testing_support::check_gradients(bank.parameters(), [&](Tape<double>& t) {
    return sum(mul(make_atoms(t, bank), t.constant(w)));
  });
  EXPECT_LT(rep.worst(), 1e-6);
}

TEST(Project, OnesTimesOnes) {
  Tape<double> t;
  auto p = project(t.constant(Tensor<double>({5, 3}, 1.0)), t.constant(Tensor<double>({2, 3, 5}, 1.0)));
  ASSERT_EQ(p.shape(), (Shape{2, 5, 3}));
  for (std::size_t i = 0; i < p.value().size(); ++i) EXPECT_EQ(p.value()[i], 1.0);
}

TEST(Project, ZeroedAtomAbsorbs) {
  std::mt19937_64 g(3);
  Tape<double> t;
  auto atoms = random_tensor({3, 4, 6}, g);
  for (std::size_t i = 0; i < 24; ++i) atoms[24 + i] = 0.0;
  auto p = project(t.constant(random_tensor({6, 4}, g)), t.constant(atoms)).value();
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(p[24 + i], 0.0);
}

TEST(Project, MatchesLoopAndBatches) {
  std::mt19937_64 g(4);
  Tape<double> t;
  const std::size_t B = 2, K = 3, L = 5, d = 4;
  auto E = random_tensor({B, L, d}, g);
  auto M = random_tensor({K, d, L}, g);
  auto p = project(t.constant(E), t.constant(M)).value();
  ASSERT_EQ(p.shape(), (Shape{B, K, L, d}));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t j = 0; j < d; ++j)
          EXPECT_NEAR(p[((b * K + k) * L + l) * d + j], E[(b * L + l) * d + j] * M[(k * d + j) * L + l], 1e-15);
}

TEST(Project, ShapeMismatchThrows) {
  Tape<double> t;
  EXPECT_THROW(project(t.constant(Tensor<double>({5, 3})), t.constant(Tensor<double>({2, 4, 5}))), DimensionError);
}

TEST(Reconstruct, SingleOnesAtomIsIdentity) {
  std::mt19937_64 g(5);
  Tape<double> t;
  auto O = random_tensor({1, 4, 3}, g);
  auto r = reconstruct(t.constant(O), t.constant(Tensor<double>({1, 3, 4}, 1.0))).value();
  ASSERT_EQ(r.shape(), (Shape{4, 3}));
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(r[i], O[i]);
}

TEST(Reconstruct, ZeroStateGivesZero) {
  std::mt19937_64 g(6);
  Tape<double> t;
  auto r = reconstruct(t.constant(Tensor<double>({3, 4, 2})), t.constant(random_tensor({3, 2, 4}, g))).value();
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i], 0.0);
}

TEST(Reconstruct, MatchesSummedLoop) {
  std::mt19937_64 g(7);
  Tape<double> t;
  const std::size_t K = 3, L = 5, d = 2;
  auto O = random_tensor({K, L, d}, g);
  auto M = random_tensor({K, d, L}, g);
  auto r = reconstruct(t.constant(O), t.constant(M)).value();
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < K; ++k) s += O[(k * L + l) * d + j] * M[(k * d + j) * L + l];
      EXPECT_NEAR(r[l * d + j], s, 1e-14);
    }
}

TEST(Reconstruct, ProjectThenReconstructWithOnesAtom) {
  std::mt19937_64 g(8);
  Tape<double> t;
  auto E = random_tensor({6, 3}, g);
  auto ones = t.constant(Tensor<double>({1, 3, 6}, 1.0));
  auto r = reconstruct(project(t.constant(E), ones), ones).value();
  EXPECT_EQ(r, E);
}
