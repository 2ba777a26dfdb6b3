#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "sonnet/data.hpp"

using namespace sonnet;

namespace {

SeriesTable parse(const std::string& text, CsvSchema schema = {}) {
  std::istringstream in(text);
  return parse_csv(in, schema);
}

SeriesTable random_table(std::size_t N, std::size_t C, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0, 3);
  SeriesTable t;
  t.target_name = "y";
  t.exo.resize(C);
  for (std::size_t c = 0; c < C; ++c) t.exo_names.push_back("x" + std::to_string(c));
  for (std::size_t i = 0; i < N; ++i) {
    t.time.push_back(1'600'000'000 + static_cast<std::int64_t>(i) * 3600);
    t.stamps.push_back(format_iso8601(t.time.back()));
    t.target.push_back(n(g));
    for (auto& col : t.exo) col.push_back(n(g));
  }
  return t;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "sonnet_data_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Iso8601, AcceptedForms) {
  EXPECT_EQ(parse_iso8601("1970-01-01"), 0);
  EXPECT_EQ(parse_iso8601("1970-01-02T00:00:01"), 86401);
  EXPECT_EQ(parse_iso8601("1970-01-01 01:02"), 3720);
  EXPECT_EQ(parse_iso8601("2000-03-01T00:00:00Z"), 951868800);
}

TEST(Iso8601, RejectsMalformed) {
  for (const char* s : {"", "2020-13-01", "2020-02-30", "2020/01/01", "2020-01-01T25:00", "2020-01-01Tfoo",
                        "2020-01-01 10:00:00x"}) {
    EXPECT_FALSE(parse_iso8601(s).has_value()) << s;
  }
}

TEST(Iso8601, FormatRoundTrip) {
  for (std::int64_t s : {0LL, 951868800LL, 1577836800LL + 3600 * 13 + 61}) {
    EXPECT_EQ(parse_iso8601(format_iso8601(s)), s);
  }
  EXPECT_EQ(format_iso8601(1577836800), "2020-01-01T00:00:00");
}

TEST(LoadCsv, InteriorGapIsNeighbourMean) {
  auto t = parse("timestamp,y,x\n2020-01-01,1,10\n2020-01-02,,\n2020-01-03,3,30\n");
  ASSERT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.target[1], 2.0);
  EXPECT_EQ(t.exo[0][1], 20.0);
}

TEST(LoadCsv, LongGapInterpolatesLinearly) {
  auto t = parse("timestamp,y\n2020-01-01,0\n2020-01-02,NaN\n2020-01-03,NA\n2020-01-04,NaN\n2020-01-05,8\n");
  EXPECT_EQ(t.target, (std::vector<double>{0, 2, 4, 6, 8}));
  EXPECT_EQ(t.channels(), 0u);
}

TEST(LoadCsv, EdgeGapsTakeNearestValue) {
  auto t = parse("timestamp,y\n2020-01-01,\n2020-01-02,5\n2020-01-03,7\n2020-01-04,\n");
  EXPECT_EQ(t.target, (std::vector<double>{5, 5, 7, 7}));
}

TEST(LoadCsv, MissingTargetColumnNamesIt) {
  try {
    parse("timestamp,a\n2020-01-01,1\n", CsvSchema{"timestamp", "ili_rate", {}});
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("ili_rate"), std::string::npos);
  }
}

TEST(LoadCsv, NonUniformTimestampsRejected) {
  EXPECT_THROW(parse("timestamp,y\n2020-01-01,1\n2020-01-02,2\n2020-01-04,3\n"), LoadError);
  EXPECT_THROW(parse("timestamp,y\n2020-01-02,1\n2020-01-01,2\n"), LoadError);
}

TEST(LoadCsv, UnparseableRowsRejected) {
  EXPECT_THROW(parse("timestamp,y\n2020-01-01,abc\n"), LoadError);
  EXPECT_THROW(parse("timestamp,y\nyesterday,1\n"), LoadError);
  EXPECT_THROW(parse("timestamp,y\n2020-01-01,1,2\n"), LoadError);
  EXPECT_THROW(parse("timestamp,y\n2020-01-01,\n"), LoadError);
}

TEST(LoadCsv, ExplicitExogenousSelection) {
  auto t = parse("date,a,b,target\n2020-01-01,1,2,3\n", CsvSchema{"date", "target", {"b"}});
  ASSERT_EQ(t.channels(), 1u);
  EXPECT_EQ(t.exo_names[0], "b");
  EXPECT_EQ(t.exo[0][0], 2.0);
  EXPECT_EQ(t.target[0], 3.0);
}

TEST(LoadCsv, MissingFileIsLoadError) { EXPECT_THROW(load_csv("/nonexistent/x.csv", {}), LoadError); }

TEST(SaveCsv, RoundTripIsIdentical) {
  const auto t = random_table(100, 5, 1);
  const auto path = temp_path("roundtrip.csv").string();
  save_csv(path, t);
  const auto back = load_csv(path, {});
  EXPECT_EQ(back.time, t.time);
  EXPECT_EQ(back.target, t.target);
  EXPECT_EQ(back.exo, t.exo);
  EXPECT_EQ(back.exo_names, t.exo_names);
}

TEST(Resample, BlockMeansDropPartialTail) {
  auto t = parse("timestamp,y\n2020-01-01T00:00,1\n2020-01-01T01:00,3\n2020-01-01T02:00,5\n2020-01-01T03:00,7\n"
                 "2020-01-01T04:00,100\n");
  auto r = resample(t, 2);
  EXPECT_EQ(r.target, (std::vector<double>{2, 6}));
  EXPECT_EQ(r.step(), 7200);
  EXPECT_THROW(resample(t, 0), ConfigError);
}

TEST(Windows, SmallestSeries) {
  auto s = make_windows(2, WindowSpec{1, 1, 0});
  ASSERT_EQ(s.anchors.size(), 1u);
  EXPECT_EQ(s.anchors[0], 0u);
}

TEST(Windows, DailyDelayedCount) {
  const WindowSpec w{28, 7, 7};
  auto s = make_windows(100, w);
  ASSERT_EQ(s.anchors.size(), 59u);
  EXPECT_EQ(s.anchors.front(), 34u);
  EXPECT_EQ(s.anchors.back(), 92u);
}

TEST(Windows, DelayShiftsLaggedTarget) {
  auto t = random_table(60, 2, 2);
  for (std::size_t i = 0; i < t.rows(); ++i) t.target[i] = static_cast<double>(i);
  const WindowSpec w{5, 3, 7};
  const auto wi = window_at(t, w, 20);
  EXPECT_EQ(wi.y_lagged.back(), 13.0);
  EXPECT_EQ(wi.y_lagged.front(), 9.0);
  EXPECT_EQ(wi.target, (std::vector<double>{21, 22, 23}));
  EXPECT_EQ(wi.X[(5 - 1) * 2 + 1], t.exo[1][20]);
  EXPECT_EQ(wi.X[0], t.exo[0][16]);
}

TEST(Windows, CountMatchesExhaustiveEnumeration) {
  for (std::size_t N = 1; N <= 30; ++N)
    for (std::size_t L = 1; L <= 6; ++L)
      for (std::size_t H = 1; H <= 6; ++H)
        for (std::size_t delay = 0; delay <= 4; ++delay) {
          std::vector<std::size_t> expect;
          for (std::size_t t = 0; t < N; ++t) {
            const bool x_ok = t + 1 >= L;
            const bool y_ok = t + 1 >= L + delay;
            const bool target_ok = t + H <= N - 1;
            if (x_ok && y_ok && target_ok) expect.push_back(t);
          }
          const auto s = make_windows(N, WindowSpec{L, H, delay});
          ASSERT_EQ(s.anchors, expect) << N << " " << L << " " << H << " " << delay;
          const long formula = static_cast<long>(N) - static_cast<long>(H + L + delay) + 1;
          ASSERT_EQ(static_cast<long>(s.anchors.size()), std::max(0L, formula));
          ASSERT_EQ(s.too_short, L + H + delay > N);
        }
}

TEST(Windows, NeverReadOutsideSeries) {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<std::size_t> small(1, 12), big(1, 80);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t N = big(g);
    const WindowSpec w{small(g), small(g), small(g) - 1};
    auto t = random_table(N, 1, static_cast<std::uint64_t>(trial));
    const auto set = make_windows(N, w);
    for (auto a : set.anchors) ASSERT_NO_THROW(window_at(t, w, a));
  }
}

TEST(Windows, TooShortSeriesSignals) {
  auto s = make_windows(10, WindowSpec{8, 3, 0});
  EXPECT_TRUE(s.anchors.empty());
  EXPECT_TRUE(s.too_short);
}

TEST(Windows, SplitKeepsTargetsInside) {
  const WindowSpec w{4, 3, 1};
  const Range val{50, 70};
  const auto s = make_windows(100, w, val);
  ASSERT_FALSE(s.anchors.empty());
  EXPECT_EQ(s.anchors.front(), 49u);
  EXPECT_EQ(s.anchors.back(), 66u);
  for (auto t : s.anchors)
    for (std::size_t h = 1; h <= w.H; ++h) EXPECT_TRUE(val.contains(t + h));
}

TEST(Windows, BatchStacksInstances) {
  auto t = random_table(40, 3, 4);
  const WindowSpec w{6, 2, 1};
  const std::vector<std::size_t> anchors{10, 20, 30};
  const auto b = make_batch<double>(t, w, anchors);
  EXPECT_EQ(b.X.shape(), (Shape{3, 6, 3}));
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const auto wi = window_at(t, w, anchors[k]);
    for (std::size_t i = 0; i < wi.X.size(); ++i) EXPECT_EQ(b.X[k * 18 + i], wi.X[i]);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(b.y[k * 6 + i], wi.y_lagged[i]);
    for (std::size_t h = 0; h < 2; ++h) EXPECT_EQ(b.target[k * 2 + h], wi.target[h]);
  }
}

TEST(ZScore, DefinitionalValue) {
  auto t = parse("timestamp,y\n2020-01-01,8\n2020-01-02,12\n2020-01-03,14\n");
  const auto p = zscore_fit(t, Range{0, 2});
  EXPECT_EQ(p.target.mean, 10.0);
  EXPECT_EQ(p.target.std, 2.0);
  EXPECT_EQ(zscore_apply(t, p).target[2], 2.0);
}

TEST(ZScore, ConstantColumnMapsToZerosAndBack) {
  auto t = parse("timestamp,y,x\n2020-01-01,1,4.5\n2020-01-02,2,4.5\n2020-01-03,3,4.5\n");
  const auto p = zscore_fit(t, Range{0, 3});
  EXPECT_EQ(p.exo[0].std, kZScoreFloor);
  const auto z = zscore_apply(t, p);
  for (double v : z.exo[0]) EXPECT_EQ(v, 0.0);
  const auto back = zscore_invert(z, p);
  for (double v : back.exo[0]) EXPECT_EQ(v, 4.5);
}

TEST(ZScore, RoundTripsBothWays) {
  const auto t = random_table(200, 4, 5);
  const auto p = zscore_fit(t, Range{0, 120});
  const auto back = zscore_invert(zscore_apply(t, p), p);
  const auto fwd = zscore_apply(zscore_invert(t, p), p);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    EXPECT_NEAR(back.target[i], t.target[i], 1e-12);
    EXPECT_NEAR(fwd.target[i], t.target[i], 1e-12);
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(back.exo[c][i], t.exo[c][i], 1e-12);
      EXPECT_NEAR(fwd.exo[c][i], t.exo[c][i], 1e-12);
    }
  }
}

TEST(ZScore, IgnoresRowsOutsideTraining) {
  auto t = random_table(100, 2, 6);
  const Range train{0, 60};
  const auto p = zscore_fit(t, train);
  for (std::size_t i = 60; i < 100; ++i) {
    t.target[i] = 1e6;
    t.exo[1][i] = -1e6;
  }
  const auto q = zscore_fit(t, train);
  EXPECT_EQ(p.target.mean, q.target.mean);
  EXPECT_EQ(p.target.std, q.target.std);
  EXPECT_EQ(p.exo[1].mean, q.exo[1].mean);
  EXPECT_EQ(p.exo[1].std, q.exo[1].std);
}

TEST(ZScore, EmptyTrainingRangeIsConfigError) {
  EXPECT_THROW(zscore_fit(random_table(10, 1, 7), Range{3, 3}), ConfigError);
}

TEST(InstanceNorm, ConstantWindow) {
  const auto r = instance_normalize({1, 1, 1, 1});
  EXPECT_EQ(r.values, (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(r.shift, 1.0);
  EXPECT_EQ(r.scale, kInstanceScaleFloor);
}

TEST(InstanceNorm, TwoPointWindow) {
  const auto r = instance_normalize({0, 2});
  EXPECT_EQ(r.shift, 1.0);
  EXPECT_EQ(r.values, (std::vector<double>{-1, 1}));
}

TEST(InstanceNorm, DenormalizeInvertsStandardization) {
  std::mt19937_64 g(8);
  std::normal_distribution<double> n(5, 2);
  std::vector<double> y(20);
  for (auto& v : y) v = n(g);
  const auto r = instance_normalize(y);
  const auto back = r.denormalize(r.values);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(back[i], y[i], 1e-12);
}

TEST(WindowCache, ReusesMatchingFileAndRegeneratesOtherwise) {
  const auto path = temp_path("windows.idx").string();
  std::filesystem::remove(path);
  const WindowSpec w{5, 2, 1};
  const Range split{10, 40};
  const auto first = cached_windows(path, 50, w, split);
  ASSERT_TRUE(std::filesystem::exists(path));
  const auto loaded = load_window_index(path, 50, w, split);
  ASSERT_TRUE(loaded.has_value());
  EXPECT_EQ(loaded->anchors, first.anchors);
  EXPECT_FALSE(load_window_index(path, 51, w, split).has_value());
  const auto other = cached_windows(path, 50, WindowSpec{3, 2, 0}, split);
  EXPECT_EQ(other.anchors, make_windows(50, WindowSpec{3, 2, 0}, split).anchors);
}
