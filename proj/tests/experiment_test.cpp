#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sonnet/commands.hpp"
#include "sonnet/experiment.hpp"
#include "sonnet/synth.hpp"

using namespace sonnet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sonnet_experiment_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

const char* kBaseConfig = R"(# tiny experiment
data.path = series.csv
model.L = 8
model.H = 2
model.d = 8
model.K = 4
model.alpha = 0.25
train.max_epochs = 3
train.patience = 2
train.batch = 32
train.lr = 0.003
train.dtype = float64
split.train = 0:180
split.val = 180:240
split.test = 240:
seed = 42
output.dir = out
)";

ExperimentConfig tiny_experiment(const fs::path& dir, const std::vector<std::string>& overrides = {}) {
  SynthOptions o;
  o.kind = "leading-indicator";
  o.N = 300;
  o.lead = 2;
  commands::cmd_synth(o, (dir / "series.csv").string());
  commands::write_text(dir / "experiment.cfg", kBaseConfig);
  return load_experiment((dir / "experiment.cfg").string(), overrides);
}

}  // namespace

TEST(Config, ParsesGrammar) {
  const auto kv = parse_config_text("a = 1  # note\n\n  b=two words \n# only a comment\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"a", "1"}));
  EXPECT_EQ(kv[1], (std::pair<std::string, std::string>{"b", "two words"}));
}

TEST(Config, DuplicateKeyNamesLine) {
  try {
    parse_config_text("a = 1\na = 2\n", "x.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos);
  }
}

TEST(Config, LineWithoutAssignmentRejected) { EXPECT_THROW(parse_config_text("just words\n"), ConfigError); }

TEST(Config, UnknownKeyRejected) {
  KeyValues kv{{"data.path", "x.csv"}, {"split.train", "0:10"}, {"split.val", "10:20"}, {"model.widht", "3"}};
  EXPECT_THROW(build_experiment(kv), ConfigError);
  kv.back() = {"colour", "red"};
  EXPECT_THROW(build_experiment(kv), ConfigError);
}

TEST(Config, RequiredKeysAndDerivedChannels) {
  EXPECT_THROW(build_experiment({{"split.train", "0:10"}, {"split.val", "10:20"}}), ConfigError);
  EXPECT_THROW(build_experiment({{"data.path", "x.csv"}, {"split.train", "0:10"}}), ConfigError);
  EXPECT_THROW(build_experiment({{"data.path", "x.csv"}, {"split.train", "0:10"}, {"split.val", "10:20"},
                                 {"model.C", "3"}}),
               ConfigError);
}

TEST(Config, OverridesAndSeed) {
  const auto dir = fresh_dir("overrides");
  const auto c = tiny_experiment(dir, {"model.K=8", "seed=7", "train.lr=0.01"});
  EXPECT_EQ(c.model.K, 8u);
  EXPECT_EQ(c.model.seed, 7u);
  EXPECT_EQ(c.train_cfg.seed, 7u);
  EXPECT_EQ(c.train_cfg.lr, 0.01);
  EXPECT_EQ(c.dataset, (dir / "series.csv").lexically_normal().string());
  EXPECT_EQ(c.output_dir, (dir / "out").lexically_normal().string());
  ASSERT_EQ(c.test.size(), 1u);
  EXPECT_EQ(c.test[0].rows.end, kOpenEnd);
}

TEST(Config, MissingFileIsConfigError) { EXPECT_THROW(load_experiment("/nonexistent/e.cfg"), ConfigError); }

TEST(Config, SplitValidation) {
  ExperimentConfig c;
  c.train = {0, 100};
  c.val = {100, 150};
  c.test = {{"a", {150, kOpenEnd}}};
  EXPECT_NO_THROW(resolve_splits(c, 200));
  EXPECT_EQ(c.test[0].rows.end, 200u);

  auto overlap = c;
  overlap.val = {90, 150};
  EXPECT_THROW(resolve_splits(overlap, 200), ConfigError);
  auto beyond = c;
  beyond.test = {{"a", {150, 250}}};
  EXPECT_THROW(resolve_splits(beyond, 200), ConfigError);
  auto seasons = c;
  seasons.test = {{"a", {150, 180}}, {"b", {170, 200}}};
  EXPECT_THROW(resolve_splits(seasons, 200), ConfigError);
  auto empty = c;
  empty.val = {100, 100};
  EXPECT_THROW(resolve_splits(empty, 200), ConfigError);
}

TEST(Config, ResolvedTextParsesBack) {
  const auto dir = fresh_dir("resolved");
  const auto c = tiny_experiment(dir, {"model.ablate=no_mlp,no_koop", "eval.seasonal_period=24"});
  const auto text = resolved_config_text(c);
  const auto back = build_experiment(parse_config_text(text));
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.train_cfg.lr, c.train_cfg.lr);
  EXPECT_EQ(back.dataset, c.dataset);
  EXPECT_EQ(back.seasonal_period, 24u);
  EXPECT_EQ(back.grid.lr, c.grid.lr);
  EXPECT_EQ(resolved_config_text(back), text);
}

TEST(Synth, DeterministicAndByteIdentical) {
  const auto dir = fresh_dir("synth");
  for (const auto& kind : synth_kinds()) {
    SynthOptions o;
    o.kind = kind;
    o.N = 200;
    commands::cmd_synth(o, (dir / "a.csv").string());
    commands::cmd_synth(o, (dir / "b.csv").string());
    EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv")) << kind;
    o.seed = 43;
    commands::cmd_synth(o, (dir / "c.csv").string());
    if (kind != "sinusoid") EXPECT_NE(read_file(dir / "a.csv"), read_file(dir / "c.csv")) << kind;
  }
  SynthOptions bad;
  bad.kind = "chaos";
  EXPECT_THROW(synthesize(bad), ConfigError);
}

TEST(Synth, LeadingIndicatorLeadsTarget) {
  SynthOptions o;
  o.kind = "leading-indicator";
  o.N = 500;
  o.lead = 5;
  const auto t = synthesize(o);
  ASSERT_EQ(t.channels(), 2u);
  for (std::size_t i = 0; i + 5 < t.rows(); ++i) EXPECT_EQ(t.exo[0][i], t.target[i + 5]);
}

TEST(Pipeline, TrainEvaluateForecast) {
  const auto dir = fresh_dir("pipeline");
  const auto cfg = tiny_experiment(dir);
  const auto tr = commands::cmd_train(cfg);
  for (const char* f : {"checkpoint.bin", "train_state.bin", "history.csv", "resolved_config.txt", "train_summary.txt"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  EXPECT_EQ(tr.history.rows.size(), 3u);

  const auto rep = commands::cmd_evaluate(cfg, (dir / "out" / "checkpoint.bin").string());
  const auto* target = rep.find("sonnet", "test", "target", 2);
  ASSERT_NE(target, nullptr);
  ASSERT_NE(rep.find("sonnet", "test", "full", 0), nullptr);
  const auto* pers = rep.find("persistence", "test", "target", 2);
  ASSERT_NE(pers, nullptr);

  const auto raw = load_csv((dir / "series.csv").string(), {});
  double pers_sum = 0;
  std::size_t n = 0;
  for (std::size_t t = 240 - 1; t + 2 < raw.rows(); ++t, ++n) pers_sum += std::fabs(raw.target[t + 2] - raw.target[t]);
  EXPECT_EQ(pers->count, n);
  EXPECT_NEAR(pers->mae, pers_sum / static_cast<double>(n), 1e-12);

  const auto preds = read_rows(dir / "out" / "predictions.csv");
  ASSERT_EQ(preds.size(), n * 2);
  double sum = 0;
  std::size_t m = 0;
  for (const auto& r : preds) {
    if (r[4] == "2") {
      sum += std::fabs(std::stod(r[1]) - std::stod(r[2]));
      ++m;
    }
  }
  EXPECT_NEAR(sum / static_cast<double>(m), target->mae, 1e-12);

  const auto f = commands::cmd_forecast(cfg, (dir / "out" / "checkpoint.bin").string());
  EXPECT_EQ(f.size(), 2u);
  EXPECT_EQ(read_rows(dir / "out" / "forecast.csv").size(), 2u);
}

TEST(Pipeline, RerunGivesIdenticalHistory) {
  const auto a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
  commands::cmd_train(tiny_experiment(a));
  commands::cmd_train(tiny_experiment(b));
  EXPECT_EQ(read_file(a / "out" / "history.csv"), read_file(b / "out" / "history.csv"));
  EXPECT_EQ(read_file(a / "out" / "checkpoint.bin"), read_file(b / "out" / "checkpoint.bin"));
}

TEST(Pipeline, ResumeFromFinishedStateKeepsResult) {
  const auto dir = fresh_dir("resume");
  const auto cfg = tiny_experiment(dir);
  commands::cmd_train(cfg);
  const auto history = read_file(dir / "out" / "history.csv");
  const auto ck = read_file(dir / "out" / "checkpoint.bin");
  fs::copy_file(dir / "out" / "train_state.bin", dir / "state.bin");
  commands::cmd_train(cfg, (dir / "state.bin").string());
  EXPECT_EQ(read_file(dir / "out" / "history.csv"), history);
  EXPECT_EQ(read_file(dir / "out" / "checkpoint.bin"), ck);
}

TEST(Pipeline, IncompatibleCheckpointNamesField) {
  const auto dir = fresh_dir("compat");
  commands::cmd_train(tiny_experiment(dir));
  const auto other = tiny_experiment(dir, {"model.L=10"});
  try {
    commands::cmd_evaluate(other, (dir / "out" / "checkpoint.bin").string());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.L"), std::string::npos);
  }
}

TEST(Pipeline, MissingDatasetNamesPath) {
  const auto dir = fresh_dir("missing");
  auto cfg = tiny_experiment(dir);
  cfg.dataset = (dir / "absent.csv").string();
  try {
    commands::cmd_train(cfg);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("absent.csv"), std::string::npos);
  }
}

TEST(Pipeline, SeasonalBaselineRows) {
  const auto dir = fresh_dir("seasonal");
  const auto cfg = tiny_experiment(dir, {"eval.seasonal_period=24"});
  commands::cmd_train(cfg);
  const auto rep = commands::cmd_evaluate(cfg, (dir / "out" / "checkpoint.bin").string());
  EXPECT_NE(rep.find("seasonal_persistence", "test", "target", 2), nullptr);
}

TEST(Pipeline, GridWritesLeaderboard) {
  const auto dir = fresh_dir("grid");
  const auto cfg = tiny_experiment(dir, {"grid.alpha=0.25,0.5", "grid.K=4", "grid.dropout=0", "grid.lr=0.003"});
  const auto res = commands::cmd_grid(cfg);
  EXPECT_EQ(res.rows.size(), 2u);
  EXPECT_EQ(read_rows(dir / "out" / "leaderboard.csv").size(), 2u);
  const auto best = load_experiment((dir / "out" / "best_config.txt").string());
  EXPECT_EQ(best.model.alpha, res.winner().model.alpha);
}

TEST(Pipeline, AblationVariantsAndEquivalences) {
  const auto dir = fresh_dir("ablate");
  const auto cfg = tiny_experiment(dir, {"train.max_epochs=2", "train.patience=1"});
  const auto rep = commands::cmd_ablate(cfg);
  ASSERT_EQ(rep.rows.size(), 6u);
  EXPECT_TRUE(rep.mlp_equivalent);
  EXPECT_TRUE(rep.koopman_equivalent);
  const auto& full = rep.rows[0];
  EXPECT_EQ(full.variant, "full");
  EXPECT_EQ(full.delta_mae_pct, 0.0);
  for (const auto& r : rep.rows) {
    EXPECT_NEAR(r.delta_mae_pct, (r.mae - full.mae) / full.mae * 100.0, 1e-9);
    if (r.variant == "no_mvca") EXPECT_LT(r.parameters, full.parameters);
  }
  EXPECT_EQ(read_file(dir / "out" / "equivalence.txt"),
            "no_mlp_vs_zero_mlp_weights = exact\nno_koop_vs_identity_operator = exact\n");
}
