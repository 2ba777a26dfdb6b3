#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "sonnet/commands.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace sonnet;
  CLI::App app{"Sonnet multivariable time-series forecasting"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  std::string config;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::string resume;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config, "Experiment configuration file")->required();
    cmd->add_option("--set", overrides, "Override a configuration key (key=value)");
  };

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint.bin, history.csv, resolved_config.txt");
  add_config(train);
  train->add_option("--resume", resume, "Continue from a train_state.bin");

  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the test seasons");
  add_config(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file (default <output.dir>/checkpoint.bin)");

  auto* forecast = app.add_subcommand("forecast", "Forecast the H steps after the last row");
  add_config(forecast);
  forecast->add_option("--checkpoint", checkpoint, "Checkpoint file (default <output.dir>/checkpoint.bin)");

  auto* grid = app.add_subcommand("grid", "Grid search over grid.* axes");
  add_config(grid);

  auto* ablate = app.add_subcommand("ablate", "Train and compare the five ablation variants");
  add_config(ablate);

  SynthOptions synth_opts;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset as CSV");
  synth->add_option("--kind", synth_opts.kind, "Series kind")
      ->required()
      ->check(CLI::IsMember(synth_kinds()));
  synth->add_option("-n,--rows", synth_opts.N, "Number of rows")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_opts.seed, "Random seed");
  synth->add_option("--lead", synth_opts.lead, "Lead of the indicator channel (leading-indicator)");
  synth->add_option("--period", synth_opts.period, "Seasonal period in rows")->check(CLI::PositiveNumber);
  synth->add_option("--noise", synth_opts.noise, "Noise scale (seasonal-walk)");
  synth->add_option("-o,--output", synth_out, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  std::ostream& log = quiet ? commands::null_log() : std::cerr;
  try {
    if (synth->parsed()) {
      const auto t = commands::cmd_synth(synth_opts, synth_out);
      log << "wrote " << t.rows() << " rows to " << synth_out << '\n';
      return kExitOk;
    }
    const auto cfg = load_experiment(config, overrides);
    const std::string default_ck = (std::filesystem::path(cfg.output_dir) / "checkpoint.bin").string();
    if (train->parsed()) {
      commands::cmd_train(cfg, resume, log);
    } else if (evaluate->parsed()) {
      commands::cmd_evaluate(cfg, checkpoint.empty() ? default_ck : checkpoint, log);
    } else if (forecast->parsed()) {
      for (double v : commands::cmd_forecast(cfg, checkpoint.empty() ? default_ck : checkpoint, log)) {
        std::cout << commands::g17(v) << '\n';
      }
    } else if (grid->parsed()) {
      commands::cmd_grid(cfg, log);
    } else if (ablate->parsed()) {
      commands::cmd_ablate(cfg, quiet ? log : std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const LoadError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
