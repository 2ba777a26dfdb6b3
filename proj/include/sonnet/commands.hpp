#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonnet/checkpoint.hpp"
#include "sonnet/data.hpp"
#include "sonnet/errors.hpp"
#include "sonnet/experiment.hpp"
#include "sonnet/metrics.hpp"
#include "sonnet/model.hpp"
#include "sonnet/synth.hpp"
#include "sonnet/trainer.hpp"

namespace sonnet::commands {

/// Loaded data, fitted normalization and window anchors for one experiment.
struct Prepared {
  ExperimentConfig cfg;
  SeriesTable raw;
  SeriesTable norm;
  ZScoreParams z;
  WindowSpec spec;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::pair<Season, std::vector<std::size_t>>> seasons;
};

inline std::ostream& null_log() {
  static std::ostream sink(nullptr);
  return sink;
}

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw Error("write to '" + path.string() + "' failed");
}

inline Prepared prepare(ExperimentConfig cfg, std::ostream& log) {
  if (!std::filesystem::exists(cfg.dataset)) throw LoadError("dataset file not found: '" + cfg.dataset + "'");
  Prepared p;
  p.raw = resample(load_csv(cfg.dataset, cfg.schema), cfg.resample);
  cfg.model.C = p.raw.channels();
  cfg.model.validate();
  resolve_splits(cfg, p.raw.rows());
  p.z = zscore_fit(p.raw, cfg.train);
  p.norm = zscore_apply(p.raw, p.z);
  p.spec = {cfg.model.L, cfg.model.H, cfg.model.delay};
  auto windows = [&](const Range& r, const std::string& name) {
    const std::string cache = cfg.window_cache.empty() ? "" : cfg.window_cache + "." + name + ".idx";
    const auto s = cached_windows(cache, p.raw.rows(), p.spec, r);
    if (s.too_short) log << "warning: split '" << name << "' holds no complete window\n";
    return s.anchors;
  };
  p.train = windows(cfg.train, "train");
  p.val = windows(cfg.val, "val");
  if (p.train.empty() || p.val.empty()) {
    throw ConfigError("split.train and split.val must each hold at least one window of L + H + delay rows");
  }
  for (const auto& s : cfg.test) p.seasons.emplace_back(s, windows(s.rows, "test." + s.name));
  p.cfg = std::move(cfg);
  return p;
}

inline void add_norm_meta(Checkpoint& ck, const ZScoreParams& z) {
  ck.meta["norm.target.mean"] = g17(z.target.mean);
  ck.meta["norm.target.std"] = g17(z.target.std);
  ck.meta["norm.exo.count"] = std::to_string(z.exo.size());
  for (std::size_t c = 0; c < z.exo.size(); ++c) {
    ck.meta["norm.exo." + std::to_string(c) + ".mean"] = g17(z.exo[c].mean);
    ck.meta["norm.exo." + std::to_string(c) + ".std"] = g17(z.exo[c].std);
  }
}

inline ZScoreParams norm_from_meta(const Checkpoint& ck) {
  auto get = [&](const std::string& k) {
    const auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw CheckpointError("checkpoint lacks normalization entry '" + k + "'");
    return detail::parse_double(k, it->second);
  };
  ZScoreParams z;
  z.target = {get("norm.target.mean"), get("norm.target.std")};
  const auto n = static_cast<std::size_t>(get("norm.exo.count"));
  for (std::size_t c = 0; c < n; ++c) {
    z.exo.push_back({get("norm.exo." + std::to_string(c) + ".mean"), get("norm.exo." + std::to_string(c) + ".std")});
  }
  return z;
}

/// Names of the architecture fields on which two configurations differ.
inline std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::string> out;
  const auto ka = to_kv(a), kb = to_kv(b);
  for (const char* k : {"model.L", "model.H", "model.C", "model.delay", "model.alpha", "model.d", "model.K",
                        "model.ablate", "model.instance_norm"}) {
    if (ka.at(k) != kb.at(k)) out.push_back(std::string(k) + " (checkpoint " + ka.at(k) + ", config " + kb.at(k) + ")");
  }
  return out;
}

inline void check_compatible(const ModelConfig& checkpoint, const ModelConfig& config) {
  const auto diff = config_differences(checkpoint, config);
  if (diff.empty()) return;
  std::string msg = "checkpoint is incompatible with the configuration:";
  for (const auto& d : diff) msg += " " + d + ";";
  msg.pop_back();
  throw ConfigError(msg);
}

/// Forecasts in original units for each anchor, [n][H].
template <class T>
std::vector<std::vector<double>> predict(SonnetModel<T>& model, const Prepared& p, const ZScoreParams& z,
                                         const std::vector<std::size_t>& anchors, std::size_t batch = 256) {
  const auto norm = zscore_apply(p.raw, z);
  std::vector<std::vector<double>> out;
  for (std::size_t s = 0; s < anchors.size(); s += batch) {
    const std::vector<std::size_t> ids(anchors.begin() + static_cast<std::ptrdiff_t>(s),
                                       anchors.begin() + static_cast<std::ptrdiff_t>(std::min(anchors.size(), s + batch)));
    const auto b = make_batch<T>(norm, p.spec, ids);
    Tape<T> tape(false);
    const auto y = model.forward(tape, b.X, b.y).value();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<double> row;
      for (std::size_t h = 0; h < p.spec.H; ++h) row.push_back(z.target.invert(static_cast<double>(y[i * p.spec.H + h])));
      out.push_back(std::move(row));
    }
  }
  return out;
}

inline std::vector<std::vector<double>> truth_for(const Prepared& p, const std::vector<std::size_t>& anchors) {
  std::vector<std::vector<double>> out;
  for (auto t : anchors) {
    std::vector<double> row;
    for (std::size_t h = 1; h <= p.spec.H; ++h) row.push_back(p.raw.target[t + h]);
    out.push_back(std::move(row));
  }
  return out;
}

/// Persistence forecasts: the last observed target, y_{t−δ}.
inline std::vector<std::vector<double>> persistence_for(const Prepared& p, const std::vector<std::size_t>& anchors) {
  std::vector<std::vector<double>> out;
  for (auto t : anchors) {
    const std::span<const double> hist(p.raw.target.data(), t - p.spec.delay + 1);
    out.push_back(persistence(hist, p.spec.H));
  }
  return out;
}

/// Seasonal persistence from the observed history ending at t−δ; empty when
/// some window lacks one full period of history.
inline std::vector<std::vector<double>> seasonal_for(const Prepared& p, const std::vector<std::size_t>& anchors,
                                                     std::size_t period) {
  std::vector<std::vector<double>> out;
  const std::size_t reach = p.spec.H + p.spec.delay;
  if (period < reach) return {};
  for (auto t : anchors) {
    const std::size_t observed = t - p.spec.delay + 1;
    if (observed < period) return {};
    const std::span<const double> hist(p.raw.target.data(), observed);
    const auto f = seasonal_persistence(hist, reach, period);
    out.emplace_back(f.end() - static_cast<std::ptrdiff_t>(p.spec.H), f.end());
  }
  return out;
}

using Matrix = std::vector<std::vector<double>>;

/// Trains `model` in place from `st`, logging one line per epoch.
template <class T>
TrainHistory fit(SonnetModel<T>& model, const Prepared& p, const TrainConfig& tcfg, TrainState<T>& st,
                 std::ostream& log, const std::type_identity_t<EpochHook<T>>& hook = {}) {
  const TrainData data{&p.norm, p.spec, p.train, p.val};
  auto logging = [&](const SonnetModel<T>& m, const TrainState<T>& s) {
    const auto& r = s.history.rows.back();
    log << "epoch " << r.epoch << " train " << g17(r.train_loss) << " val " << g17(r.val_loss) << " lr " << g17(r.lr)
        << '\n';
    if (hook) hook(m, s);
  };
  return train(model, data, tcfg, st, logging);
}

template <class T>
struct Trained {
  SonnetModel<T> model;
  TrainHistory history;
};

template <class T>
Trained<T> fit(const Prepared& p, const ModelConfig& mcfg, const TrainConfig& tcfg, std::ostream& log) {
  Trained<T> out{SonnetModel<T>(mcfg), {}};
  auto st = fresh_state(out.model, tcfg);
  out.history = fit(out.model, p, tcfg, st, log);
  return out;
}

template <class T>
Checkpoint model_checkpoint(const SonnetModel<T>& model, const ZScoreParams& z) {
  auto ck = make_checkpoint(model);
  add_norm_meta(ck, z);
  return ck;
}

struct TrainResult {
  TrainHistory history;
  std::size_t parameters = 0;
};

/// Writes checkpoint.bin (best parameters), train_state.bin (resumable,
/// refreshed every epoch), history.csv, train_summary.txt and
/// resolved_config.txt into the output directory.
template <class T>
TrainResult run_train(const Prepared& p, const std::string& resume, std::ostream& log) {
  const std::filesystem::path out(p.cfg.output_dir);
  std::filesystem::create_directories(out);
  write_text(out / "resolved_config.txt", resolved_config_text(p.cfg));
  SonnetModel<T> model(p.cfg.model);
  auto st = fresh_state(model, p.cfg.train_cfg);
  if (!resume.empty()) {
    const auto ck = read_checkpoint(resume);
    if (checkpoint_dtype(ck) != dtype_of<T>()) {
      throw ConfigError(std::string("resume checkpoint holds ") + dtype_name(checkpoint_dtype(ck)) +
                        " values but train.dtype is " + p.cfg.dtype);
    }
    check_compatible(checkpoint_config(ck), p.cfg.model);
    st = load_resume_checkpoint(ck, model, p.cfg.train_cfg);
    log << "resuming after epoch " << st.stopper.epoch() << '\n';
  }
  auto save_state = [&](const SonnetModel<T>& m, const TrainState<T>& s) {
    auto ck = make_resume_checkpoint(m, s);
    add_norm_meta(ck, p.z);
    write_checkpoint((out / "train_state.bin").string(), ck);
  };
  TrainResult r;
  r.history = fit(model, p, p.cfg.train_cfg, st, log, save_state);
  r.parameters = model.parameter_count();
  auto ck = model_checkpoint(model, p.z);
  ck.meta["train.best_epoch"] = std::to_string(r.history.best_epoch);
  write_checkpoint((out / "checkpoint.bin").string(), ck);
  std::ostringstream hist;
  write_history_csv(hist, r.history);
  write_text(out / "history.csv", hist.str());
  write_text(out / "train_summary.txt", "epochs = " + std::to_string(r.history.rows.size()) +
                                            "\nbest_epoch = " + std::to_string(r.history.best_epoch) +
                                            "\nbest_val_loss = " + g17(r.history.best_val) +
                                            "\nstop_reason = " + r.history.stop_reason +
                                            "\nparameters = " + std::to_string(r.parameters) + "\n");
  log << "best epoch " << r.history.best_epoch << " val " << g17(r.history.best_val) << " ("
      << r.history.stop_reason << ")\n";
  return r;
}

inline TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& resume = "",
                             std::ostream& log = null_log()) {
  const auto p = prepare(cfg, log);
  return p.cfg.dtype == "float64" ? run_train<double>(p, resume, log) : run_train<float>(p, resume, log);
}

/// Scores every test season and writes report.json, report.csv and
/// predictions.csv (timestamp,y_true,y_pred,season,horizon).
template <class T>
EvalReport run_evaluate(const Prepared& p, const Checkpoint& ck, std::ostream& log) {
  check_compatible(checkpoint_config(ck), p.cfg.model);
  auto model = load_model<T>(ck);
  const auto z = norm_from_meta(ck);
  if (z.exo.size() != p.raw.channels()) throw ConfigError("checkpoint normalization does not match the dataset columns");
  if (p.seasons.empty()) throw ConfigError("no test season configured (split.test or split.test.<name>)");
  const std::filesystem::path out(p.cfg.output_dir);
  std::filesystem::create_directories(out);
  EvalReport rep;
  std::ostringstream preds;
  preds << "timestamp,y_true,y_pred,season,horizon\n";
  auto add = [&](const std::string& name, const std::string& season, const Matrix& truth, const Matrix& pred) {
    for (auto& row : score_forecast({name, season, truth, pred})) rep.rows.push_back(std::move(row));
  };
  for (const auto& [season, anchors] : p.seasons) {
    if (anchors.empty()) {
      log << "warning: test season '" << season.name << "' holds no complete window; skipped\n";
      continue;
    }
    const auto truth = truth_for(p, anchors);
    const auto pred = predict(model, p, z, anchors);
    add("sonnet", season.name, truth, pred);
    for (std::size_t i = 0; i < anchors.size(); ++i)
      for (std::size_t h = 0; h < p.spec.H; ++h) {
        preds << p.raw.stamps[anchors[i] + h + 1] << ',' << g17(truth[i][h]) << ',' << g17(pred[i][h]) << ','
              << season.name << ',' << h + 1 << '\n';
      }
    if (p.cfg.persistence) add("persistence", season.name, truth, persistence_for(p, anchors));
    if (p.cfg.seasonal_period > 0) {
      const auto sp = seasonal_for(p, anchors, p.cfg.seasonal_period);
      if (sp.empty()) {
        log << "warning: season '" << season.name << "' lacks history for seasonal persistence; skipped\n";
      } else {
        add("seasonal_persistence", season.name, truth, sp);
      }
    }
  }
  if (rep.rows.empty()) throw ConfigError("no test season holds a complete window");
  std::ostringstream csv;
  write_report_csv(csv, rep);
  write_text(out / "report.csv", csv.str());
  write_text(out / "report.json", report_json(rep).dump(2) + "\n");
  write_text(out / "predictions.csv", preds.str());
  for (const auto& r : rep.rows) {
    if (r.mode != "horizon") {
      log << r.model << ' ' << r.season << ' ' << r.mode << " mae " << g17(r.mae) << " smape " << g17(r.smape) << '\n';
    }
  }
  return rep;
}

inline EvalReport cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint,
                               std::ostream& log = null_log()) {
  const auto ck = read_checkpoint(checkpoint);
  const auto p = prepare(cfg, log);
  return checkpoint_dtype(ck) == DType::float64 ? run_evaluate<double>(p, ck, log) : run_evaluate<float>(p, ck, log);
}

/// Forecast of the H steps after the last row; writes forecast.csv
/// (timestamp,horizon,y_pred).
template <class T>
std::vector<double> run_forecast(const Prepared& p, const Checkpoint& ck) {
  check_compatible(checkpoint_config(ck), p.cfg.model);
  auto model = load_model<T>(ck);
  const auto z = norm_from_meta(ck);
  const auto norm = zscore_apply(p.raw, z);
  const std::size_t N = p.raw.rows(), L = p.spec.L, C = p.raw.channels(), H = p.spec.H, delay = p.spec.delay;
  if (N < L + delay) throw ConfigError("dataset shorter than L + delay rows");
  Tensor<T> X(Shape{L, C}), y(Shape{L});
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t c = 0; c < C; ++c) X[i * C + c] = static_cast<T>(norm.exo[c][N - L + i]);
    y[i] = static_cast<T>(norm.target[N - delay - L + i]);
  }
  Tape<T> tape(false);
  const auto out = model.forward(tape, X, y).value();
  std::vector<double> f;
  std::ostringstream csv;
  csv << "timestamp,horizon,y_pred\n";
  for (std::size_t h = 0; h < H; ++h) {
    f.push_back(z.target.invert(static_cast<double>(out[h])));
    csv << format_iso8601(p.raw.time.back() + static_cast<std::int64_t>(h + 1) * p.raw.step()) << ',' << h + 1 << ','
        << g17(f.back()) << '\n';
  }
  const std::filesystem::path dir(p.cfg.output_dir);
  std::filesystem::create_directories(dir);
  write_text(dir / "forecast.csv", csv.str());
  return f;
}

inline std::vector<double> cmd_forecast(const ExperimentConfig& cfg, const std::string& checkpoint,
                                        std::ostream& log = null_log()) {
  const auto ck = read_checkpoint(checkpoint);
  const auto p = prepare(cfg, log);
  return checkpoint_dtype(ck) == DType::float64 ? run_forecast<double>(p, ck) : run_forecast<float>(p, ck);
}

/// Exhaustive search over the grid axes; writes leaderboard.csv and
/// best_config.txt.
inline GridResult cmd_grid(const ExperimentConfig& cfg, std::ostream& log = null_log()) {
  const auto p = prepare(cfg, log);
  const TrialFn trial = [&p](const ModelConfig& m, const TrainConfig& t) {
    std::ostream sink(nullptr);
    const auto h = p.cfg.dtype == "float64" ? fit<double>(p, m, t, sink).history : fit<float>(p, m, t, sink).history;
    return TrialResult{h.best_val, h.best_epoch};
  };
  auto res = grid_search(p.cfg.grid, p.cfg.model, p.cfg.train_cfg, trial, p.cfg.workers);
  const std::filesystem::path out(p.cfg.output_dir);
  std::filesystem::create_directories(out);
  std::ostringstream csv;
  csv << "index,alpha,K,dropout,lr,val_loss,best_epoch,status\n";
  for (const auto& r : res.rows) {
    std::string status = r.error.empty() ? "ok" : r.error;
    for (auto& ch : status) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    }
    csv << r.index << ',' << g17(r.model.alpha) << ',' << r.model.K << ',' << g17(r.model.dropout) << ','
        << g17(r.train.lr) << ',' << g17(r.result.val_loss) << ',' << r.result.best_epoch << ',' << status << '\n';
  }
  write_text(out / "leaderboard.csv", csv.str());
  ExperimentConfig best = p.cfg;
  best.model = res.winner().model;
  best.train_cfg = res.winner().train;
  write_text(out / "best_config.txt", resolved_config_text(best));
  log << "best grid point " << res.best << ": alpha " << g17(best.model.alpha) << " K " << best.model.K
      << " dropout " << g17(best.model.dropout) << " lr " << g17(best.train_cfg.lr) << " val "
      << g17(res.winner().result.val_loss) << '\n';
  return res;
}

/// Copies every parameter of `dst` from the same-named parameter of `src`.
template <class T>
void copy_shared_parameters(SonnetModel<T>& src, SonnetModel<T>& dst) {
  for (auto* p : dst.parameters()) {
    const auto* s = src.find(p->name);
    if (s == nullptr) throw Error("parameter '" + p->name + "' missing from source model");
    p->value = s->value;
  }
}

/// Forecasts of `a` and `b` on the batch are bitwise identical.
template <class T>
bool same_forecasts(SonnetModel<T>& a, SonnetModel<T>& b, const Batch<T>& batch) {
  Tape<T> ta(false), tb(false);
  return a.forward(ta, batch.X, batch.y).value() == b.forward(tb, batch.X, batch.y).value();
}

/// The model without its MLP head against a copy of `model` whose MLP
/// weights are zero.
template <class T>
bool mlp_ablation_matches(const SonnetModel<T>& model, const Batch<T>& batch) {
  SonnetModel<T> full = model;
  for (auto* p : full.parameters()) {
    if (p->name.rfind("mvca.mlp.", 0) == 0) p->value.fill(T(0));
  }
  ModelConfig c = model.config();
  c.ablate.no_mlp = true;
  SonnetModel<T> variant(c);
  copy_shared_parameters(full, variant);
  return same_forecasts(full, variant, batch);
}

/// The model without Koopman evolvement against a copy of `model` with
/// S = I and p = 0.
template <class T>
bool koopman_ablation_matches(const SonnetModel<T>& model, const Batch<T>& batch) {
  SonnetModel<T> full = model;
  if (!full.config().ablate.no_koop) full.koopman().set_identity();
  ModelConfig c = model.config();
  c.ablate.no_koop = true;
  SonnetModel<T> variant(c);
  copy_shared_parameters(full, variant);
  return same_forecasts(full, variant, batch);
}

struct AblationRow {
  std::string variant;
  std::string season;
  std::size_t parameters = 0;
  double mae = 0;
  double smape = 0;
  double delta_mae_pct = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  bool mlp_equivalent = false;
  bool koopman_equivalent = false;
};

inline std::vector<std::pair<std::string, Ablation>> ablation_variants() {
  std::vector<std::pair<std::string, Ablation>> v{{"full", {}}};
  const char* names[] = {"no_coher", "no_mlp", "no_mvca", "no_embed", "no_koop"};
  for (const char* n : names) v.emplace_back(n, Ablation::parse(n));
  return v;
}

/// Trains the full model and each single-flag variant under the same seed
/// and splits, scores target-step MAE per test season, and checks the two
/// structural equivalences on the trained full model. Writes ablation.csv
/// and equivalence.txt.
template <class T>
AblationReport run_ablate(const Prepared& p, std::ostream& log) {
  if (p.seasons.empty()) throw ConfigError("ablation needs a test season (split.test or split.test.<name>)");
  if (p.cfg.model.ablate.any()) log << "note: model.ablate is ignored by ablate; variants are built from none\n";
  AblationReport rep;
  std::vector<double> full_mae;
  std::optional<SonnetModel<T>> full_model;
  for (const auto& [name, flags] : ablation_variants()) {
    ModelConfig m = p.cfg.model;
    m.ablate = flags;
    log << "training variant " << name << '\n';
    auto tr = fit<T>(p, m, p.cfg.train_cfg, log);
    std::size_t k = 0;
    for (const auto& [season, anchors] : p.seasons) {
      if (anchors.empty()) continue;
      const auto pred = predict(tr.model, p, p.z, anchors);
      const auto truth = truth_for(p, anchors);
      std::vector<double> y, yhat;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        y.push_back(truth[i].back());
        yhat.push_back(pred[i].back());
      }
      AblationRow row{name, season.name, tr.model.parameter_count(), mae(y, yhat), smape(y, yhat), 0.0};
      if (name == "full") full_mae.push_back(row.mae);
      row.delta_mae_pct = (row.mae - full_mae.at(k)) / full_mae.at(k) * 100.0;
      rep.rows.push_back(row);
      ++k;
    }
    if (name == "full") full_model.emplace(std::move(tr.model));
  }
  if (rep.rows.empty()) throw ConfigError("no test season holds a complete window");
  std::vector<std::size_t> probe = p.seasons.front().second.empty() ? p.val : p.seasons.front().second;
  if (probe.size() > 64) probe.resize(64);
  const auto batch = make_batch<T>(p.norm, p.spec, probe);
  rep.mlp_equivalent = mlp_ablation_matches(*full_model, batch);
  rep.koopman_equivalent = koopman_ablation_matches(*full_model, batch);
  const std::filesystem::path out(p.cfg.output_dir);
  std::filesystem::create_directories(out);
  std::ostringstream csv;
  csv << "variant,season,parameters,mae,smape,delta_mae_pct\n";
  for (const auto& r : rep.rows) {
    csv << r.variant << ',' << r.season << ',' << r.parameters << ',' << g17(r.mae) << ',' << g17(r.smape) << ','
        << g17(r.delta_mae_pct) << '\n';
  }
  write_text(out / "ablation.csv", csv.str());
  write_text(out / "equivalence.txt",
             std::string("no_mlp_vs_zero_mlp_weights = ") + (rep.mlp_equivalent ? "exact" : "differs") +
                 "\nno_koop_vs_identity_operator = " + (rep.koopman_equivalent ? "exact" : "differs") + "\n");
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %-12s %10s %14s %10s\n", "variant", "season", "params", "mae", "delta%");
  log << line;
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof line, "%-10s %-12s %10zu %14.6g %+10.2f\n", r.variant.c_str(), r.season.c_str(),
                  r.parameters, r.mae, r.delta_mae_pct);
    log << line;
  }
  log << "no_mlp equivalence: " << (rep.mlp_equivalent ? "exact" : "differs") << '\n';
  log << "no_koop equivalence: " << (rep.koopman_equivalent ? "exact" : "differs") << '\n';
  return rep;
}

inline AblationReport cmd_ablate(const ExperimentConfig& cfg, std::ostream& log = null_log()) {
  const auto p = prepare(cfg, log);
  return p.cfg.dtype == "float64" ? run_ablate<double>(p, log) : run_ablate<float>(p, log);
}

inline SeriesTable cmd_synth(const SynthOptions& opts, const std::string& out_path) {
  auto t = synthesize(opts);
  const auto parent = std::filesystem::path(out_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  save_csv(out_path, t);
  return t;
}

}  // namespace sonnet::commands
