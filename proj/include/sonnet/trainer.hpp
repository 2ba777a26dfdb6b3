#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "sonnet/checkpoint.hpp"
#include "sonnet/data.hpp"
#include "sonnet/errors.hpp"
#include "sonnet/model.hpp"
#include "sonnet/numerics/adam.hpp"
#include "sonnet/numerics/rng.hpp"

namespace sonnet {

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 42;

  void validate() const {
    if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
    if (patience < 1 || patience >= max_epochs) throw ConfigError("train.patience must lie in [1, max_epochs)");
    if (batch < 1) throw ConfigError("train.batch must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  }
};

/// Learning rate for 0-based epoch e: lr0 · (1 − e / max_epochs).
inline double lr_at(double lr0, std::size_t epoch, std::size_t max_epochs) {
  return lr0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(max_epochs));
}

/// Stops after `patience` consecutive epochs without a strict improvement
/// on the best validation loss. Epochs are numbered from 1.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience = 5) : patience_(patience) {}

  /// Records one epoch; true when training should stop.
  bool update(double val_loss) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      bad_ = 0;
      return false;
    }
    ++bad_;
    return bad_ >= patience_;
  }

  bool improved_last() const { return best_epoch_ == epoch_ && epoch_ > 0; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t bad_epochs() const { return bad_; }
  std::size_t patience() const { return patience_; }

  void restore(std::size_t epoch, double best, std::size_t best_epoch, std::size_t bad) {
    epoch_ = epoch;
    best_ = best;
    best_epoch_ = best_epoch;
    bad_ = bad;
  }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t bad_ = 0;
};

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double lr = 0;
  std::size_t peak_tape_bytes = 0;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;
  std::size_t best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::string stop_reason;
};

/// Header "epoch,train_loss,val_loss,lr,peak_tape_bytes"; reals in %.17g.
inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "epoch,train_loss,val_loss,lr,peak_tape_bytes\n";
  char buf[128];
  for (const auto& r : h.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu\n", r.epoch, r.train_loss, r.val_loss, r.lr,
                  r.peak_tape_bytes);
    out << buf;
  }
}

/// Fisher-Yates permutation of 0..n−1 keyed by (root, epoch).
inline std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t root, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const CounterRng rng(root, epoch, 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bits(i) % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

/// Windows and the (already normalized) table they index into.
struct TrainData {
  const SeriesTable* table = nullptr;
  WindowSpec spec;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Mean squared error over every window and horizon step, dropout off.
template <class T>
double mean_squared_error(SonnetModel<T>& model, const SeriesTable& table, const WindowSpec& spec,
                          const std::vector<std::size_t>& anchors, std::size_t batch) {
  if (anchors.empty()) throw ConfigError("no windows to evaluate");
  double total = 0;
  for (std::size_t s = 0; s < anchors.size(); s += batch) {
    const std::vector<std::size_t> ids(anchors.begin() + static_cast<std::ptrdiff_t>(s),
                                       anchors.begin() + static_cast<std::ptrdiff_t>(std::min(anchors.size(), s + batch)));
    const auto b = make_batch<T>(table, spec, ids);
    Tape<T> tape(false);
    const auto out = model.forward(tape, b.X, b.y);
    for (std::size_t i = 0; i < b.target.size(); ++i) {
      const double e = static_cast<double>(out.value()[i]) - static_cast<double>(b.target[i]);
      total += e * e;
    }
  }
  return total / static_cast<double>(anchors.size() * spec.H);
}

/// Everything needed to continue a run exactly where it stopped.
template <class T>
struct TrainState {
  AdamState<T> adam;
  EarlyStopping stopper{5};
  TrainHistory history;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> best;
  bool finished = false;
};

template <class T>
TrainState<T> fresh_state(SonnetModel<T>& model, const TrainConfig& cfg) {
  TrainState<T> st;
  st.adam = AdamState<T>(model.parameters());
  st.stopper = EarlyStopping(cfg.patience);
  for (const auto* p : model.parameters()) st.best.push_back(p->value);
  return st;
}

/// Called after every epoch with the state as it stands.
template <class T>
using EpochHook = std::function<void(const SonnetModel<T>&, const TrainState<T>&)>;

/// Runs epochs until the stopper fires or max_epochs is reached, then loads
/// the best-validation parameters into `model`. Loss is MSE over all H steps
/// in normalized units.
template <class T>
TrainHistory train(SonnetModel<T>& model, const TrainData& data, const TrainConfig& cfg, TrainState<T>& st,
                   const std::type_identity_t<EpochHook<T>>& hook = {}) {
  cfg.validate();
  if (data.train.empty() || data.val.empty()) throw ConfigError("training needs non-empty train and validation windows");
  const auto params = model.parameters();
  const SeedRoots roots = set_seed(cfg.seed);
  while (!st.finished) {
    const std::size_t epoch = st.stopper.epoch();
    const double lr = lr_at(cfg.lr, epoch, cfg.max_epochs);
    const auto order = shuffled_order(data.train.size(), roots.shuffle, epoch);
    double loss_sum = 0;
    std::size_t peak = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      std::vector<std::size_t> ids;
      for (std::size_t k = s; k < std::min(order.size(), s + cfg.batch); ++k) ids.push_back(data.train[order[k]]);
      const auto b = make_batch<T>(*data.table, data.spec, ids);
      for (auto* p : params) p->zero_grad();
      Tape<T> tape;
      ForwardOptions fo{true, CounterRng(roots.dropout, kAttentionDropoutLayer, st.step)};
      double lv = 0;
      try {
        const auto loss = mse(model.forward(tape, b.X, b.y, fo), tape.constant(b.target));
        lv = static_cast<double>(loss.value().item());
        if (!std::isfinite(lv)) throw NumericError("loss", "non-finite training loss");
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw DivergenceError(static_cast<int>(epoch + 1), "training diverged in epoch " + std::to_string(epoch + 1) +
                                                               " (layer '" + e.layer() + "'): " + e.what());
      }
      peak = std::max(peak, tape.bytes_in_use());
      adam_step(params, st.adam, lr);
      ++st.step;
      loss_sum += lv * static_cast<double>(ids.size());
    }
    HistoryRow row;
    row.epoch = epoch + 1;
    row.train_loss = loss_sum / static_cast<double>(data.train.size());
    row.lr = lr;
    row.peak_tape_bytes = peak;
    try {
      row.val_loss = mean_squared_error(model, *data.table, data.spec, data.val, cfg.batch);
    } catch (const NumericError& e) {
      throw DivergenceError(static_cast<int>(epoch + 1), "validation diverged in epoch " + std::to_string(epoch + 1) +
                                                             " (layer '" + e.layer() + "'): " + e.what());
    }
    st.history.rows.push_back(row);
    const bool stop = st.stopper.update(row.val_loss);
    if (st.stopper.improved_last()) {
      for (std::size_t i = 0; i < params.size(); ++i) st.best[i] = params[i]->value;
    }
    st.history.best_epoch = st.stopper.best_epoch();
    st.history.best_val = st.stopper.best();
    if (stop) {
      st.finished = true;
      st.history.stop_reason = "early_stop";
    } else if (st.stopper.epoch() >= cfg.max_epochs) {
      st.finished = true;
      st.history.stop_reason = "max_epochs";
    }
    if (hook) hook(model, st);
  }
  if (st.stopper.best_epoch() > 0) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = st.best[i];
  }
  return st.history;
}

template <class T>
TrainHistory train(SonnetModel<T>& model, const TrainData& data, const TrainConfig& cfg) {
  auto st = fresh_state(model, cfg);
  return train(model, data, cfg, st);
}

/// Checkpoint holding the current parameters, optimizer moments, stopper
/// state, history and best-so-far parameters (under "best/").
template <class T>
Checkpoint make_resume_checkpoint(const SonnetModel<T>& model, const TrainState<T>& st) {
  Checkpoint ck = make_checkpoint(model);
  std::vector<Parameter<T>*> params;
  for (const auto* p : model.parameters()) params.push_back(const_cast<Parameter<T>*>(p));
  add_adam_state(ck, params, st.adam);
  auto g = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  ck.meta["train.step"] = std::to_string(st.step);
  ck.meta["train.epoch"] = std::to_string(st.stopper.epoch());
  ck.meta["train.best"] = g(st.stopper.best());
  ck.meta["train.best_epoch"] = std::to_string(st.stopper.best_epoch());
  ck.meta["train.bad_epochs"] = std::to_string(st.stopper.bad_epochs());
  ck.meta["train.finished"] = st.finished ? "true" : "false";
  ck.meta["train.stop_reason"] = st.history.stop_reason;
  for (const auto& r : st.history.rows) {
    char key[32];
    std::snprintf(key, sizeof key, "history.%06zu", r.epoch);
    ck.meta[key] = g(r.train_loss) + "," + g(r.val_loss) + "," + g(r.lr) + "," + std::to_string(r.peak_tape_bytes);
  }
  for (std::size_t i = 0; i < params.size(); ++i) ck.add("best/" + params[i]->name, st.best[i]);
  return ck;
}

/// Restores parameters and training state written by make_resume_checkpoint.
template <class T>
TrainState<T> load_resume_checkpoint(const Checkpoint& ck, SonnetModel<T>& model, const TrainConfig& cfg) {
  const auto params = model.parameters();
  load_parameters(ck, params);
  TrainState<T> st = fresh_state(model, cfg);
  st.adam = load_adam_state(ck, params);
  auto get = [&](const std::string& k) {
    const auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw CheckpointError("checkpoint lacks training state '" + k + "'");
    return it->second;
  };
  st.step = detail::parse_size("train.step", get("train.step"));
  st.stopper.restore(detail::parse_size("train.epoch", get("train.epoch")),
                     detail::parse_double("train.best", get("train.best")),
                     detail::parse_size("train.best_epoch", get("train.best_epoch")),
                     detail::parse_size("train.bad_epochs", get("train.bad_epochs")));
  st.finished = get("train.finished") == "true";
  st.history.stop_reason = get("train.stop_reason");
  st.history.best_epoch = st.stopper.best_epoch();
  st.history.best_val = st.stopper.best();
  for (const auto& [k, v] : ck.meta) {
    if (k.rfind("history.", 0) != 0) continue;
    HistoryRow r;
    r.epoch = detail::parse_size(k, k.substr(8));
    std::stringstream ss(v);
    std::string f[4];
    for (auto& x : f) std::getline(ss, x, ',');
    r.train_loss = detail::parse_double(k, f[0]);
    r.val_loss = detail::parse_double(k, f[1]);
    r.lr = detail::parse_double(k, f[2]);
    r.peak_tape_bytes = detail::parse_size(k, f[3]);
    st.history.rows.push_back(r);
  }
  if (st.history.rows.size() != st.stopper.epoch()) throw CheckpointError("checkpoint history is incomplete");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* rec = ck.find("best/" + params[i]->name);
    if (rec == nullptr) throw CheckpointError("checkpoint lacks best parameters for '" + params[i]->name + "'");
    copy_tensor(*rec, st.best[i]);
  }
  return st;
}

/// Hyperparameter axes searched exhaustively.
struct GridAxes {
  std::vector<double> alpha{0.0, 0.1, 0.25, 0.75};
  std::vector<std::size_t> K{8, 16, 32};
  std::vector<double> dropout{0.0, 0.1, 0.2};
  std::vector<double> lr{2e-3, 1e-3, 5e-4, 2e-4, 1e-4, 5e-5};

  std::size_t size() const { return alpha.size() * K.size() * dropout.size() * lr.size(); }
};

struct TrialResult {
  double val_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
};

using TrialFn = std::function<TrialResult(const ModelConfig&, const TrainConfig&)>;

/// One grid point; `error` is set when the point was invalid or failed.
struct GridRow {
  std::size_t index = 0;
  ModelConfig model;
  TrainConfig train;
  TrialResult result;
  std::string error;
};

struct GridResult {
  std::vector<GridRow> rows;  // in configuration order
  std::size_t best = 0;

  const GridRow& winner() const { return rows.at(best); }
};

/// Product of the axes in the order alpha, K, dropout, lr (lr varies
/// fastest).
inline std::vector<GridRow> expand_grid(const GridAxes& axes, const ModelConfig& base_model,
                                        const TrainConfig& base_train) {
  if (axes.alpha.empty() || axes.K.empty() || axes.dropout.empty() || axes.lr.empty()) {
    throw ConfigError("grid axes must be non-empty");
  }
  std::vector<GridRow> rows;
  for (double a : axes.alpha)
    for (std::size_t k : axes.K)
      for (double p : axes.dropout)
        for (double lr : axes.lr) {
          GridRow r;
          r.index = rows.size();
          r.model = base_model;
          r.model.alpha = a;
          r.model.K = k;
          r.model.dropout = p;
          r.train = base_train;
          r.train.lr = lr;
          rows.push_back(std::move(r));
        }
  return rows;
}

/// Runs `trial` on every grid point with up to `workers` threads. The
/// winner has the lowest validation loss; ties go to the earlier point.
inline GridResult grid_search(const GridAxes& axes, const ModelConfig& base_model, const TrainConfig& base_train,
                              const TrialFn& trial, std::size_t workers = 1) {
  GridResult res;
  res.rows = expand_grid(axes, base_model, base_train);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < res.rows.size(); i = next++) {
      auto& row = res.rows[i];
      try {
        row.model.validate();
        row.train.validate();
        row.result = trial(row.model, row.train);
      } catch (const std::exception& e) {
        row.error = e.what();
        row.result = TrialResult{};
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, res.rows.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  bool found = false;
  for (const auto& row : res.rows) {
    if (!row.error.empty()) continue;
    if (!found || row.result.val_loss < res.rows[res.best].result.val_loss) {
      res.best = row.index;
      found = true;
    }
  }
  if (!found) throw ConfigError("every grid point failed; first error: " + res.rows.front().error);
  return res;
}

}  // namespace sonnet
