#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonnet/errors.hpp"

namespace sonnet {

namespace detail {

inline void check_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size()) {
    throw DimensionError(std::string(what) + ": length mismatch " + std::to_string(y.size()) + " vs " +
                         std::to_string(yhat.size()));
  }
  if (y.empty()) throw DimensionError(std::string(what) + ": empty input");
}

}  // namespace detail

inline double mae(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat, "mae");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

/// Symmetric MAPE in percent, (100/n) Σ 2|y−ŷ| / (|y|+|ŷ|), with 0/0 terms
/// counted as 0. Range [0, 200].
inline double smape(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat, "smape");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double den = std::abs(y[i]) + std::abs(yhat[i]);
    if (den > 0) s += 2.0 * std::abs(y[i] - yhat[i]) / den;
  }
  return 100.0 * s / static_cast<double>(y.size());
}

inline constexpr double kWeatherOffset = 30.0;

/// Offset sMAPE for series far from zero: (100/n) Σ 2|y−ŷ| / (|y−ξ|+|ŷ−ξ|+2a)
/// with ξ the minimum of the ground truth y.
inline double smape_weather(std::span<const double> y, std::span<const double> yhat, double a = kWeatherOffset) {
  detail::check_pair(y, yhat, "smape_weather");
  const double xi = *std::min_element(y.begin(), y.end());
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += 2.0 * std::abs(y[i] - yhat[i]) / (std::abs(y[i] - xi) + std::abs(yhat[i] - xi) + 2.0 * a);
  }
  return 100.0 * s / static_cast<double>(y.size());
}

/// Sample correlation; nullopt when either series has zero variance.
inline std::optional<double> pearson_r(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat, "pearson_r");
  const double n = static_cast<double>(y.size());
  double my = 0, mh = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my += y[i];
    mh += yhat[i];
  }
  my /= n;
  mh /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxy += (y[i] - my) * (yhat[i] - mh);
    sxx += (y[i] - my) * (y[i] - my);
    syy += (yhat[i] - mh) * (yhat[i] - mh);
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Last observed value repeated H times.
inline std::vector<double> persistence(std::span<const double> history, std::size_t H) {
  if (history.empty()) throw DimensionError("persistence: empty history");
  return std::vector<double>(H, history.back());
}

/// Forecast for step t+h is the value one period earlier, t+h−period, where
/// history ends at t.
inline std::vector<double> seasonal_persistence(std::span<const double> history, std::size_t H, std::size_t period) {
  if (period == 0) throw ConfigError("seasonal_persistence: period must be >= 1");
  if (period < H) throw DimensionError("seasonal_persistence: period shorter than the horizon");
  if (history.size() < period) throw DimensionError("seasonal_persistence: history shorter than one period");
  std::vector<double> out;
  const std::size_t t = history.size() - 1;
  for (std::size_t h = 1; h <= H; ++h) out.push_back(history[t + h - period]);
  return out;
}

enum class EvalMode { target_step, full_sequence };

inline const char* mode_name(EvalMode m) { return m == EvalMode::target_step ? "target" : "full"; }

/// One scored (model, season, mode) cell. `horizon` is H in target-step
/// mode, 0 for the full-sequence average, or the step h of a per-horizon row.
struct MetricRow {
  std::string model;
  std::string season;
  std::string mode;
  std::size_t horizon = 0;
  std::size_t count = 0;
  double mae = 0;
  double smape = 0;
  double smape_weather = 0;
  std::optional<double> r;
};

inline MetricRow score(std::string model, std::string season, std::string mode, std::size_t horizon,
                       std::span<const double> y, std::span<const double> yhat) {
  MetricRow row{std::move(model), std::move(season), std::move(mode), horizon, y.size(), 0, 0, 0, std::nullopt};
  row.mae = mae(y, yhat);
  row.smape = smape(y, yhat);
  row.smape_weather = smape_weather(y, yhat);
  row.r = pearson_r(y, yhat);
  return row;
}

/// Predictions of one model on one season: truth and forecast, [n][H].
struct SeasonForecast {
  std::string model;
  std::string season;
  std::vector<std::vector<double>> truth;
  std::vector<std::vector<double>> pred;
};

/// Target-step row (last element of each sequence), full-sequence row (all
/// H elements pooled) and one row per horizon step.
inline std::vector<MetricRow> score_forecast(const SeasonForecast& f) {
  if (f.truth.size() != f.pred.size() || f.truth.empty()) {
    throw DimensionError("score_forecast: empty or mismatched forecasts for season '" + f.season + "'");
  }
  const std::size_t H = f.truth.front().size();
  std::vector<double> last_y, last_p, all_y, all_p;
  std::vector<std::vector<double>> hy(H), hp(H);
  for (std::size_t i = 0; i < f.truth.size(); ++i) {
    if (f.truth[i].size() != H || f.pred[i].size() != H) throw DimensionError("score_forecast: ragged horizons");
    last_y.push_back(f.truth[i].back());
    last_p.push_back(f.pred[i].back());
    for (std::size_t h = 0; h < H; ++h) {
      all_y.push_back(f.truth[i][h]);
      all_p.push_back(f.pred[i][h]);
      hy[h].push_back(f.truth[i][h]);
      hp[h].push_back(f.pred[i][h]);
    }
  }
  std::vector<MetricRow> rows;
  rows.push_back(score(f.model, f.season, mode_name(EvalMode::target_step), H, last_y, last_p));
  rows.push_back(score(f.model, f.season, mode_name(EvalMode::full_sequence), 0, all_y, all_p));
  for (std::size_t h = 0; h < H; ++h) rows.push_back(score(f.model, f.season, "horizon", h + 1, hy[h], hp[h]));
  return rows;
}

struct EvalReport {
  std::vector<MetricRow> rows;

  const MetricRow* find(const std::string& model, const std::string& season, const std::string& mode,
                        std::size_t horizon) const {
    for (const auto& r : rows) {
      if (r.model == model && r.season == season && r.mode == mode && r.horizon == horizon) return &r;
    }
    return nullptr;
  }
};

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Header "model,season,mode,horizon,count,mae,smape,smape_weather,r"; an
/// absent r is an empty field.
inline void write_report_csv(std::ostream& out, const EvalReport& rep) {
  out << "model,season,mode,horizon,count,mae,smape,smape_weather,r\n";
  for (const auto& r : rep.rows) {
    out << r.model << ',' << r.season << ',' << r.mode << ',' << r.horizon << ',' << r.count << ','
        << detail::g17(r.mae) << ',' << detail::g17(r.smape) << ',' << detail::g17(r.smape_weather) << ','
        << (r.r ? detail::g17(*r.r) : "") << '\n';
  }
}

/// {"rows": [{"model", "season", "mode", "horizon", "count", "mae",
/// "smape", "smape_weather", "r" (null when undefined)}, ...]}
inline nlohmann::json report_json(const EvalReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"model", r.model},
                    {"season", r.season},
                    {"mode", r.mode},
                    {"horizon", r.horizon},
                    {"count", r.count},
                    {"mae", r.mae},
                    {"smape", r.smape},
                    {"smape_weather", r.smape_weather},
                    {"r", r.r ? nlohmann::json(*r.r) : nlohmann::json(nullptr)}});
  }
  return {{"rows", rows}};
}

}  // namespace sonnet
