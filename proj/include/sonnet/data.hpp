#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/numerics/tensor.hpp"

namespace sonnet {

/// Seconds since 1970-01-01T00:00:00 for an ISO-8601 date or date-time:
/// "YYYY-MM-DD", "YYYY-MM-DD HH:MM", "YYYY-MM-DDTHH:MM:SS" with an optional
/// trailing "Z". Returns nullopt when the text does not parse.
inline std::optional<std::int64_t> parse_iso8601(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  std::string t = text;
  if (!t.empty() && (t.back() == 'Z' || t.back() == 'z')) t.pop_back();
  int used = 0;
  if (std::sscanf(t.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &used) != 3 || used != 10) return std::nullopt;
  if (t.size() > 10) {
    if (t[10] != 'T' && t[10] != ' ') return std::nullopt;
    const std::string rest = t.substr(11);
    int n = 0;
    const auto whole = [&] { return static_cast<std::size_t>(n) == rest.size(); };
    const bool hms = std::sscanf(rest.c_str(), "%2d:%2d:%2d%n", &h, &mi, &s, &n) == 3 && whole();
    if (!hms) {
      s = 0;
      n = 0;
      if (std::sscanf(rest.c_str(), "%2d:%2d%n", &h, &mi, &n) != 2 || !whole()) return std::nullopt;
    }
    if (h > 23 || mi > 59 || s > 59 || h < 0 || mi < 0 || s < 0) return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month(static_cast<unsigned>(mo)),
                                        std::chrono::day(static_cast<unsigned>(d))};
  if (!ymd.ok()) return std::nullopt;
  const auto days = std::chrono::sys_days(ymd).time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s;
}

/// "YYYY-MM-DDTHH:MM:SS".
inline std::string format_iso8601(std::int64_t seconds) {
  std::int64_t days = seconds / 86400;
  std::int64_t rem = seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
  return buf;
}

/// Which CSV columns hold the time stamps, the target and the exogenous
/// series. An empty exogenous list selects every remaining column.
struct CsvSchema {
  std::string timestamp = "timestamp";
  std::string target = "y";
  std::vector<std::string> exogenous;
};

/// A loaded series: target y and C exogenous columns over N uniformly
/// spaced time stamps, with no missing values.
struct SeriesTable {
  std::vector<std::int64_t> time;
  std::vector<std::string> stamps;
  std::string target_name;
  std::vector<double> target;
  std::vector<std::string> exo_names;
  std::vector<std::vector<double>> exo;  // [C][N]

  std::size_t rows() const { return target.size(); }
  std::size_t channels() const { return exo.size(); }
  std::int64_t step() const { return time.size() > 1 ? time[1] - time[0] : 0; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    f.erase(0, f.find_first_not_of(" \t"));
    f.erase(f.find_last_not_of(" \t") + 1);
  }
  return out;
}

inline bool is_missing(const std::string& f) {
  return f.empty() || f == "NaN" || f == "nan" || f == "NA" || f == "na" || f == "null";
}

/// Fills NaN entries: linear interpolation between the nearest observed
/// neighbours, nearest observed value at either edge.
inline void impute(std::vector<double>& v, const std::string& column) {
  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isnan(v[i])) seen.push_back(i);
  }
  if (seen.empty()) throw LoadError("column '" + column + "' has no values");
  for (std::size_t i = 0; i < seen.front(); ++i) v[i] = v[seen.front()];
  for (std::size_t i = seen.back() + 1; i < v.size(); ++i) v[i] = v[seen.back()];
  for (std::size_t k = 0; k + 1 < seen.size(); ++k) {
    const std::size_t a = seen[k], b = seen[k + 1];
    for (std::size_t i = a + 1; i < b; ++i) {
      const double w = static_cast<double>(i - a) / static_cast<double>(b - a);
      v[i] = v[a] + w * (v[b] - v[a]);
    }
  }
}

inline std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline SeriesTable parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw LoadError(source + ": empty file");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw LoadError(source + ": column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = column(schema.timestamp);
  const std::size_t y_col = column(schema.target);
  std::vector<std::size_t> x_cols;
  SeriesTable t;
  t.target_name = schema.target;
  if (schema.exogenous.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == ts_col || c == y_col) continue;
      x_cols.push_back(c);
      t.exo_names.push_back(header[c]);
    }
  } else {
    for (const auto& name : schema.exogenous) {
      x_cols.push_back(column(name));
      t.exo_names.push_back(name);
    }
  }
  t.exo.resize(x_cols.size());
  std::size_t line_no = 1;
  auto parse_value = [&](const std::string& f, const std::string& col) {
    if (detail::is_missing(f)) return std::numeric_limits<double>::quiet_NaN();
    try {
      std::size_t pos = 0;
      const double v = std::stod(f, &pos);
      if (pos != f.size() || !std::isfinite(v)) throw std::invalid_argument("bad");
      return v;
    } catch (const std::exception&) {
      throw LoadError(source + ":" + std::to_string(line_no) + ": cannot parse '" + f + "' in column '" + col + "'");
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw LoadError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    const auto ts = parse_iso8601(fields[ts_col]);
    if (!ts) {
      throw LoadError(source + ":" + std::to_string(line_no) + ": cannot parse timestamp '" + fields[ts_col] + "'");
    }
    t.time.push_back(*ts);
    t.stamps.push_back(fields[ts_col]);
    t.target.push_back(parse_value(fields[y_col], schema.target));
    for (std::size_t c = 0; c < x_cols.size(); ++c) t.exo[c].push_back(parse_value(fields[x_cols[c]], header[x_cols[c]]));
  }
  if (t.rows() == 0) throw LoadError(source + ": no data rows");
  for (std::size_t i = 1; i < t.time.size(); ++i) {
    const auto dt = t.time[i] - t.time[i - 1];
    if (dt <= 0) throw LoadError(source + ": timestamps not strictly increasing at '" + t.stamps[i] + "'");
    if (dt != t.step()) {
      throw LoadError(source + ": non-uniform timestamp step at '" + t.stamps[i] + "' (" + std::to_string(dt) +
                      " s, expected " + std::to_string(t.step()) + " s)");
    }
  }
  detail::impute(t.target, schema.target);
  for (std::size_t c = 0; c < t.exo.size(); ++c) detail::impute(t.exo[c], t.exo_names[c]);
  return t;
}

inline SeriesTable load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream f(path);
  if (!f) throw LoadError("cannot open dataset '" + path + "'");
  return parse_csv(f, schema, path);
}

/// Header "timestamp,<target>,<exogenous...>", values in %.17g.
inline void write_csv(std::ostream& out, const SeriesTable& t) {
  out << "timestamp," << t.target_name;
  for (const auto& n : t.exo_names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < t.rows(); ++i) {
    out << t.stamps[i] << ',' << detail::number(t.target[i]);
    for (const auto& col : t.exo) out << ',' << detail::number(col[i]);
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const SeriesTable& t) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw LoadError("cannot open '" + path + "' for writing");
  write_csv(f, t);
}

/// Mean over consecutive blocks of `factor` rows; a trailing partial block
/// is dropped. Each block keeps the time stamp of its first row.
inline SeriesTable resample(const SeriesTable& t, std::size_t factor) {
  if (factor == 0) throw ConfigError("resample factor must be >= 1");
  if (factor == 1) return t;
  SeriesTable r;
  r.target_name = t.target_name;
  r.exo_names = t.exo_names;
  r.exo.resize(t.channels());
  auto block_mean = [&](const std::vector<double>& v, std::size_t b) {
    double s = 0;
    for (std::size_t i = 0; i < factor; ++i) s += v[b * factor + i];
    return s / static_cast<double>(factor);
  };
  for (std::size_t b = 0; b < t.rows() / factor; ++b) {
    r.time.push_back(t.time[b * factor]);
    r.stamps.push_back(t.stamps[b * factor]);
    r.target.push_back(block_mean(t.target, b));
    for (std::size_t c = 0; c < t.channels(); ++c) r.exo[c].push_back(block_mean(t.exo[c], b));
  }
  return r;
}

/// Half-open row interval [begin, end).
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const Range&) const = default;
};

/// Window geometry: look-back L, horizon H, reporting delay δ.
struct WindowSpec {
  std::size_t L = 28;
  std::size_t H = 7;
  std::size_t delay = 0;
};

/// One rolling-window sample at 0-based anchor t:
///   X        rows t−L+1 .. t of every exogenous column   (L × C, row-major)
///   y_lagged rows t−δ−L+1 .. t−δ of the target
///   target   rows t+1 .. t+H of the target
struct WindowInstance {
  std::size_t anchor = 0;
  std::vector<double> X;
  std::vector<double> y_lagged;
  std::vector<double> target;
};

struct WindowSet {
  std::vector<std::size_t> anchors;
  bool too_short = false;  // L + H + δ exceeds the series length
};

/// Every admissible anchor over a series of N rows, stride 1: t runs from
/// δ+L−1 to N−H−1, giving N−H−L−δ+1 windows.
inline WindowSet make_windows(std::size_t N, const WindowSpec& w) {
  WindowSet s;
  if (w.L == 0 || w.H == 0) throw ConfigError("window L and H must be >= 1");
  if (w.L + w.H + w.delay > N) {
    s.too_short = true;
    return s;
  }
  for (std::size_t t = w.delay + w.L - 1; t + w.H < N; ++t) s.anchors.push_back(t);
  return s;
}

/// Windows whose targets t+1 .. t+H all lie inside `split`.
inline WindowSet make_windows(std::size_t N, const WindowSpec& w, const Range& split) {
  WindowSet all = make_windows(N, w);
  WindowSet s;
  s.too_short = all.too_short;
  for (auto t : all.anchors) {
    if (t + 1 >= split.begin && t + w.H < split.end) s.anchors.push_back(t);
  }
  if (s.anchors.empty()) s.too_short = true;
  return s;
}

inline WindowInstance window_at(const SeriesTable& tab, const WindowSpec& w, std::size_t t) {
  if (t < w.delay + w.L - 1 || t + w.H >= tab.rows()) {
    throw DimensionError("window anchor " + std::to_string(t) + " out of range");
  }
  WindowInstance wi;
  wi.anchor = t;
  const std::size_t C = tab.channels();
  wi.X.resize(w.L * C);
  for (std::size_t i = 0; i < w.L; ++i)
    for (std::size_t c = 0; c < C; ++c) wi.X[i * C + c] = tab.exo[c][t + 1 - w.L + i];
  for (std::size_t i = 0; i < w.L; ++i) wi.y_lagged.push_back(tab.target[t - w.delay + 1 - w.L + i]);
  for (std::size_t h = 1; h <= w.H; ++h) wi.target.push_back(tab.target[t + h]);
  return wi;
}

/// Stacked model inputs for a list of anchors.
template <class T>
struct Batch {
  Tensor<T> X;       // [B, L, C]
  Tensor<T> y;       // [B, L]
  Tensor<T> target;  // [B, H]
  std::vector<std::size_t> anchors;
};

template <class T>
Batch<T> make_batch(const SeriesTable& tab, const WindowSpec& w, const std::vector<std::size_t>& anchors) {
  const std::size_t B = anchors.size(), C = tab.channels();
  Batch<T> b{Tensor<T>(Shape{B, w.L, C}), Tensor<T>(Shape{B, w.L}), Tensor<T>(Shape{B, w.H}), anchors};
  for (std::size_t k = 0; k < B; ++k) {
    const auto wi = window_at(tab, w, anchors[k]);
    for (std::size_t i = 0; i < wi.X.size(); ++i) b.X[k * w.L * C + i] = static_cast<T>(wi.X[i]);
    for (std::size_t i = 0; i < w.L; ++i) b.y[k * w.L + i] = static_cast<T>(wi.y_lagged[i]);
    for (std::size_t h = 0; h < w.H; ++h) b.target[k * w.H + h] = static_cast<T>(wi.target[h]);
  }
  return b;
}

inline constexpr double kZScoreFloor = 1e-8;

struct ColumnScale {
  double mean = 0.0;
  double std = 1.0;

  double apply(double x) const { return (x - mean) / std; }
  double invert(double z) const { return z * std + mean; }
};

/// Per-column statistics fitted on training rows only.
struct ZScoreParams {
  ColumnScale target;
  std::vector<ColumnScale> exo;
};

inline ColumnScale fit_column(const std::vector<double>& v, const Range& rows) {
  double m = 0;
  for (std::size_t i = rows.begin; i < rows.end; ++i) m += v[i];
  m /= static_cast<double>(rows.size());
  double s = 0;
  for (std::size_t i = rows.begin; i < rows.end; ++i) s += (v[i] - m) * (v[i] - m);
  return {m, std::max(std::sqrt(s / static_cast<double>(rows.size())), kZScoreFloor)};
}

inline ZScoreParams zscore_fit(const SeriesTable& t, const Range& train) {
  if (train.empty() || train.end > t.rows()) throw ConfigError("z-score training range is empty or out of bounds");
  ZScoreParams p;
  p.target = fit_column(t.target, train);
  for (const auto& col : t.exo) p.exo.push_back(fit_column(col, train));
  return p;
}

inline SeriesTable zscore_apply(SeriesTable t, const ZScoreParams& p) {
  if (p.exo.size() != t.channels()) throw DimensionError("z-score parameters do not match the table's columns");
  for (auto& v : t.target) v = p.target.apply(v);
  for (std::size_t c = 0; c < t.channels(); ++c)
    for (auto& v : t.exo[c]) v = p.exo[c].apply(v);
  return t;
}

inline SeriesTable zscore_invert(SeriesTable t, const ZScoreParams& p) {
  if (p.exo.size() != t.channels()) throw DimensionError("z-score parameters do not match the table's columns");
  for (auto& v : t.target) v = p.target.invert(v);
  for (std::size_t c = 0; c < t.channels(); ++c)
    for (auto& v : t.exo[c]) v = p.exo[c].invert(v);
  return t;
}

inline constexpr double kInstanceScaleFloor = 1e-8;

struct InstanceNorm {
  std::vector<double> values;
  double shift = 0.0;
  double scale = 1.0;

  std::vector<double> denormalize(std::vector<double> pred) const {
    for (auto& v : pred) v = v * scale + shift;
    return pred;
  }
};

/// Per-window standardization with the population standard deviation.
inline InstanceNorm instance_normalize(const std::vector<double>& y) {
  if (y.empty()) throw DimensionError("instance_normalize: empty window");
  InstanceNorm r;
  for (double v : y) r.shift += v;
  r.shift /= static_cast<double>(y.size());
  double s = 0;
  for (double v : y) s += (v - r.shift) * (v - r.shift);
  r.scale = std::max(std::sqrt(s / static_cast<double>(y.size())), kInstanceScaleFloor);
  for (double v : y) r.values.push_back((v - r.shift) / r.scale);
  return r;
}

// Window index cache: a text file whose first line is
//   "sonnet-windows N=<rows> L=<L> H=<H> delay=<δ> split=<begin>:<end>"
// followed by one anchor per line.

inline std::string window_cache_header(std::size_t N, const WindowSpec& w, const Range& split) {
  return "sonnet-windows N=" + std::to_string(N) + " L=" + std::to_string(w.L) + " H=" + std::to_string(w.H) +
         " delay=" + std::to_string(w.delay) + " split=" + std::to_string(split.begin) + ":" +
         std::to_string(split.end);
}

inline void save_window_index(const std::string& path, std::size_t N, const WindowSpec& w, const Range& split,
                              const WindowSet& s) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw LoadError("cannot open window cache '" + path + "' for writing");
  f << window_cache_header(N, w, split) << '\n';
  for (auto t : s.anchors) f << t << '\n';
}

/// Cached anchors when the file exists and matches the geometry; nullopt
/// otherwise.
inline std::optional<WindowSet> load_window_index(const std::string& path, std::size_t N, const WindowSpec& w,
                                                  const Range& split) {
  std::ifstream f(path);
  if (!f) return std::nullopt;
  std::string line;
  if (!std::getline(f, line) || line != window_cache_header(N, w, split)) return std::nullopt;
  WindowSet s;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::size_t t = std::stoull(line);
    if (t < w.delay + w.L - 1 || t + w.H >= N) throw LoadError("window cache '" + path + "' holds invalid anchor");
    s.anchors.push_back(t);
  }
  s.too_short = s.anchors.empty();
  return s;
}

inline WindowSet cached_windows(const std::string& path, std::size_t N, const WindowSpec& w, const Range& split) {
  if (!path.empty()) {
    if (auto s = load_window_index(path, N, w, split)) return *s;
  }
  WindowSet s = make_windows(N, w, split);
  if (!path.empty()) save_window_index(path, N, w, split, s);
  return s;
}

}  // namespace sonnet
