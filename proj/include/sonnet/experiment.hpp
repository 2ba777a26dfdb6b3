#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sonnet/data.hpp"
#include "sonnet/errors.hpp"
#include "sonnet/model.hpp"
#include "sonnet/trainer.hpp"

namespace sonnet {

// Configuration grammar: one "key = value" pair per line. Text after '#'
// is a comment; blank lines are ignored; surrounding whitespace is trimmed.
// A key may appear once per file. Overrides ("key=value") replace file
// values.
//
//   data.path          CSV file, relative to the config file's directory
//   data.timestamp     timestamp column name            (timestamp)
//   data.target        target column name               (y)
//   data.exogenous     comma list; empty = all others   ()
//   data.resample      mean over this many rows         (1)
//   data.window_cache  window index cache prefix        ()
//   split.train        row range "begin:end", half-open
//   split.val          row range
//   split.test         row range of the single test season "test"
//   split.test.<name>  row range of test season <name>
//   model.*            L, H, delay, alpha, d, K, dropout, instance_norm,
//                      ablate, seed (model.C is taken from the data)
//   train.max_epochs / patience / batch / lr / seed
//   train.dtype        float32 or float64               (float32)
//   train.workers      grid-search threads              (1)
//   seed               sets model.seed and train.seed
//   eval.persistence   add persistence baseline rows    (true)
//   eval.seasonal_period  seasonal baseline period, 0 = off (0)
//   grid.alpha / grid.K / grid.dropout / grid.lr   comma lists
//   output.dir         output directory                 (out)
//
// A range end may be left empty ("1700:") to mean the last row.

inline constexpr std::size_t kOpenEnd = std::numeric_limits<std::size_t>::max();

struct Season {
  std::string name;
  Range rows;
};

struct ExperimentConfig {
  std::string dataset;
  CsvSchema schema;
  std::size_t resample = 1;
  std::string window_cache;
  Range train, val;
  std::vector<Season> test;
  ModelConfig model;
  TrainConfig train_cfg;
  std::string dtype = "float32";
  std::size_t workers = 1;
  bool persistence = true;
  std::size_t seasonal_period = 0;
  GridAxes grid;
  std::string output_dir = "out";
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

inline std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& where) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + text + "'");
  auto key = trim(text.substr(0, eq));
  if (key.empty()) throw ConfigError(where + ": empty key");
  return {key, trim(text.substr(eq + 1))};
}

inline Range parse_range(const std::string& key, const std::string& v) {
  const auto colon = v.find(':');
  if (colon == std::string::npos) throw ConfigError("'" + key + "' expects 'begin:end', got '" + v + "'");
  Range r;
  r.begin = parse_size(key, trim(v.substr(0, colon)));
  const auto end = trim(v.substr(colon + 1));
  r.end = end.empty() ? kOpenEnd : parse_size(key, end);
  if (r.end <= r.begin) throw ConfigError("'" + key + "' is empty: " + v);
  return r;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class F>
auto parse_list(const std::string& key, const std::string& v, F parse) {
  std::vector<decltype(parse(key, v))> out;
  for (const auto& item : split_list(v)) out.push_back(parse(key, item));
  if (out.empty()) throw ConfigError("'" + key + "' must list at least one value");
  return out;
}

inline std::string range_text(const Range& r) {
  return std::to_string(r.begin) + ":" + (r.end == kOpenEnd ? std::string() : std::to_string(r.end));
}

}  // namespace detail

inline KeyValues parse_config_text(const std::string& text, const std::string& source = "<config>") {
  KeyValues kv;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    auto entry = detail::split_assignment(line, where);
    for (const auto& [k, v] : kv) {
      if (k == entry.first) throw ConfigError(where + ": duplicate key '" + k + "'");
    }
    kv.push_back(std::move(entry));
  }
  return kv;
}

/// Applies `overrides` ("key=value") on top of `kv`.
inline KeyValues apply_overrides(KeyValues kv, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    auto [k, v] = detail::split_assignment(o, "--set");
    auto it = std::find_if(kv.begin(), kv.end(), [&](const auto& e) { return e.first == k; });
    if (it != kv.end()) {
      it->second = v;
    } else {
      kv.emplace_back(k, v);
    }
  }
  return kv;
}

/// Builds an experiment from key/value pairs. Relative dataset paths are
/// resolved against `base_dir`.
inline ExperimentConfig build_experiment(const KeyValues& kv, const std::string& base_dir = "") {
  using detail::parse_double;
  using detail::parse_size;
  ExperimentConfig c;
  std::map<std::string, std::string> model_kv;
  std::string seed_all;
  bool have_train = false, have_val = false;
  for (const auto& [k, v] : kv) {
    if (k == "data.path") {
      std::filesystem::path p(v);
      if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
      c.dataset = p.lexically_normal().string();
    } else if (k == "data.timestamp") {
      c.schema.timestamp = v;
    } else if (k == "data.target") {
      c.schema.target = v;
    } else if (k == "data.exogenous") {
      c.schema.exogenous = detail::split_list(v);
    } else if (k == "data.resample") {
      c.resample = parse_size(k, v);
    } else if (k == "data.window_cache") {
      c.window_cache = v;
    } else if (k == "split.train") {
      c.train = detail::parse_range(k, v);
      have_train = true;
    } else if (k == "split.val") {
      c.val = detail::parse_range(k, v);
      have_val = true;
    } else if (k == "split.test") {
      c.test.push_back({"test", detail::parse_range(k, v)});
    } else if (k.rfind("split.test.", 0) == 0) {
      c.test.push_back({k.substr(11), detail::parse_range(k, v)});
    } else if (k == "model.C") {
      throw ConfigError("'model.C' is derived from the dataset's exogenous columns and cannot be set");
    } else if (k.rfind("model.", 0) == 0) {
      model_kv[k] = v;
    } else if (k == "seed") {
      seed_all = v;
    } else if (k == "train.max_epochs") {
      c.train_cfg.max_epochs = parse_size(k, v);
    } else if (k == "train.patience") {
      c.train_cfg.patience = parse_size(k, v);
    } else if (k == "train.batch") {
      c.train_cfg.batch = parse_size(k, v);
    } else if (k == "train.lr") {
      c.train_cfg.lr = parse_double(k, v);
    } else if (k == "train.seed") {
      c.train_cfg.seed = parse_size(k, v);
    } else if (k == "train.dtype") {
      if (v != "float32" && v != "float64") throw ConfigError("'train.dtype' must be float32 or float64");
      c.dtype = v;
    } else if (k == "train.workers") {
      c.workers = std::max<std::size_t>(1, parse_size(k, v));
    } else if (k == "eval.persistence") {
      c.persistence = detail::parse_bool(k, v);
    } else if (k == "eval.seasonal_period") {
      c.seasonal_period = parse_size(k, v);
    } else if (k == "grid.alpha") {
      c.grid.alpha = detail::parse_list(k, v, parse_double);
    } else if (k == "grid.K") {
      c.grid.K = detail::parse_list(k, v, parse_size);
    } else if (k == "grid.dropout") {
      c.grid.dropout = detail::parse_list(k, v, parse_double);
    } else if (k == "grid.lr") {
      c.grid.lr = detail::parse_list(k, v, parse_double);
    } else if (k == "output.dir") {
      std::filesystem::path p(v);
      if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
      c.output_dir = p.lexically_normal().string();
    } else {
      throw ConfigError("unknown configuration key '" + k + "'");
    }
  }
  if (!seed_all.empty()) {
    model_kv["model.seed"] = seed_all;
    c.train_cfg.seed = parse_size("seed", seed_all);
  }
  apply_kv(c.model, model_kv);
  if (c.dataset.empty()) throw ConfigError("'data.path' is required");
  if (!have_train || !have_val) throw ConfigError("'split.train' and 'split.val' are required");
  if (c.resample == 0) throw ConfigError("'data.resample' must be >= 1");
  c.train_cfg.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open configuration file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const auto base = std::filesystem::path(path).parent_path().string();
  return build_experiment(apply_overrides(parse_config_text(ss.str(), path), overrides), base);
}

/// Replaces open range ends with `rows` and checks that the splits are
/// ordered train < val < test seasons, disjoint and inside the data.
inline void resolve_splits(ExperimentConfig& c, std::size_t rows) {
  auto close = [&](Range& r, const std::string& name) {
    if (r.end == kOpenEnd) r.end = rows;
    if (r.end > rows) {
      throw ConfigError("split '" + name + "' ends at row " + std::to_string(r.end) + " but the data has " +
                        std::to_string(rows) + " rows");
    }
    if (r.empty()) throw ConfigError("split '" + name + "' is empty");
  };
  close(c.train, "train");
  close(c.val, "val");
  for (auto& s : c.test) close(s.rows, "test." + s.name);
  if (c.train.end > c.val.begin) throw ConfigError("split.train must end before split.val begins");
  std::vector<Season> sorted = c.test;
  std::sort(sorted.begin(), sorted.end(), [](const Season& a, const Season& b) { return a.rows.begin < b.rows.begin; });
  std::size_t prev = c.val.end;
  std::string prev_name = "val";
  for (const auto& s : sorted) {
    if (s.rows.begin < prev) {
      throw ConfigError("test season '" + s.name + "' overlaps or precedes '" + prev_name + "'");
    }
    prev = s.rows.end;
    prev_name = "test." + s.name;
  }
}

/// Every setting as "key = value" lines, parseable by parse_config_text.
inline std::string resolved_config_text(const ExperimentConfig& c) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto join = [](const auto& xs, auto fmt) {
    std::string s;
    for (const auto& x : xs) s += (s.empty() ? "" : ",") + fmt(x);
    return s;
  };
  std::ostringstream o;
  o << "data.path = " << c.dataset << '\n';
  o << "data.timestamp = " << c.schema.timestamp << '\n';
  o << "data.target = " << c.schema.target << '\n';
  o << "data.exogenous = " << join(c.schema.exogenous, [](const std::string& s) { return s; }) << '\n';
  o << "data.resample = " << c.resample << '\n';
  o << "data.window_cache = " << c.window_cache << '\n';
  o << "split.train = " << detail::range_text(c.train) << '\n';
  o << "split.val = " << detail::range_text(c.val) << '\n';
  for (const auto& s : c.test) o << "split.test." << s.name << " = " << detail::range_text(s.rows) << '\n';
  for (const auto& [k, v] : to_kv(c.model)) {
    if (k != "model.C") o << k << " = " << v << '\n';
  }
  o << "train.max_epochs = " << c.train_cfg.max_epochs << '\n';
  o << "train.patience = " << c.train_cfg.patience << '\n';
  o << "train.batch = " << c.train_cfg.batch << '\n';
  o << "train.lr = " << num(c.train_cfg.lr) << '\n';
  o << "train.seed = " << c.train_cfg.seed << '\n';
  o << "train.dtype = " << c.dtype << '\n';
  o << "train.workers = " << c.workers << '\n';
  o << "eval.persistence = " << (c.persistence ? "true" : "false") << '\n';
  o << "eval.seasonal_period = " << c.seasonal_period << '\n';
  o << "grid.alpha = " << join(c.grid.alpha, num) << '\n';
  o << "grid.K = " << join(c.grid.K, [](std::size_t k) { return std::to_string(k); }) << '\n';
  o << "grid.dropout = " << join(c.grid.dropout, num) << '\n';
  o << "grid.lr = " << join(c.grid.lr, num) << '\n';
  o << "output.dir = " << c.output_dir << '\n';
  return o.str();
}

}  // namespace sonnet
