#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/koopman.hpp"
#include "sonnet/mvca.hpp"
#include "sonnet/numerics/init.hpp"
#include "sonnet/numerics/ops.hpp"
#include "sonnet/wavelet.hpp"

namespace sonnet {

/// The five ablation switches.
struct Ablation {
  bool no_coher = false;
  bool no_mlp = false;
  bool no_mvca = false;
  bool no_embed = false;
  bool no_koop = false;

  bool operator==(const Ablation&) const = default;

  bool any() const { return no_coher || no_mlp || no_mvca || no_embed || no_koop; }

  /// Comma-separated flag names, or "none".
  std::string str() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
      if (!on) return;
      if (!out.empty()) out += ",";
      out += name;
    };
    add(no_coher, "no_coher");
    add(no_mlp, "no_mlp");
    add(no_mvca, "no_mvca");
    add(no_embed, "no_embed");
    add(no_koop, "no_koop");
    return out.empty() ? "none" : out;
  }

  static Ablation parse(const std::string& text) {
    Ablation a;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (item.empty() || item == "none") continue;
      if (item == "no_coher") {
        a.no_coher = true;
      } else if (item == "no_mlp") {
        a.no_mlp = true;
      } else if (item == "no_mvca") {
        a.no_mvca = true;
      } else if (item == "no_embed") {
        a.no_embed = true;
      } else if (item == "no_koop") {
        a.no_koop = true;
      } else if (item == "all") {
        a = {true, true, true, true, true};
      } else {
        throw ConfigError("unknown ablation flag '" + item + "'");
      }
    }
    return a;
  }
};

struct ModelConfig {
  std::size_t L = 28;      // look-back length
  std::size_t H = 7;       // horizon
  std::size_t C = 1;       // exogenous variables
  std::size_t delay = 0;   // reporting delay δ
  double alpha = 0.25;     // exogenous share of the embedding
  std::size_t d = 64;
  std::size_t K = 8;
  double dropout = 0.0;
  bool instance_norm = false;
  Ablation ablate;
  std::uint64_t seed = 42;

  bool operator==(const ModelConfig&) const = default;

  std::size_t exo_width() const { return static_cast<std::size_t>(std::llround(alpha * static_cast<double>(d))); }
  std::size_t endo_width() const { return d - exo_width(); }

  void validate() const {
    if (L < 1) throw ConfigError("model.L must be >= 1");
    if (H < 1) throw ConfigError("model.H must be >= 1");
    if (d < 2) throw ConfigError("model.d must be >= 2");
    if (K < 1) throw ConfigError("model.K must be >= 1");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("model.alpha must lie in [0, 1]");
    const double ad = alpha * static_cast<double>(d);
    if (std::abs(ad - std::round(ad)) > 1e-9) {
      throw ConfigError("model.alpha * model.d must be an integer (alpha=" + std::to_string(alpha) +
                        ", d=" + std::to_string(d) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
    if (C == 0 && (exo_width() > 0 && !ablate.no_embed)) {
      throw ConfigError("model.alpha > 0 needs at least one exogenous variable");
    }
  }
};

/// Number of learnable scalars allocated for `cfg`.
inline std::size_t parameter_count(const ModelConfig& cfg) {
  const std::size_t d = cfg.d, K = cfg.K, H = cfg.H, C = cfg.C;
  std::size_t n = 0;
  if (cfg.ablate.no_embed) {
    n += (C + 1) * d;
  } else {
    if (cfg.exo_width() > 0) n += C * cfg.exo_width();
    n += cfg.endo_width();
  }
  n += 3 * K * d;
  if (!cfg.ablate.no_mvca) {
    n += 4 * d * d;
    if (!cfg.ablate.no_mlp) n += 2 * d * d + 2 * d;
  }
  if (!cfg.ablate.no_koop) n += 2 * K * K + K;
  n += 4 * H * d * 5 + 4 * H;
  n += 2 * H * 4 * H * 3 + 2 * H;
  n += H * 2 * H * 3 + H;
  n += H;
  return n;
}

/// Key/value view of a configuration, used by checkpoints and config files.
inline std::map<std::string, std::string> to_kv(const ModelConfig& c) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  return {{"model.L", std::to_string(c.L)},
          {"model.H", std::to_string(c.H)},
          {"model.C", std::to_string(c.C)},
          {"model.delay", std::to_string(c.delay)},
          {"model.alpha", num(c.alpha)},
          {"model.d", std::to_string(c.d)},
          {"model.K", std::to_string(c.K)},
          {"model.dropout", num(c.dropout)},
          {"model.instance_norm", c.instance_norm ? "true" : "false"},
          {"model.ablate", c.ablate.str()},
          {"model.seed", std::to_string(c.seed)}};
}

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

/// Applies every `model.*` key present in `kv` onto `c`.
inline void apply_kv(ModelConfig& c, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    if (k == "model.L") {
      c.L = detail::parse_size(k, v);
    } else if (k == "model.H") {
      c.H = detail::parse_size(k, v);
    } else if (k == "model.C") {
      c.C = detail::parse_size(k, v);
    } else if (k == "model.delay") {
      c.delay = detail::parse_size(k, v);
    } else if (k == "model.alpha") {
      c.alpha = detail::parse_double(k, v);
    } else if (k == "model.d") {
      c.d = detail::parse_size(k, v);
    } else if (k == "model.K") {
      c.K = detail::parse_size(k, v);
    } else if (k == "model.dropout") {
      c.dropout = detail::parse_double(k, v);
    } else if (k == "model.instance_norm") {
      c.instance_norm = detail::parse_bool(k, v);
    } else if (k == "model.ablate") {
      c.ablate = Ablation::parse(v);
    } else if (k == "model.seed") {
      c.seed = detail::parse_size(k, v);
    } else if (k.rfind("model.", 0) == 0) {
      throw ConfigError("unknown model key '" + k + "'");
    }
  }
}

/// Per-call switches for a forward pass.
struct ForwardOptions {
  bool training = false;
  CounterRng dropout_rng{};
};

inline constexpr std::uint64_t kAttentionDropoutLayer = 1;
inline constexpr double kInstanceNormFloor = 1e-8;

template <class T>
class SonnetModel {
 public:
  SonnetModel() = default;

  explicit SonnetModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const std::size_t d = cfg.d, H = cfg.H;
    if (cfg.ablate.no_embed) {
      w_embed_ = Parameter<T>("embed.W", Tensor<T>(Shape{cfg.C + 1, d}));
    } else {
      if (cfg.exo_width() > 0) w_x_ = Parameter<T>("embed.W_x", Tensor<T>(Shape{cfg.C, cfg.exo_width()}));
      if (cfg.endo_width() > 0) w_y_ = Parameter<T>("embed.W_y", Tensor<T>(Shape{1, cfg.endo_width()}));
    }
    wavelet_ = WaveletBank<T>(cfg.K, cfg.L, d);
    if (!cfg.ablate.no_mvca) mvca_ = MvcaWeights<T>(d, !cfg.ablate.no_mlp);
    if (!cfg.ablate.no_koop) koopman_ = KoopmanParams<T>(cfg.K);
    conv1_w_ = Parameter<T>("decoder.conv1.weight", Tensor<T>(Shape{4 * H, d, 5}));
    conv1_b_ = Parameter<T>("decoder.conv1.bias", Tensor<T>(Shape{4 * H}));
    conv2_w_ = Parameter<T>("decoder.conv2.weight", Tensor<T>(Shape{2 * H, 4 * H, 3}));
    conv2_b_ = Parameter<T>("decoder.conv2.bias", Tensor<T>(Shape{2 * H}));
    conv3_w_ = Parameter<T>("decoder.conv3.weight", Tensor<T>(Shape{H, 2 * H, 3}));
    conv3_b_ = Parameter<T>("decoder.conv3.bias", Tensor<T>(Shape{H}));
    w_z_ = Parameter<T>("decoder.W_z", Tensor<T>(Shape{H, 1}));
    init(cfg.seed);
  }

  const ModelConfig& config() const noexcept { return cfg_; }

  /// Re-draws every parameter from the seed. Each parameter has its own
  /// stream keyed by its name, so ablated variants share the values of the
  /// parameters they keep.
  void init(std::uint64_t seed) {
    const std::uint64_t root = set_seed(seed).init;
    auto xavier = [root](Parameter<T>& p, std::size_t fan_in, std::size_t fan_out) {
      auto rng = param_rng(root, p.name);
      fill_xavier_uniform(p.value, rng, fan_in, fan_out);
    };
    const std::size_t d = cfg_.d, H = cfg_.H;
    if (has_embed_w()) xavier(w_embed_, cfg_.C + 1, d);
    if (has_w_x()) xavier(w_x_, cfg_.C, cfg_.exo_width());
    if (has_w_y()) xavier(w_y_, 1, cfg_.endo_width());
    wavelet_.init(root);
    if (!cfg_.ablate.no_mvca) mvca_.init(root);
    if (!cfg_.ablate.no_koop) koopman_.init(root);
    xavier(conv1_w_, d * 5, 4 * H * 5);
    xavier(conv2_w_, 4 * H * 3, 2 * H * 3);
    xavier(conv3_w_, 2 * H * 3, H * 3);
    for (auto* b : {&conv1_b_, &conv2_b_, &conv3_b_}) b->value.fill(T(0));
    xavier(w_z_, H, 1);
  }

  /// Every learnable tensor in a fixed order.
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    if (has_embed_w()) out.push_back(&w_embed_);
    if (has_w_x()) out.push_back(&w_x_);
    if (has_w_y()) out.push_back(&w_y_);
    for (auto* p : wavelet_.parameters()) out.push_back(p);
    if (!cfg_.ablate.no_mvca) {
      for (auto* p : mvca_.parameters()) out.push_back(p);
    }
    if (!cfg_.ablate.no_koop) {
      for (auto* p : koopman_.parameters()) out.push_back(p);
    }
    for (auto* p : {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &conv3_w_, &conv3_b_, &w_z_}) out.push_back(p);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    for (auto* p : const_cast<SonnetModel*>(this)->parameters()) out.push_back(p);
    return out;
  }

  Parameter<T>* find(const std::string& name) {
    for (auto* p : parameters()) {
      if (p->name == name) return p;
    }
    return nullptr;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  WaveletBank<T>& wavelet() { return wavelet_; }
  MvcaWeights<T>& mvca() { return mvca_; }
  KoopmanParams<T>& koopman() { return koopman_; }

  /// Joint embedding E of shape [B, L, d]. X: [B, L, C] (ignored when C = 0),
  /// y: [B, L, 1].
  Var<T> embed(Tape<T>& tape, const Var<T>* X, const Var<T>& y) {
    if (cfg_.ablate.no_embed) {
      const Var<T> Z = X != nullptr ? concat<T>({*X, y}, -1) : y;
      return matmul(Z, tape.leaf(w_embed_));
    }
    std::vector<Var<T>> parts;
    if (has_w_x()) parts.push_back(matmul(*X, tape.leaf(w_x_)));
    if (has_w_y()) parts.push_back(matmul(y, tape.leaf(w_y_)));
    return parts.size() == 1 ? parts.front() : concat(parts, -1);
  }

  /// Convolutional head: R [B, L, d] -> [B, H].
  Var<T> decode(Tape<T>& tape, const Var<T>& R) {
    const std::size_t B = R.shape()[0];
    Var<T> z = permute(R, {0, 2, 1});
    z = check_finite(gelu(conv1d(z, tape.leaf(conv1_w_), tape.leaf(conv1_b_), 2)), "decoder.conv1");
    z = check_finite(gelu(conv1d(z, tape.leaf(conv2_w_), tape.leaf(conv2_b_), 1)), "decoder.conv2");
    z = check_finite(conv1d(z, tape.leaf(conv3_w_), tape.leaf(conv3_b_), 1), "decoder.conv3");
    const Var<T> pooled = adaptive_avg_pool(z, cfg_.H);  // [B, H, H]
    return check_finite(reshape(matmul(pooled, tape.leaf(w_z_)), {B, cfg_.H}), "decoder.output");
  }

  /// Forecast for a batch. X: [B, L, C] or [L, C]; y: lagged target [B, L]
  /// or [L]. Returns [B, H] (or [H] for unbatched input).
  Var<T> forward(Tape<T>& tape, const Tensor<T>& X, const Tensor<T>& y, const ForwardOptions& fo = {}) {
    const std::size_t L = cfg_.L, C = cfg_.C;
    const bool batched = y.rank() == 2;
    if (!(y.rank() == 1 || y.rank() == 2) || y.shape().back() != L) {
      throw DimensionError("forward: y must be [B, " + std::to_string(L) + "] or [" + std::to_string(L) + "], got " +
                           shape_string(y.shape()));
    }
    const std::size_t B = batched ? y.shape()[0] : 1;
    const bool uses_x = C > 0 && (cfg_.ablate.no_embed || has_w_x());
    if (uses_x) {
      const Shape want = batched ? Shape{B, L, C} : Shape{L, C};
      if (X.shape() != want) {
        throw DimensionError("forward: X must be " + shape_string(want) + ", got " + shape_string(X.shape()));
      }
    }
    if (!y.all_finite()) throw NumericError("input", "non-finite endogenous input");

    Tensor<T> yin = y.reshaped({B, L, 1});
    Tensor<T> shift(Shape{B, 1}), spread(Shape{B, 1}, T(1));
    if (cfg_.instance_norm) {
      for (std::size_t b = 0; b < B; ++b) {
        double m = 0, v = 0;
        for (std::size_t i = 0; i < L; ++i) m += yin[b * L + i];
        m /= static_cast<double>(L);
        for (std::size_t i = 0; i < L; ++i) v += (yin[b * L + i] - m) * (yin[b * L + i] - m);
        const double sd = std::max(std::sqrt(v / static_cast<double>(L)), kInstanceNormFloor);
        shift[b] = static_cast<T>(m);
        spread[b] = static_cast<T>(sd);
        for (std::size_t i = 0; i < L; ++i) yin[b * L + i] = static_cast<T>((yin[b * L + i] - m) / sd);
      }
    }
    const Var<T> yv = tape.constant(std::move(yin));
    Var<T> xv{};
    if (uses_x) {
      if (!X.all_finite()) throw NumericError("input", "non-finite exogenous input");
      xv = tape.constant(X.reshaped({B, L, C}));
    }

    const Var<T> E = check_finite(embed(tape, uses_x ? &xv : nullptr, yv), "embed");
    const Var<T> atoms = check_finite(make_atoms(tape, wavelet_), "wavelet");
    const Var<T> P = check_finite(project(E, atoms), "wavelet.project");
    Var<T> O = P;
    if (!cfg_.ablate.no_mvca) {
      MvcaOptions opt;
      opt.coherence = !cfg_.ablate.no_coher;
      opt.mlp = !cfg_.ablate.no_mlp;
      opt.dropout = cfg_.dropout;
      O = check_finite(mvca_forward(P, bind(tape, mvca_), opt, fo.dropout_rng, fo.training), "mvca");
    }
    Var<T> O_real = O;
    if (!cfg_.ablate.no_koop) {
      O_real = check_finite(evolve(O, build_operator(tape, koopman_)).re, "koopman");
    }
    const Var<T> R = check_finite(reconstruct(O_real, atoms), "reconstruct");
    Var<T> out = decode(tape, R);
    if (cfg_.instance_norm) {
      out = add(mul(out, tape.constant(std::move(spread))), tape.constant(std::move(shift)));
    }
    return batched ? out : reshape(out, {cfg_.H});
  }

 private:
  bool has_embed_w() const { return cfg_.ablate.no_embed; }
  bool has_w_x() const { return !cfg_.ablate.no_embed && cfg_.exo_width() > 0; }
  bool has_w_y() const { return !cfg_.ablate.no_embed && cfg_.endo_width() > 0; }

  ModelConfig cfg_;
  Parameter<T> w_x_, w_y_, w_embed_;
  WaveletBank<T> wavelet_;
  MvcaWeights<T> mvca_;
  KoopmanParams<T> koopman_;
  Parameter<T> conv1_w_, conv1_b_, conv2_w_, conv2_b_, conv3_w_, conv3_b_, w_z_;
};

}  // namespace sonnet
