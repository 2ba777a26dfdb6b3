#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/model.hpp"
#include "sonnet/numerics/adam.hpp"

namespace sonnet {

// Binary layout, all integers and floats little-endian:
//
//   char[8]  magic "SONNETCK"
//   u32      format version (kCheckpointVersion)
//   u32      byte length n of the metadata text
//   u8[n]    metadata: UTF-8 lines "key=value\n", sorted by key
//   u32      tensor count
//   per tensor:
//     u16    name length m, then u8[m] name
//     u8     dtype (1 = float32, 2 = float64)
//     u8     rank r, then u32[r] extents
//     data   prod(extents) IEEE-754 values of the dtype
//   char[8]  end marker "SONNETND"

inline constexpr char kCheckpointMagic[8] = {'S', 'O', 'N', 'N', 'E', 'T', 'C', 'K'};
inline constexpr char kCheckpointEnd[8] = {'S', 'O', 'N', 'N', 'E', 'T', 'N', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { float32 = 1, float64 = 2 };

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::float32 : DType::float64;
}

inline const char* dtype_name(DType t) { return t == DType::float32 ? "float32" : "float64"; }

/// One stored tensor. Values are held as double, which represents every
/// float32 exactly.
struct TensorRecord {
  std::string name;
  DType dtype = DType::float64;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }

  template <class T>
  void add(const std::string& name, const Tensor<T>& t) {
    TensorRecord r{name, dtype_of<T>(), t.shape(), {}};
    r.data.assign(t.storage().begin(), t.storage().end());
    tensors.push_back(std::move(r));
  }
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic, 8);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  std::string meta;
  for (const auto& [k, v] : ck.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("metadata entry '" + k + "' contains '=' or a newline");
    }
    meta += k + "=" + v + "\n";
  }
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (t.name.size() > 0xFFFF) throw CheckpointError("tensor name too long: " + t.name);
    if (t.shape.size() > 0xFF) throw CheckpointError("tensor rank too large: " + t.name);
    if (shape_size(t.shape) != t.data.size()) throw CheckpointError("tensor '" + t.name + "' size mismatch");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(t.dtype));
    out.push_back(static_cast<char>(t.shape.size()));
    for (auto e : t.shape) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (double v : t.data) {
      if (t.dtype == DType::float32) {
        detail::put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        detail::put_le(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  out.append(kCheckpointEnd, 8);
  return out;
}

inline Checkpoint decode_checkpoint(std::string bytes) {
  detail::Reader r(std::move(bytes));
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  std::istringstream meta(r.bytes(r.get<std::uint32_t>()));
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed metadata line '" + line + "'");
    ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    t.name = r.bytes(r.get<std::uint16_t>());
    const auto dt = r.get<std::uint8_t>();
    if (dt != 1 && dt != 2) throw CheckpointError("tensor '" + t.name + "' has unknown dtype " + std::to_string(dt));
    t.dtype = static_cast<DType>(dt);
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint32_t>());
    const std::size_t n = shape_size(t.shape);
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      t.data[k] = t.dtype == DType::float32 ? static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()))
                                            : std::bit_cast<double>(r.get<std::uint64_t>());
    }
    ck.tensors.push_back(std::move(t));
  }
  if (r.bytes(8) != std::string(kCheckpointEnd, 8)) throw CheckpointError("checkpoint end marker missing");
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint end marker");
  return ck;
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string bytes = encode_checkpoint(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write to '" + path + "' failed");
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

/// Model parameters under their own names plus the model configuration
/// under `model.*` metadata keys.
template <class T>
Checkpoint make_checkpoint(const SonnetModel<T>& model) {
  Checkpoint ck;
  ck.meta = to_kv(model.config());
  ck.meta["dtype"] = dtype_name(dtype_of<T>());
  for (const auto* p : model.parameters()) ck.add(p->name, p->value);
  return ck;
}

/// Element type a checkpoint was written with.
inline DType checkpoint_dtype(const Checkpoint& ck) {
  const auto it = ck.meta.find("dtype");
  if (it == ck.meta.end() || it->second == "float64") return DType::float64;
  if (it->second == "float32") return DType::float32;
  throw CheckpointError("unknown checkpoint dtype '" + it->second + "'");
}

inline ModelConfig checkpoint_config(const Checkpoint& ck) {
  ModelConfig cfg;
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ck.meta) {
    if (k.rfind("model.", 0) == 0) kv[k] = v;
  }
  try {
    apply_kv(cfg, kv);
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint configuration invalid: ") + e.what());
  }
  return cfg;
}

template <class T>
void copy_tensor(const TensorRecord& rec, Tensor<T>& dst) {
  if (rec.shape != dst.shape()) {
    throw CheckpointError("tensor '" + rec.name + "' has shape " + shape_string(rec.shape) + ", expected " +
                          shape_string(dst.shape()));
  }
  for (std::size_t i = 0; i < rec.data.size(); ++i) dst[i] = static_cast<T>(rec.data[i]);
}

/// Copies stored values into `params`; `prefix` selects a namespace such as
/// "best/".
template <class T>
void load_parameters(const Checkpoint& ck, const std::vector<Parameter<T>*>& params, const std::string& prefix = "") {
  for (auto* p : params) {
    const auto* rec = ck.find(prefix + p->name);
    if (rec == nullptr) throw CheckpointError("checkpoint lacks tensor '" + prefix + p->name + "'");
    copy_tensor(*rec, p->value);
  }
}

template <class T>
SonnetModel<T> load_model(const Checkpoint& ck) {
  SonnetModel<T> model(checkpoint_config(ck));
  load_parameters(ck, model.parameters());
  return model;
}

template <class T>
void add_adam_state(Checkpoint& ck, const std::vector<Parameter<T>*>& params, const AdamState<T>& st) {
  ck.meta["adam.step"] = std::to_string(st.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.add("adam.m/" + params[i]->name, st.m[i]);
    ck.add("adam.v/" + params[i]->name, st.v[i]);
  }
}

template <class T>
AdamState<T> load_adam_state(const Checkpoint& ck, const std::vector<Parameter<T>*>& params) {
  AdamState<T> st(params);
  const auto it = ck.meta.find("adam.step");
  if (it == ck.meta.end()) throw CheckpointError("checkpoint has no optimizer state");
  st.step = detail::parse_size("adam.step", it->second);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = ck.find("adam.m/" + params[i]->name);
    const auto* v = ck.find("adam.v/" + params[i]->name);
    if (m == nullptr || v == nullptr) throw CheckpointError("optimizer state missing for '" + params[i]->name + "'");
    copy_tensor(*m, st.m[i]);
    copy_tensor(*v, st.v[i]);
  }
  return st;
}

}  // namespace sonnet
