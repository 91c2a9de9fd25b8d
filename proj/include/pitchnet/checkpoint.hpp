#ifndef PITCHNET_CHECKPOINT_HPP
#define PITCHNET_CHECKPOINT_HPP

// Binary checkpoint layout (all integers little-endian):
//
//   "MGCK" | u32 version | u32 meta_len | meta_len bytes of UTF-8 JSON
//   | u32 tensor_count | tensor_count x tensor
//
//   tensor = u16 name_len | name | u8 rank | rank x u32 dim
//            | prod(dims) x f64 (IEEE-754, row-major)
//
// Tensors are the network parameters followed by the optimizer accumulators
// (prefixed "rmsprop."), both in NetworkParams::for_each order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pitchnet/dataset.hpp"
#include "pitchnet/io.hpp"
#include "pitchnet/network.hpp"
#include "pitchnet/optim.hpp"

namespace pitchnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'M', 'G', 'C', 'K'};

struct Checkpoint {
  std::uint64_t epoch = 0;
  double loss = 0.0;
  NetworkSpec spec;
  WindowSpec window;
  std::string vocab_hash;
  RmsPropConfig optimizer;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::string shuffle_rng;
  std::string dropout_rng;
  std::uint64_t best_epoch = 0;
  double best_loss = 0.0;
  // Written on interrupt mid-epoch; `epoch` then counts completed epochs only.
  bool partial = false;
  NetworkParams params;
  NetworkParams mean_square;

  bool operator==(const Checkpoint& o) const {
    return epoch == o.epoch && std::bit_cast<std::uint64_t>(loss) == std::bit_cast<std::uint64_t>(o.loss) &&
           spec == o.spec && window.window_len == o.window.window_len && window.stride == o.window.stride &&
           vocab_hash == o.vocab_hash && optimizer == o.optimizer && batch_size == o.batch_size && seed == o.seed &&
           shuffle_rng == o.shuffle_rng && dropout_rng == o.dropout_rng && best_epoch == o.best_epoch &&
           std::bit_cast<std::uint64_t>(best_loss) == std::bit_cast<std::uint64_t>(o.best_loss) && partial == o.partial &&
           params == o.params && mean_square == o.mean_square;
  }
};

inline nlohmann::json to_json(const NetworkSpec& s) {
  return {{"lstm_width", s.lstm_width}, {"dense_width", s.dense_width}, {"vocab_size", s.vocab_size},
          {"dropout", s.dropout},       {"window_len", s.window_len},   {"dense_relu", s.dense_relu}};
}

inline NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.lstm_width = j.at("lstm_width").get<std::size_t>();
  s.dense_width = j.at("dense_width").get<std::size_t>();
  s.vocab_size = j.at("vocab_size").get<std::size_t>();
  s.dropout = j.at("dropout").get<double>();
  s.window_len = j.at("window_len").get<std::size_t>();
  s.dense_relu = j.at("dense_relu").get<bool>();
  return s;
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) fail(ErrorCode::TruncatedFile, "checkpoint ends unexpectedly");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline void write_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.raw(name.data(), name.size());
  w.u8(static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
  for (double v : t.data) w.f64(v);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  const nlohmann::json meta = {
      {"epoch", c.epoch},
      {"loss", c.loss},
      {"spec", to_json(c.spec)},
      {"window", {{"window_len", c.window.window_len}, {"stride", c.window.stride}}},
      {"vocab_hash", c.vocab_hash},
      {"optimizer",
       {{"learning_rate", c.optimizer.learning_rate}, {"decay", c.optimizer.decay}, {"epsilon", c.optimizer.epsilon}}},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"rng", {{"shuffle", c.shuffle_rng}, {"dropout", c.dropout_rng}}},
      {"best_epoch", c.best_epoch},
      {"best_loss", c.best_loss},
      {"partial", c.partial},
  };
  const std::string meta_text = meta.dump();

  detail::ByteWriter w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.raw(meta_text.data(), meta_text.size());
  w.u32(static_cast<std::uint32_t>(2 * (3 * kLstmLayers + 4)));
  c.params.for_each([&](const std::string& name, const Tensor& t) { detail::write_tensor(w, name, t); });
  c.mean_square.for_each([&](const std::string& name, const Tensor& t) { detail::write_tensor(w, "rmsprop." + name, t); });
  return std::move(w.bytes());
}

inline Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, "not a checkpoint file (bad magic)");
  }
  detail::ByteReader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + " unsupported");
  }
  const std::string meta_text = r.str(r.u32());
  Checkpoint c;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    c.epoch = meta.at("epoch").get<std::uint64_t>();
    c.loss = meta.at("loss").get<double>();
    c.spec = network_spec_from_json(meta.at("spec"));
    c.window.window_len = meta.at("window").at("window_len").get<std::size_t>();
    c.window.stride = meta.at("window").at("stride").get<std::size_t>();
    c.vocab_hash = meta.at("vocab_hash").get<std::string>();
    const auto& opt = meta.at("optimizer");
    c.optimizer = {opt.at("learning_rate").get<double>(), opt.at("decay").get<double>(), opt.at("epsilon").get<double>()};
    c.batch_size = meta.at("batch_size").get<std::size_t>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.shuffle_rng = meta.at("rng").at("shuffle").get<std::string>();
    c.dropout_rng = meta.at("rng").at("dropout").get<std::string>();
    c.best_epoch = meta.at("best_epoch").get<std::uint64_t>();
    c.best_loss = meta.at("best_loss").get<double>();
    c.partial = meta.at("partial").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::BadMagic, std::string("checkpoint metadata unreadable: ") + e.what());
  }

  c.params = zero_params(c.spec);
  c.mean_square = zero_params(c.spec);
  std::vector<std::pair<std::string, Tensor*>> slots;
  c.params.for_each([&](const std::string& name, Tensor& t) { slots.emplace_back(name, &t); });
  c.mean_square.for_each([&](const std::string& name, Tensor& t) { slots.emplace_back("rmsprop." + name, &t); });

  const std::uint32_t count = r.u32();
  if (count != slots.size()) fail(ErrorCode::ShapeMismatch, "checkpoint holds " + std::to_string(count) + " tensors");
  for (auto& [expected_name, tensor] : slots) {
    const std::string name = r.str(r.u16());
    if (name != expected_name) fail(ErrorCode::ShapeMismatch, "unexpected tensor '" + name + "', wanted '" + expected_name + "'");
    Shape shape(r.u8());
    for (auto& d : shape) d = r.u32();
    if (shape != tensor->shape) {
      fail(ErrorCode::ShapeMismatch, name + " stored as " + shape_string(shape) + " but spec implies " + shape_string(tensor->shape));
    }
    for (double& v : tensor->data) v = r.f64();
  }
  if (!r.at_end()) fail(ErrorCode::ShapeMismatch, "trailing bytes after last tensor");
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace pitchnet

#endif  // PITCHNET_CHECKPOINT_HPP
