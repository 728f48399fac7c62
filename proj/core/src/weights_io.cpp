#include "agest/weights_io.hpp"

#include <bit>
#include <span>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "agest/error.hpp"

namespace agest {


namespace {

constexpr char kMagic[4] = {'A', 'G', 'E', 'W'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == data_.size(); }

  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw TruncatedError(fmt::format("weight file: reading {}", what), pos_);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  template <class T>
  T le(const char* what) {
    auto b = bytes(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
    return v;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

void write_blob(Writer& w, const std::string& name, const Tensor& t) {
  w.le(static_cast<std::uint16_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.le(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) w.le(static_cast<std::uint32_t>(d));
  for (float v : t.data()) w.f32(v);
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const NetworkGraph& graph) {
  if (!graph.fully_weighted()) throw Error("save_weights: graph is missing weights");
  std::uint32_t count = 0;
  for (const auto& layer : graph.layers()) count += layer.has_weights() ? 2 : 0;

  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le(kWeightFormatVersion);
  w.le(count);
  for (const auto& layer : graph.layers()) {
    if (!layer.has_weights()) continue;
    const auto& lw = graph.weights().at(layer.name);
    write_blob(w, layer.name + ".weight", lw.weight);
    write_blob(w, layer.name + ".bias", lw.bias);
  }
  return w.take();
}

void save_weights(const NetworkGraph& graph, std::ostream& out) {
  const auto bytes = serialize_weights(graph);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("save_weights: write failed");
}

void save_weights(const NetworkGraph& graph, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  save_weights(graph, out);
}

NetworkGraph load_weights(const NetworkGraph& spec, std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError("weight file: bad magic (expected \"AGEW\")");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kWeightFormatVersion) {
    throw FormatError(fmt::format("weight file: unsupported version {} (expected {})", version,
                                  kWeightFormatVersion));
  }
  const auto count = r.le<std::uint32_t>("blob count");

  struct Pending {
    Tensor weight, bias;
    bool has_weight = false, has_bias = false;
  };
  std::map<std::string, Pending> pending;

  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.le<std::uint16_t>("blob name length");
    auto name_bytes = r.bytes(name_len, "blob name");
    const std::string name(name_bytes.begin(), name_bytes.end());
    const auto dot = name.rfind('.');
    const std::string layer = dot == std::string::npos ? name : name.substr(0, dot);
    const std::string role = dot == std::string::npos ? "" : name.substr(dot + 1);
    if (role != "weight" && role != "bias") {
      throw FormatError("weight file: blob '" + name + "' is not <layer>.weight or <layer>.bias");
    }
    const LayerSpec* ls = spec.find_layer(layer);
    if (ls == nullptr || !ls->has_weights()) {
      throw LayerError(layer, "weight file has blob '" + name + "' but the spec has no such parameterized layer");
    }

    const auto rank = r.le<std::uint8_t>("blob rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint32_t>("blob dims");
    auto [w_shape, b_shape] = spec.expected_weight_shapes(layer);
    const Shape& expected = role == "weight" ? w_shape : b_shape;
    if (shape != expected) {
      throw LayerError(layer, fmt::format("blob '{}' has shape {}, spec expects {}", name,
                                          shape_to_string(shape), shape_to_string(expected)));
    }
    const std::size_t n = shape_volume(shape);
    auto raw = r.bytes(n * 4, "blob values");
    std::vector<float> values(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t u = static_cast<std::uint32_t>(raw[4 * k]) |
                              static_cast<std::uint32_t>(raw[4 * k + 1]) << 8 |
                              static_cast<std::uint32_t>(raw[4 * k + 2]) << 16 |
                              static_cast<std::uint32_t>(raw[4 * k + 3]) << 24;
      values[k] = std::bit_cast<float>(u);
    }
    auto& p = pending[layer];
    bool& seen = role == "weight" ? p.has_weight : p.has_bias;
    if (seen) throw LayerError(layer, "duplicate blob '" + name + "'");
    seen = true;
    (role == "weight" ? p.weight : p.bias) = Tensor(std::move(shape), std::move(values));
  }
  if (!r.at_end()) {
    throw FormatError(fmt::format("weight file: {} trailing bytes after last blob at offset {}",
                                  bytes.size() - r.offset(), r.offset()));
  }

  NetworkGraph out = spec;
  out.clear_weights();
  for (const auto& layer : spec.layers()) {
    if (!layer.has_weights()) continue;
    auto it = pending.find(layer.name);
    if (it == pending.end() || !it->second.has_weight || !it->second.has_bias) {
      throw LayerError(layer.name, "weight file is missing weight or bias blob");
    }
    out.set_weights(layer.name, {std::move(it->second.weight), std::move(it->second.bias)});
  }
  return out;
}

NetworkGraph load_weights(const NetworkGraph& spec, std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_weights(spec, bytes);
}

NetworkGraph load_weights(const NetworkGraph& spec, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weight file '" + path + "'");
  return load_weights(spec, in);
}

}  // namespace agest
