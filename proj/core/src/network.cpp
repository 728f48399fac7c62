#include "agest/network.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "agest/error.hpp"
#include "agest/ops.hpp"

namespace agest {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool positive(const std::array<std::size_t, 2>& a) { return a[0] > 0 && a[1] > 0; }

void validate_params(const LayerSpec& layer) {
  const bool ok = std::visit(
      overloaded{
          [](const ConvLayer& c) { return c.out_channels > 0 && positive(c.kernel) && positive(c.stride); },
          [](const MaxPoolLayer& p) { return positive(p.window) && positive(p.stride); },
          [](const FullyConnectedLayer& f) { return f.out_features > 0; },
          [](const auto&) { return true; },
      },
      layer.params);
  if (!ok) throw LayerError(layer.name, "hyperparameters must be positive");
}

Shape apply_shape(const LayerSpec& layer, const Shape& in) {
  auto need_rank = [&](std::size_t rank) {
    if (in.size() != rank) {
      throw LayerError(layer.name, fmt::format("{} expects a rank-{} input, got {}",
                                               to_string(layer.kind()), rank, shape_to_string(in)));
    }
  };
  try {
    return std::visit(
        overloaded{
            [&](const ConvLayer& c) -> Shape {
              need_rank(3);
              return {c.out_channels, ops::conv_output_extent(in[1], c.kernel[0], c.stride[0], c.padding[0]),
                      ops::conv_output_extent(in[2], c.kernel[1], c.stride[1], c.padding[1])};
            },
            [&](const MaxPoolLayer& p) -> Shape {
              need_rank(3);
              if (p.window[0] > in[1] || p.window[1] > in[2]) {
                throw DimensionError(fmt::format("pool window {}x{} larger than input {}", p.window[0],
                                                 p.window[1], shape_to_string(in)));
              }
              return {in[0], ops::conv_output_extent(in[1], p.window[0], p.stride[0], 0),
                      ops::conv_output_extent(in[2], p.window[1], p.stride[1], 0)};
            },
            [&](const ReluLayer&) -> Shape { return in; },
            [&](const FlattenLayer&) -> Shape { return {shape_volume(in)}; },
            [&](const FullyConnectedLayer& f) -> Shape {
              need_rank(1);
              return {f.out_features};
            },
            [&](const SoftmaxLayer&) -> Shape {
              need_rank(1);
              return in;
            },
        },
        layer.params);
  } catch (const DimensionError& e) {
    throw LayerError(layer.name, fmt::format("input {}: {}", shape_to_string(in), e.what()));
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::fully_connected: return "fc";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::conv, LayerKind::maxpool, LayerKind::relu, LayerKind::flatten,
                 LayerKind::fully_connected, LayerKind::softmax}) {
    if (to_string(k) == name) return k;
  }
  if (name == "fully_connected") return LayerKind::fully_connected;
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

NetworkGraph::NetworkGraph(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (input_shape_.size() != 3 || shape_volume(input_shape_) == 0) {
    throw DimensionError("graph input shape must be [C,H,W] with positive dims, got " +
                         shape_to_string(input_shape_));
  }
  std::set<std::string_view> names;
  for (const auto& layer : layers_) {
    if (layer.name.empty()) throw FormatError("layer with empty name");
    if (!names.insert(layer.name).second) throw LayerError(layer.name, "duplicate layer name");
    validate_params(layer);
  }
  propagate_shapes();
}

const LayerSpec* NetworkGraph::find_layer(std::string_view name) const {
  for (const auto& layer : layers_) {
    if (layer.name == name) return &layer;
  }
  return nullptr;
}

std::vector<Shape> NetworkGraph::propagate_shapes() const {
  std::vector<Shape> shapes;
  shapes.reserve(layers_.size());
  Shape current = input_shape_;
  for (const auto& layer : layers_) {
    current = apply_shape(layer, current);
    shapes.push_back(current);
  }
  return shapes;
}

Shape NetworkGraph::output_shape() const {
  auto shapes = propagate_shapes();
  return shapes.empty() ? input_shape_ : shapes.back();
}

std::pair<Shape, Shape> NetworkGraph::expected_weight_shapes(const std::string& name) const {
  Shape in = input_shape_;
  for (const auto& layer : layers_) {
    if (layer.name == name) {
      if (const auto* c = std::get_if<ConvLayer>(&layer.params)) {
        return {{c->out_channels, in[0], c->kernel[0], c->kernel[1]}, {c->out_channels}};
      }
      if (const auto* f = std::get_if<FullyConnectedLayer>(&layer.params)) {
        return {{f->out_features, in[0]}, {f->out_features}};
      }
      throw LayerError(name, "layer has no weights");
    }
    in = apply_shape(layer, in);
  }
  throw LayerError(name, "no such layer");
}

void NetworkGraph::set_weights(const std::string& layer, LayerWeights weights) {
  auto [w_shape, b_shape] = expected_weight_shapes(layer);
  if (weights.weight.shape() != w_shape) {
    throw LayerError(layer, "weight shape " + shape_to_string(weights.weight.shape()) +
                                " does not match expected " + shape_to_string(w_shape));
  }
  if (weights.bias.shape() != b_shape) {
    throw LayerError(layer, "bias shape " + shape_to_string(weights.bias.shape()) +
                                " does not match expected " + shape_to_string(b_shape));
  }
  weights_.insert_or_assign(layer, std::move(weights));
}

bool NetworkGraph::fully_weighted() const {
  for (const auto& layer : layers_) {
    if (layer.has_weights() && !weights_.contains(layer.name)) return false;
  }
  return true;
}

std::size_t NetworkGraph::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) {
    if (!layer.has_weights()) continue;
    auto [w, b] = expected_weight_shapes(layer.name);
    total += shape_volume(w) + shape_volume(b);
  }
  return total;
}

std::size_t NetworkGraph::count_layers(LayerKind kind) const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.kind() == kind;
  return n;
}

NetworkGraph build_vgg16_age(std::size_t num_classes) {
  if (num_classes < 2) throw std::invalid_argument("build_vgg16_age: num_classes must be >= 2");

  struct Block {
    int convs;
    std::size_t channels;
  };
  constexpr Block blocks[] = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};

  std::vector<LayerSpec> layers;
  for (int b = 0; b < 5; ++b) {
    for (int i = 1; i <= blocks[b].convs; ++i) {
      const auto suffix = fmt::format("{}_{}", b + 1, i);
      layers.push_back({"conv" + suffix, ConvLayer{blocks[b].channels, {3, 3}, {1, 1}, {1, 1}}});
      layers.push_back({"relu" + suffix, ReluLayer{}});
    }
    layers.push_back({fmt::format("pool{}", b + 1), MaxPoolLayer{{2, 2}, {2, 2}}});
  }
  layers.push_back({"flatten", FlattenLayer{}});
  layers.push_back({"fc6", FullyConnectedLayer{4096}});
  layers.push_back({"relu6", ReluLayer{}});
  layers.push_back({"fc7", FullyConnectedLayer{4096}});
  layers.push_back({"relu7", ReluLayer{}});
  layers.push_back({"fc8", FullyConnectedLayer{num_classes}});
  layers.push_back({"prob", SoftmaxLayer{}});
  return NetworkGraph({3, 224, 224}, std::move(layers));
}

namespace {

Tensor run_layers(const NetworkGraph& graph, const Tensor& input, std::size_t layer_count) {
  if (input.shape() != graph.input_shape()) {
    throw DimensionError("forward: input shape " + shape_to_string(input.shape()) +
                         " does not match graph input " + shape_to_string(graph.input_shape()));
  }
  Tensor x = input;
  for (std::size_t li = 0; li < layer_count; ++li) {
    const LayerSpec& layer = graph.layers()[li];
    const LayerWeights* w = nullptr;
    if (layer.has_weights()) {
      auto it = graph.weights().find(layer.name);
      if (it == graph.weights().end()) throw LayerError(layer.name, "missing weights");
      w = &it->second;
    }
    try {
      x = std::visit(
          overloaded{
              [&](const ConvLayer& c) {
                return ops::conv2d(x, w->weight, {c.stride, c.padding}, w->bias.data());
              },
              [&](const MaxPoolLayer& p) { return ops::max_pool(x, p.window, p.stride); },
              [&](const ReluLayer&) { return ops::relu(x); },
              [&](const FlattenLayer&) { return ops::flatten(x); },
              [&](const FullyConnectedLayer&) { return ops::fully_connected(x, w->weight, w->bias); },
              [&](const SoftmaxLayer&) { return ops::softmax(x); },
          },
          layer.params);
    } catch (const DimensionError& e) {
      throw LayerError(layer.name, fmt::format("input {}: {}", shape_to_string(x.shape()), e.what()));
    }
  }
  return x;
}

}  // namespace

Tensor forward(const NetworkGraph& graph, const Tensor& input) {
  return run_layers(graph, input, graph.layers().size());
}

Tensor forward_logits(const NetworkGraph& graph, const Tensor& input) {
  std::size_t n = graph.layers().size();
  if (n > 0 && graph.layers().back().kind() == LayerKind::softmax) --n;
  return run_layers(graph, input, n);
}

void init_random_weights(NetworkGraph& graph, unsigned long long seed, float scale) {
  std::mt19937_64 rng(seed);
  // Portable uniform in [-1, 1): the standard distributions are not
  // reproducible across standard library implementations.
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0; };
  for (const auto& layer : graph.layers()) {
    if (!layer.has_weights()) continue;
    auto [w_shape, b_shape] = graph.expected_weight_shapes(layer.name);
    const std::size_t fan_in = shape_volume(w_shape) / w_shape[0];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in)) * scale;
    Tensor w(w_shape), b(b_shape);
    for (float& v : w.data()) v = static_cast<float>(uniform() * limit);
    for (float& v : b.data()) v = static_cast<float>(uniform() * 0.1 * scale);
    graph.set_weights(layer.name, {std::move(w), std::move(b)});
  }
}

// --- graph spec text format ---------------------------------------------------

namespace {

std::array<std::size_t, 2> parse_pair(const std::string& layer, const std::string& key,
                                      const std::string& value) {
  auto parse_one = [&](const std::string& s) -> std::size_t {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size() || s.empty()) {
      throw FormatError("layer '" + layer + "': bad value '" + value + "' for " + key);
    }
    return v;
  };
  const auto x = value.find('x');
  if (x == std::string::npos) {
    const auto v = parse_one(value);
    return {v, v};
  }
  return {parse_one(value.substr(0, x)), parse_one(value.substr(x + 1))};
}

std::string pair_str(const std::array<std::size_t, 2>& a) { return fmt::format("{}x{}", a[0], a[1]); }

}  // namespace

GraphSpecFile parse_graph_spec(std::istream& in) {
  GraphSpecFile out;
  Shape input;
  std::vector<LayerSpec> layers;
  bool saw_header = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head) || head[0] == '#') continue;
    auto fail = [&](const std::string& msg) {
      throw FormatError(fmt::format("graph spec line {}: {}", lineno, msg));
    };
    if (!saw_header) {
      int version = 0;
      if (head != "agest-graph" || !(ls >> version)) fail("expected 'agest-graph <version>' header");
      if (version != 1) fail(fmt::format("unsupported graph spec version {}", version));
      saw_header = true;
      continue;
    }
    if (head == "input") {
      std::size_t c = 0, h = 0, w = 0;
      if (!(ls >> c >> h >> w)) fail("input needs C H W");
      input = {c, h, w};
      continue;
    }
    if (head == "mean") {
      auto& m = out.channel_mean;
      if (!(ls >> m[0] >> m[1] >> m[2])) fail("mean needs three values");
      continue;
    }
    LayerKind kind = LayerKind::relu;
    try {
      kind = layer_kind_from_string(head);
    } catch (const FormatError& e) {
      fail(e.what());
    }
    std::string name;
    if (!(ls >> name)) fail("layer needs a name");
    std::map<std::string, std::string> kv;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + tok + "'");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto take = [&](const char* key, std::array<std::size_t, 2> fallback) {
      auto it = kv.find(key);
      if (it == kv.end()) return fallback;
      auto v = parse_pair(name, key, it->second);
      kv.erase(it);
      return v;
    };
    auto take_required = [&](const char* key) {
      if (!kv.contains(key)) fail("layer '" + name + "' missing " + key);
      return take(key, {0, 0});
    };
    LayerParams params;
    switch (kind) {
      case LayerKind::conv:
        params = ConvLayer{take_required("out")[0], take_required("kernel"), take("stride", {1, 1}),
                           take("pad", {0, 0})};
        break;
      case LayerKind::maxpool: {
        auto window = take_required("window");
        params = MaxPoolLayer{window, take("stride", window)};
        break;
      }
      case LayerKind::fully_connected:
        params = FullyConnectedLayer{take_required("out")[0]};
        break;
      case LayerKind::relu: params = ReluLayer{}; break;
      case LayerKind::flatten: params = FlattenLayer{}; break;
      case LayerKind::softmax: params = SoftmaxLayer{}; break;
    }
    if (!kv.empty()) fail("layer '" + name + "' has unknown parameter '" + kv.begin()->first + "'");
    layers.push_back({std::move(name), std::move(params)});
  }
  if (!saw_header) throw FormatError("graph spec: missing 'agest-graph' header");
  if (input.empty()) throw FormatError("graph spec: missing 'input' line");
  out.graph = NetworkGraph(std::move(input), std::move(layers));
  return out;
}

GraphSpecFile read_graph_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open graph spec '" + path + "'");
  return parse_graph_spec(in);
}

void write_graph_spec(std::ostream& out, const NetworkGraph& graph,
                      const std::array<float, 3>& channel_mean) {
  const auto& in = graph.input_shape();
  out << "agest-graph 1\n";
  out << fmt::format("input {} {} {}\n", in[0], in[1], in[2]);
  out << fmt::format("mean {} {} {}\n", channel_mean[0], channel_mean[1], channel_mean[2]);
  for (const auto& layer : graph.layers()) {
    out << to_string(layer.kind()) << ' ' << layer.name;
    std::visit(overloaded{
                   [&](const ConvLayer& c) {
                     out << fmt::format(" out={} kernel={} stride={} pad={}", c.out_channels,
                                        pair_str(c.kernel), pair_str(c.stride), pair_str(c.padding));
                   },
                   [&](const MaxPoolLayer& p) {
                     out << fmt::format(" window={} stride={}", pair_str(p.window), pair_str(p.stride));
                   },
                   [&](const FullyConnectedLayer& f) { out << " out=" << f.out_features; },
                   [](const auto&) {},
               },
               layer.params);
    out << '\n';
  }
}

void write_graph_spec(const std::string& path, const NetworkGraph& graph,
                      const std::array<float, 3>& channel_mean) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write graph spec '" + path + "'");
  write_graph_spec(out, graph, channel_mean);
}

}  // namespace agest
