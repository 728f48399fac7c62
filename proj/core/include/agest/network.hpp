#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "agest/tensor.hpp"

namespace agest {

struct ConvLayer {
  std::size_t out_channels = 0;
  std::array<std::size_t, 2> kernel{3, 3};
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct MaxPoolLayer {
  std::array<std::size_t, 2> window{2, 2};
  std::array<std::size_t, 2> stride{2, 2};
  friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};

struct ReluLayer {
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};

struct FlattenLayer {
  friend bool operator==(const FlattenLayer&, const FlattenLayer&) = default;
};

struct FullyConnectedLayer {
  std::size_t out_features = 0;
  friend bool operator==(const FullyConnectedLayer&, const FullyConnectedLayer&) = default;
};

struct SoftmaxLayer {
  friend bool operator==(const SoftmaxLayer&, const SoftmaxLayer&) = default;
};

using LayerParams =
    std::variant<ConvLayer, MaxPoolLayer, ReluLayer, FlattenLayer, FullyConnectedLayer, SoftmaxLayer>;

enum class LayerKind { conv, maxpool, relu, flatten, fully_connected, softmax };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

struct LayerSpec {
  std::string name;
  LayerParams params;

  LayerKind kind() const noexcept { return static_cast<LayerKind>(params.index()); }
  bool has_weights() const noexcept {
    return kind() == LayerKind::conv || kind() == LayerKind::fully_connected;
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct LayerWeights {
  Tensor weight;
  Tensor bias;
  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

// Ordered layer list plus the weights of its parameterized layers. A graph
// without weights is a "spec"; load_weights() turns it into a runnable model.
class NetworkGraph {
 public:
  NetworkGraph() = default;
  NetworkGraph(Shape input_shape, std::vector<LayerSpec> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const std::map<std::string, LayerWeights>& weights() const noexcept { return weights_; }

  const LayerSpec* find_layer(std::string_view name) const;

  // Shape each layer produces, in layer order. Throws LayerError naming the
  // first layer whose input shape it cannot accept.
  std::vector<Shape> propagate_shapes() const;
  Shape output_shape() const;

  // Expected {weight, bias} shapes for a parameterized layer.
  std::pair<Shape, Shape> expected_weight_shapes(const std::string& layer) const;

  void set_weights(const std::string& layer, LayerWeights weights);
  bool fully_weighted() const;
  void clear_weights() { weights_.clear(); }

  std::size_t parameter_count() const;
  std::size_t count_layers(LayerKind kind) const;

  friend bool operator==(const NetworkGraph&, const NetworkGraph&) = default;

 private:
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::map<std::string, LayerWeights> weights_;
};

// Canonical VGG-16: five blocks of 3x3/pad-1 convolutions (2,2,3,3,3 layers
// with 64/128/256/512/512 channels, ReLU after each, 2x2/stride-2 max-pool
// after each block), flatten, two FC-4096+ReLU, FC-num_classes, softmax.
// Input is 3x224x224. The result has no weights.
NetworkGraph build_vgg16_age(std::size_t num_classes = 101);

// Runs every layer in order. Throws LayerError on missing weights or a shape
// break, naming the offending layer.
Tensor forward(const NetworkGraph& graph, const Tensor& input);

// Same as forward() but stops before a trailing softmax layer, returning the
// raw logits. Graphs without a trailing softmax are run in full.
Tensor forward_logits(const NetworkGraph& graph, const Tensor& input);

// Deterministic pseudo-random weights (He-style scaling times `scale`) for
// tests, benchmarks and demo models.
void init_random_weights(NetworkGraph& graph, unsigned long long seed, float scale = 1.0f);

// Graph spec text format:
//
//   agest-graph 1
//   input 3 224 224
//   mean 0 0 0                      (optional per-channel input mean)
//   conv conv1_1 out=64 kernel=3x3 stride=1x1 pad=1x1
//   relu relu1_1
//   maxpool pool1 window=2x2 stride=2x2
//   flatten flatten
//   fc fc8 out=101
//   softmax prob
//
// Blank lines and lines starting with '#' are ignored.
struct GraphSpecFile {
  NetworkGraph graph;
  std::array<float, 3> channel_mean{0.0f, 0.0f, 0.0f};
};

GraphSpecFile parse_graph_spec(std::istream& in);
GraphSpecFile read_graph_spec(const std::string& path);
void write_graph_spec(std::ostream& out, const NetworkGraph& graph,
                      const std::array<float, 3>& channel_mean = {0.0f, 0.0f, 0.0f});
void write_graph_spec(const std::string& path, const NetworkGraph& graph,
                      const std::array<float, 3>& channel_mean = {0.0f, 0.0f, 0.0f});

}  // namespace agest
