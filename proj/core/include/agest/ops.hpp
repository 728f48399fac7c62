#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "agest/tensor.hpp"

// Primitive layer operations. Every function here is pure: it reads its
// arguments, allocates its result and touches no shared state, so any of
// them may be called concurrently.
namespace agest::ops {

struct ConvParams {
  std::array<std::size_t, 2> stride{1, 1};   // {y, x}
  std::array<std::size_t, 2> padding{0, 0};  // {y, x}, zero fill
};

// Output extent along one spatial axis: floor((in + 2*pad - k) / stride) + 1.
// Throws DimensionError if the kernel does not fit the padded input.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad);

// 2-D convolution of a [C,H,W] input with a [C_out,C,kh,kw] kernel.
//
// NOTE: this is cross-correlation, i.e. the kernel is NOT flipped:
//   out[o,y,x] = bias[o] + sum_{c,i,j} in[c, y*sy + i - py, x*sx + j - px] * k[o,c,i,j]
// That is the convention every VGG-style pretrained model assumes. Flip the
// kernel yourself if you need the textbook convolution.
//
// Accumulation is done in double and rounded to float once per output.
// `bias` is either empty or has C_out entries.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const ConvParams& params = {},
              std::span<const float> bias = {});

// Max over whole windows; windows that would overhang the input are never
// evaluated (the trailing rows/cols are dropped as with floor division).
Tensor max_pool(const Tensor& input, std::array<std::size_t, 2> window,
                std::array<std::size_t, 2> stride);

Tensor relu(const Tensor& input);

// output[i] = bias[i] + sum_j weights[i,j] * input[j]
Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias);

// Numerically stable softmax evaluated in double precision. The float
// overload rounds the result back into a tensor for use inside a graph.
std::vector<double> softmax(std::span<const float> logits);
Tensor softmax(const Tensor& logits);

Tensor flatten(const Tensor& input);

}  // namespace agest::ops
