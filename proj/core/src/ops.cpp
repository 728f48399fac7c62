#include "agest/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "agest/error.hpp"

namespace agest::ops {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_to_string(t.shape()));
  }
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": input contains NaN or Inf");
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (stride == 0) throw DimensionError("stride must be positive");
  if (kernel == 0) throw DimensionError("kernel extent must be positive");
  const std::size_t padded = in + 2 * pad;
  if (kernel > padded) {
    throw DimensionError("kernel extent " + std::to_string(kernel) +
                         " exceeds padded input extent " + std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const ConvParams& params,
              std::span<const float> bias) {
  require_rank(input, 3, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  require_finite(input, "conv2d");

  const std::size_t channels = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
  const std::size_t out_c = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != channels) {
    throw DimensionError("conv2d: input " + shape_to_string(input.shape()) + " has " +
                         std::to_string(channels) + " channels but kernel " +
                         shape_to_string(kernel.shape()) + " expects " +
                         std::to_string(kernel.dim(1)));
  }
  if (!bias.empty() && bias.size() != out_c) {
    throw DimensionError("conv2d: bias has " + std::to_string(bias.size()) +
                         " entries, kernel has " + std::to_string(out_c) + " output channels");
  }

  const auto [sy, sx] = params.stride;
  const auto [py, px] = params.padding;
  const std::size_t out_h = conv_output_extent(in_h, kh, sy, py);
  const std::size_t out_w = conv_output_extent(in_w, kw, sx, px);

  Tensor out({out_c, out_h, out_w});
  const float* in = input.data().data();
  const float* k = kernel.data().data();
  float* o = out.data().data();

  for (std::size_t oc = 0; oc < out_c; ++oc) {
    const float* k_oc = k + oc * channels * kh * kw;
    const double b = bias.empty() ? 0.0 : static_cast<double>(bias[oc]);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      // Rows of the window that land inside the unpadded input.
      const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(oy * sy) - static_cast<std::ptrdiff_t>(py);
      const std::size_t i_lo = y0 < 0 ? static_cast<std::size_t>(-y0) : 0;
      const std::size_t i_hi =
          std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(kh), static_cast<std::ptrdiff_t>(in_h) - y0);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::ptrdiff_t x0 =
            static_cast<std::ptrdiff_t>(ox * sx) - static_cast<std::ptrdiff_t>(px);
        const std::size_t j_lo = x0 < 0 ? static_cast<std::size_t>(-x0) : 0;
        const std::size_t j_hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(kw),
                                                          static_cast<std::ptrdiff_t>(in_w) - x0);
        double acc = b;
        for (std::size_t c = 0; c < channels; ++c) {
          const float* in_c = in + c * in_h * in_w;
          const float* k_c = k_oc + c * kh * kw;
          for (std::size_t i = i_lo; i < i_hi; ++i) {
            const float* row = in_c + static_cast<std::size_t>(y0 + static_cast<std::ptrdiff_t>(i)) * in_w;
            const float* krow = k_c + i * kw;
            for (std::size_t j = j_lo; j < j_hi; ++j) {
              acc += static_cast<double>(row[static_cast<std::size_t>(x0 + static_cast<std::ptrdiff_t>(j))]) *
                     static_cast<double>(krow[j]);
            }
          }
        }
        o[(oc * out_h + oy) * out_w + ox] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor max_pool(const Tensor& input, std::array<std::size_t, 2> window,
                std::array<std::size_t, 2> stride) {
  require_rank(input, 3, "max_pool", "input");
  const std::size_t channels = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
  const auto [wh, ww] = window;
  if (wh == 0 || ww == 0) throw DimensionError("max_pool: window must be positive");
  if (wh > in_h || ww > in_w) {
    throw DimensionError("max_pool: window " + std::to_string(wh) + "x" + std::to_string(ww) +
                         " larger than input " + shape_to_string(input.shape()));
  }
  const std::size_t out_h = conv_output_extent(in_h, wh, stride[0], 0);
  const std::size_t out_w = conv_output_extent(in_w, ww, stride[1], 0);

  Tensor out({channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < wh; ++i) {
          for (std::size_t j = 0; j < ww; ++j) {
            best = std::max(best, input.at(c, oy * stride[0] + i, ox * stride[1] + j));
          }
        }
        out.at(c, oy, ox) = best;
      }
    }
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 1, "fully_connected", "input");
  require_rank(weights, 2, "fully_connected", "weights");
  require_rank(bias, 1, "fully_connected", "bias");
  require_finite(input, "fully_connected");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (input.dim(0) != n || bias.dim(0) != m) {
    throw DimensionError("fully_connected: input " + shape_to_string(input.shape()) +
                         ", weights " + shape_to_string(weights.shape()) + ", bias " +
                         shape_to_string(bias.shape()) + " do not agree");
  }
  Tensor out({m});
  const float* x = input.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const float* w = weights.data().data() + i * n;
    double acc = bias[i];
    for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(w[j]) * static_cast<double>(x[j]);
    out[i] = static_cast<float>(acc);
  }
  return out;
}

std::vector<double> softmax(std::span<const float> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  for (float v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: logits contain NaN or Inf");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(static_cast<double>(logits[i]) - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 1, "softmax", "logits");
  const auto probs = softmax(logits.data());
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = static_cast<float>(probs[i]);
  return out;
}

Tensor flatten(const Tensor& input) {
  return input.reshaped({input.size()});
}

}  // namespace agest::ops
