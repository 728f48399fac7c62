#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "agest/image.hpp"
#include "agest/network.hpp"

namespace agest::testing {

// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("agest-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline RawImage noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RawImage img(w, h);
  for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng() & 0xFF);
  return img;
}

inline RawImage constant_image(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RawImage img(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    img.pixels[i * 3] = r;
    img.pixels[i * 3 + 1] = g;
    img.pixels[i * 3 + 2] = b;
  }
  return img;
}

// Random small graph whose shapes are guaranteed to propagate.
inline NetworkGraph random_small_graph(std::mt19937_64& rng, bool with_weights = true) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  const std::size_t c = pick(1, 3), h = pick(4, 10), w = pick(4, 10);
  std::vector<LayerSpec> layers;
  std::size_t cur_h = h, cur_w = w;
  const std::size_t convs = pick(1, 2);
  for (std::size_t i = 0; i < convs; ++i) {
    const std::size_t pad = pick(0, 1);
    const std::size_t k = pick(1, std::min<std::size_t>(3, std::min(cur_h, cur_w) + 2 * pad));
    layers.push_back({"conv" + std::to_string(i), ConvLayer{pick(1, 4), {k, k}, {1, 1}, {pad, pad}}});
    cur_h = cur_h + 2 * pad - k + 1;
    cur_w = cur_w + 2 * pad - k + 1;
    layers.push_back({"relu" + std::to_string(i), ReluLayer{}});
    if (cur_h >= 2 && cur_w >= 2 && rng() % 2 == 0) {
      layers.push_back({"pool" + std::to_string(i), MaxPoolLayer{{2, 2}, {2, 2}}});
      cur_h /= 2;
      cur_w /= 2;
    }
  }
  layers.push_back({"flatten", FlattenLayer{}});
  layers.push_back({"fc", FullyConnectedLayer{pick(1, 5)}});
  if (rng() % 2 == 0) layers.push_back({"prob", SoftmaxLayer{}});
  NetworkGraph g({c, h, w}, std::move(layers));
  if (with_weights) init_random_weights(g, rng());
  return g;
}

}  // namespace agest::testing
