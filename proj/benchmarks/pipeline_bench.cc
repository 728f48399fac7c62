#include <random>

#include <benchmark/benchmark.h>

#include "agest/image.hpp"
#include "agest/metrics.hpp"
#include "agest/network.hpp"
#include "agest/pipeline.hpp"

namespace {

agest::RawImage noise(std::size_t w, std::size_t h) {
  std::mt19937_64 rng(9);
  agest::RawImage img(w, h);
  for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng());
  return img;
}

void BM_ToyForward(benchmark::State& state) {
  auto g = agest::build_toy_age_net(32);
  agest::init_random_weights(g, 7);
  const agest::Tensor x({3, 32, 32}, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(agest::forward(g, x));
}
BENCHMARK(BM_ToyForward);

void BM_CropResize224(benchmark::State& state) {
  const auto img = noise(640, 480);
  const agest::CropSpec crop{100, 40, 300, 300, state.range(0) ? 7.5 : 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(agest::crop_resize(img, crop));
}
BENCHMARK(BM_CropResize224)->Arg(0)->Arg(1);

void BM_DecodePng(benchmark::State& state) {
  const auto bytes = agest::encode_png(noise(256, 256));
  for (auto _ : state) benchmark::DoNotOptimize(agest::decode(bytes));
}
BENCHMARK(BM_DecodePng);

void BM_BuildReport(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> est(0.0, 100.0);
  std::vector<agest::PredictionRecord> records(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].subject_id = "s" + std::to_string(i);
    records[i].real_age = static_cast<int>(rng() % 101);
    records[i].estimated_age = est(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(agest::build_report(records));
}
BENCHMARK(BM_BuildReport)->Arg(327)->Arg(10000);

}  // namespace
