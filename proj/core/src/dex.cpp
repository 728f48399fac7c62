#include "agest/dex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "agest/error.hpp"
#include "agest/ops.hpp"

namespace agest {

AgePosterior::AgePosterior(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() != kAgeClasses) {
    throw DimensionError(fmt::format("age posterior needs {} probabilities, got {}", kAgeClasses,
                                     probs_.size()));
  }
  double total = 0.0;
  for (double v : probs_) {
    if (!(v >= 0.0 && v <= 1.0)) throw NumericError(fmt::format("age posterior value {} outside [0,1]", v));
    total += v;
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    throw NumericError(fmt::format("age posterior sums to {:.9f}, not 1", total));
  }
}

AgePosterior AgePosterior::from_logits(std::span<const float> logits) {
  return AgePosterior(ops::softmax(logits));
}

AgePosterior AgePosterior::one_hot(int age) {
  if (age < 0 || age > 100) throw std::out_of_range("one_hot: age must be in [0,100]");
  std::vector<double> p(kAgeClasses, 0.0);
  p[static_cast<std::size_t>(age)] = 1.0;
  return AgePosterior(std::move(p));
}

AgePosterior AgePosterior::uniform() {
  return AgePosterior(std::vector<double>(kAgeClasses, 1.0 / static_cast<double>(kAgeClasses)));
}

double expected_age(const AgePosterior& p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kAgeClasses; ++i) acc += static_cast<double>(i) * p[i];
  // The posterior may sum to 1 +- 1e-6; keep the result inside the age range.
  return std::clamp(acc, 0.0, 100.0);
}

int argmax_age(const AgePosterior& p) {
  auto probs = p.probs();
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<AgeGuess> top_k(const AgePosterior& p, std::size_t k) {
  if (k < 1 || k > kAgeClasses) throw std::out_of_range(fmt::format("top_k: k={} outside [1,101]", k));
  std::vector<int> ages(kAgeClasses);
  std::iota(ages.begin(), ages.end(), 0);
  std::partial_sort(ages.begin(), ages.begin() + static_cast<std::ptrdiff_t>(k), ages.end(), [&](int a, int b) {
    if (p[a] != p[b]) return p[a] > p[b];
    return a < b;
  });
  std::vector<AgeGuess> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ages[i], p[static_cast<std::size_t>(ages[i])]});
  return out;
}

double confidence(const AgePosterior& p) {
  double entropy = 0.0;
  for (double v : p.probs()) {
    if (v > 0.0) entropy -= v * std::log(v);
  }
  return std::clamp(1.0 - entropy / std::log(static_cast<double>(kAgeClasses)), 0.0, 1.0);
}

double p_minor(const AgePosterior& p, int boundary_age) {
  if (boundary_age < 0 || boundary_age > 100) {
    throw std::out_of_range(fmt::format("p_minor: boundary age {} outside [0,100]", boundary_age));
  }
  double acc = 0.0;
  for (int i = 0; i < boundary_age; ++i) acc += p[static_cast<std::size_t>(i)];
  return std::clamp(acc, 0.0, 1.0);
}

AgeEstimate decode(const AgePosterior& p, const DecodeOptions& options) {
  return {expected_age(p), argmax_age(p), top_k(p, options.top_k), confidence(p),
          p_minor(p, options.boundary_age)};
}

PlotDocument posterior_plot(const AgePosterior& p, int predicted, std::optional<int> real_age) {
  std::vector<svg::Bar> bars(kAgeClasses);
  for (std::size_t i = 0; i < kAgeClasses; ++i) bars[i].value = p[i];
  if (predicted >= 0 && predicted <= 100) bars[static_cast<std::size_t>(predicted)].role = "predicted";
  if (real_age && *real_age >= 0 && *real_age <= 100) bars[static_cast<std::size_t>(*real_age)].role = "actual";

  std::string title = fmt::format("Age posterior (predicted {}", predicted);
  title += real_age ? fmt::format(", actual {})", *real_age) : ")";

  PlotDocument doc;
  doc.svg = svg::bar_chart(bars, {title, "age (years)", "probability", 1.0});
  doc.csv = "age,prob,role\n";
  for (std::size_t i = 0; i < kAgeClasses; ++i) {
    doc.csv += fmt::format("{},{:.9f},{}\n", i, bars[i].value, bars[i].role);
  }
  return doc;
}

}  // namespace agest
