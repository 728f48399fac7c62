#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "agest/plot.hpp"

namespace agest {

inline constexpr std::size_t kAgeClasses = 101;  // integer ages 0..100

// Probability over integer ages 0..100. Construction validates length,
// range and normalization (|sum - 1| <= 1e-6).
class AgePosterior {
 public:
  static constexpr double kSumTolerance = 1e-6;

  explicit AgePosterior(std::vector<double> probs);

  static AgePosterior from_logits(std::span<const float> logits);
  static AgePosterior one_hot(int age);
  static AgePosterior uniform();

  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t age) const noexcept { return probs_[age]; }

  friend bool operator==(const AgePosterior&, const AgePosterior&) = default;

 private:
  std::vector<double> probs_;
};

struct AgeGuess {
  int age = 0;
  double prob = 0.0;
  friend bool operator==(const AgeGuess&, const AgeGuess&) = default;
};

struct AgeEstimate {
  double expected_age = 0.0;
  int argmax_age = 0;
  std::vector<AgeGuess> top_k;
  double confidence = 0.0;
  double p_minor = 0.0;
};

// Probability-weighted mean age, sum_i i * p_i.
double expected_age(const AgePosterior& p);

// Lowest age among the most probable ones.
int argmax_age(const AgePosterior& p);

// k most probable ages, descending; ties go to the lower age.
std::vector<AgeGuess> top_k(const AgePosterior& p, std::size_t k);

// 1 - H(p) / ln(101). One-hot gives 1, uniform gives 0.
double confidence(const AgePosterior& p);

// Mass strictly below boundary_age.
double p_minor(const AgePosterior& p, int boundary_age = 18);

struct DecodeOptions {
  std::size_t top_k = 3;
  int boundary_age = 18;
};

AgeEstimate decode(const AgePosterior& p, const DecodeOptions& options = {});

// Posterior bar chart. Bar `predicted` gets role "predicted", bar `real_age`
// (if any) role "actual"; when the two coincide the bar is "actual".
// Sidecar CSV columns: age,prob,role.
PlotDocument posterior_plot(const AgePosterior& p, int predicted,
                            std::optional<int> real_age = std::nullopt);

}  // namespace agest
