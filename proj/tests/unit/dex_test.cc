#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "agest/csv.hpp"
#include "agest/dex.hpp"
#include "agest/error.hpp"
#include "oracles.hpp"

namespace agest {
namespace {

std::vector<double> two_point(int a, double pa, int b, double pb) {
  std::vector<double> p(kAgeClasses, 0.0);
  p[a] = pa;
  p[b] = pb;
  return p;
}

AgePosterior random_posterior(std::mt19937_64& rng) {
  std::vector<float> logits(kAgeClasses);
  std::normal_distribution<float> n(0.0f, 3.0f);
  for (auto& v : logits) v = n(rng);
  return AgePosterior::from_logits(logits);
}

TEST(AgePosterior, Validation) {
  EXPECT_THROW(AgePosterior(std::vector<double>(100, 0.01)), Error);
  EXPECT_THROW(AgePosterior(std::vector<double>(101, 0.0)), Error);
  auto p = two_point(1, 0.5, 2, 0.5);
  p[3] = -0.0001;
  p[1] += 0.0001;
  EXPECT_THROW(AgePosterior{p}, Error);
  auto q = two_point(1, 0.5, 2, 0.5 + 5e-7);
  EXPECT_NO_THROW(AgePosterior{q});
  auto r = two_point(1, 0.5, 2, 0.5 + 2e-6);
  EXPECT_THROW(AgePosterior{r}, Error);
  EXPECT_THROW(AgePosterior::one_hot(101), std::out_of_range);
}

TEST(ExpectedAge, Examples) {
  EXPECT_EQ(expected_age(AgePosterior::one_hot(17)), 17.0);
  EXPECT_NEAR(expected_age(AgePosterior::uniform()), 50.0, 1e-12);
  EXPECT_EQ(expected_age(AgePosterior(two_point(10, 0.5, 20, 0.5))), 15.0);
}

TEST(ExpectedAge, OneHotExactForEveryClass) {
  for (int a = 0; a <= 100; ++a) EXPECT_EQ(expected_age(AgePosterior::one_hot(a)), static_cast<double>(a));
}

TEST(ExpectedAge, WithinRange) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const double e = expected_age(random_posterior(rng));
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 100.0);
  }
}

TEST(TopK, Examples) {
  const auto one = top_k(AgePosterior::one_hot(15), 3);
  EXPECT_EQ(one, (std::vector<AgeGuess>{{15, 1.0}, {0, 0.0}, {1, 0.0}}));

  std::vector<double> p(kAgeClasses, 0.05 / 98.0);
  p[16] = 0.4;
  p[15] = 0.35;
  p[17] = 0.2;
  const auto t = top_k(AgePosterior(p), 3);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].age, 16);
  EXPECT_EQ(t[1].age, 15);
  EXPECT_EQ(t[2].age, 17);

  const auto all = top_k(AgePosterior(p), 101);
  std::set<int> ages;
  for (const auto& g : all) ages.insert(g.age);
  EXPECT_EQ(ages.size(), 101u);
  EXPECT_EQ(*ages.begin(), 0);
  EXPECT_EQ(*ages.rbegin(), 100);
}

TEST(TopK, RangeChecked) {
  EXPECT_THROW(top_k(AgePosterior::uniform(), 0), std::out_of_range);
  EXPECT_THROW(top_k(AgePosterior::uniform(), 102), std::out_of_range);
}

TEST(TopK, MatchesSortOracleAndIsPrefixStable) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_posterior(rng);
    std::vector<int> order(kAgeClasses);
    for (int i = 0; i <= 100; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
    const auto full = top_k(p, 101);
    for (std::size_t i = 0; i < full.size(); ++i) {
      EXPECT_EQ(full[i].age, order[i]);
      if (i) EXPECT_LE(full[i].prob, full[i - 1].prob);
    }
    for (std::size_t k = 1; k < 101; ++k) {
      const auto a = top_k(p, k), b = top_k(p, k + 1);
      EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
  }
}

TEST(Confidence, Examples) {
  EXPECT_NEAR(confidence(AgePosterior::one_hot(40)), 1.0, 1e-15);
  EXPECT_NEAR(confidence(AgePosterior::uniform()), 0.0, 1e-12);
  const double two = confidence(AgePosterior(two_point(3, 0.5, 9, 0.5)));
  EXPECT_NEAR(two, 1.0 - std::log(2.0) / std::log(101.0), 1e-12);
  EXPECT_NEAR(two, 0.8498, 1e-4);
}

TEST(Confidence, MatchesEntropyOracle) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_posterior(rng);
    const std::vector<double> v(p.probs().begin(), p.probs().end());
    const double c = confidence(p);
    EXPECT_NEAR(c, 1.0 - oracle::entropy_nats(v) / std::log(101.0), 1e-12);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(PMinor, Examples) {
  EXPECT_EQ(p_minor(AgePosterior::one_hot(17), 18), 1.0);
  EXPECT_EQ(p_minor(AgePosterior::one_hot(18), 18), 0.0);
  EXPECT_NEAR(p_minor(AgePosterior::uniform()), 18.0 / 101.0, 1e-12);
  EXPECT_NEAR(p_minor(AgePosterior::uniform()), 0.1782, 1e-4);
}

TEST(PMinor, BoundaryProperties) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_posterior(rng);
    EXPECT_EQ(p_minor(p, 0), 0.0);
    EXPECT_NEAR(p_minor(p, 100), 1.0 - p[100], 1e-9);
    double prev = 0.0;
    for (int b = 0; b <= 100; ++b) {
      const double m = p_minor(p, b);
      EXPECT_GE(m, prev);
      prev = m;
    }
  }
  EXPECT_THROW(p_minor(AgePosterior::uniform(), -1), std::out_of_range);
  EXPECT_THROW(p_minor(AgePosterior::uniform(), 101), std::out_of_range);
}

TEST(ArgmaxAge, InvariantUnderRenormalization) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_posterior(rng);
    std::vector<double> scaled(p.probs().begin(), p.probs().end());
    double s = 0;
    for (auto& v : scaled) s += (v *= 3.7);
    for (auto& v : scaled) v /= s;
    EXPECT_EQ(argmax_age(AgePosterior(scaled)), argmax_age(p));
  }
  EXPECT_EQ(argmax_age(AgePosterior::uniform()), 0);
  EXPECT_EQ(argmax_age(AgePosterior(two_point(30, 0.5, 20, 0.5))), 20);
}

TEST(FromLogits, SumsToOne) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_posterior(rng);
    double sum = 0;
    for (double v : p.probs()) sum += v;
    ASSERT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Decode, FillsAllFields) {
  const auto est = decode(AgePosterior(two_point(16, 0.75, 19, 0.25)), {3, 18});
  EXPECT_DOUBLE_EQ(est.expected_age, 16.75);
  EXPECT_EQ(est.argmax_age, 16);
  ASSERT_EQ(est.top_k.size(), 3u);
  EXPECT_EQ(est.top_k[1], (AgeGuess{19, 0.25}));
  EXPECT_DOUBLE_EQ(est.p_minor, 0.75);
  EXPECT_GT(est.confidence, 0.8);
}

std::vector<std::vector<std::string>> sidecar_rows(const PlotDocument& doc) {
  std::istringstream in(doc.csv);
  std::vector<std::vector<std::string>> rows;
  for (auto& r : csv::read(in)) rows.push_back(r.fields);
  return rows;
}

TEST(PosteriorPlot, OneHotHasOneNonzeroBar) {
  const auto doc = posterior_plot(AgePosterior::one_hot(33), 33);
  const auto rows = sidecar_rows(doc);
  ASSERT_EQ(rows.size(), 102u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"age", "prob", "role"}));
  int nonzero = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (std::stod(rows[i][1]) != 0.0) ++nonzero;
  EXPECT_EQ(nonzero, 1);
  EXPECT_EQ(rows[34][1], "1.000000000");
  EXPECT_NE(doc.svg.find("<svg"), std::string::npos);
  EXPECT_EQ(doc.svg.find("role=\"actual\""), std::string::npos);
}

TEST(PosteriorPlot, PredictedAndActualRoles) {
  const auto doc = posterior_plot(AgePosterior::uniform(), 15, 16);
  const auto rows = sidecar_rows(doc);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const int age = std::stoi(rows[i][0]);
    const std::string expected = age == 15 ? "predicted" : age == 16 ? "actual" : "none";
    EXPECT_EQ(rows[i][2], expected) << age;
  }
  EXPECT_NE(doc.svg.find("data-x=\"15\""), std::string::npos);
  EXPECT_NE(doc.svg.find("data-role=\"predicted\""), std::string::npos);
  EXPECT_NE(doc.svg.find("data-role=\"actual\""), std::string::npos);
}

TEST(PosteriorPlot, NoRealAgeMeansNoActualRole) {
  const auto doc = posterior_plot(AgePosterior::uniform(), 40);
  EXPECT_EQ(doc.csv.find(",actual"), std::string::npos);
  EXPECT_EQ(doc.svg.find("data-role=\"actual\""), std::string::npos);
  EXPECT_EQ(posterior_plot(AgePosterior::uniform(), 40).svg, doc.svg);
}

TEST(PosteriorPlot, SidecarPath) {
  EXPECT_EQ(sidecar_path("out/post.svg"), "out/post.csv");
  EXPECT_EQ(sidecar_path("plot"), "plot.csv");
}

}  // namespace
}  // namespace agest
