#include <random>

#include <gtest/gtest.h>

#include "siamreid/error.hpp"
#include "siamreid/metrics.hpp"

namespace siamreid {
namespace {

TEST(F1, TwoClassHandComputed) {
  ConfusionTable t;
  t.add("A", "A", 3);
  t.add("A", "B", 1);
  t.add("B", "B", 4);
  t.add("B", std::nullopt, 0);
  const auto r = metrics_from_confusion(t);
  EXPECT_DOUBLE_EQ(r.accuracy, 7.0 / 8.0);
  EXPECT_NEAR(r.f1_per_class.at("A"), 6.0 / 7.0, 1e-12);
  EXPECT_NEAR(r.f1_per_class.at("B"), 0.888888889, 1e-9);
  EXPECT_NEAR(r.f1_macro, 0.873015873, 1e-9);
  EXPECT_NEAR(r.f1_micro, 7.0 / 8.0, 1e-12);
  EXPECT_EQ(r.n_test, 8);
}

TEST(F1, PerfectDiagonal) {
  ConfusionTable t;
  for (auto id : {"a", "b", "c"}) t.add(id, std::string(id), 5);
  const auto r = metrics_from_confusion(t);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.f1_macro, 1.0);
  for (const auto& [_, f] : r.f1_per_class) EXPECT_DOUBLE_EQ(f, 1.0);
}

TEST(F1, NeverPredictedClassScoresZero) {
  ConfusionTable t;
  t.add("A", "A", 2);
  t.add("B", "A", 2);
  EXPECT_DOUBLE_EQ(compute_f1(t).per_class.at("B"), 0.0);
}

TEST(F1, UnknownHurtsRecallOnly) {
  ConfusionTable t;
  t.add("A", "A", 1);
  t.add("A", std::nullopt, 1);
  // P = 1, R = 1/2
  EXPECT_NEAR(compute_f1(t).per_class.at("A"), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(compute_micro_f1(t), 2.0 / 3.0, 1e-12);
}

TEST(F1, RandomThreeClassMatchesBruteForce) {
  std::mt19937 rng(5);
  const std::vector<std::string> ids{"x", "y", "z"};
  for (int trial = 0; trial < 50; ++trial) {
    ConfusionTable t;
    int m[3][4] = {};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        m[i][j] = std::uniform_int_distribution<int>(0, 6)(rng);
        t.add(ids[i], j < 3 ? std::optional<std::string>(ids[j]) : std::nullopt, m[i][j]);
      }
    const auto f = compute_f1(t);
    double macro = 0;
    int present = 0;
    for (int c = 0; c < 3; ++c) {
      int tp = m[c][c], row = 0, col = 0;
      for (int j = 0; j < 4; ++j) row += m[c][j];
      for (int i = 0; i < 3; ++i) col += m[i][c];
      if (row == 0) continue;
      ++present;
      const double p = col ? double(tp) / col : 0.0, r = double(tp) / row;
      const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
      EXPECT_NEAR(f.per_class.at(ids[c]), f1, 1e-9);
      macro += f1;
    }
    if (present) EXPECT_NEAR(f.macro, macro / present, 1e-9);
  }
}

TEST(Metrics, JsonRoundTrip) {
  ConfusionTable t;
  t.add("A", "A", 3);
  t.add("A", std::nullopt, 1);
  t.add("B", "A", 2);
  const auto r = metrics_from_confusion(t);
  const auto back = metrics_from_json(to_json(r));
  EXPECT_DOUBLE_EQ(back.f1_macro, r.f1_macro);
  EXPECT_DOUBLE_EQ(back.accuracy, r.accuracy);
  EXPECT_EQ(back.confusion.counts(), r.confusion.counts());
}

}  // namespace
}  // namespace siamreid
