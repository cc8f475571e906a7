#include <gtest/gtest.h>

#include <random>
#include <set>

#include "annodesk/stats.hpp"
#include "support.hpp"

using namespace annodesk;
using namespace testing_support;

namespace {

bool constant(const std::vector<double>& v) { return std::set<double>(v.begin(), v.end()).size() < 2; }

std::size_t random_n(std::mt19937_64& rng) { return std::uniform_int_distribution<std::size_t>(3, 30)(rng); }

}  // namespace

TEST(StudentT, ExactSeriesOracleKnownValues) {
  // df = 1 is Cauchy: P(|T| >= 1) = 1/2.
  EXPECT_NEAR(t_two_sided_exact(1.0, 1), 0.5, 1e-15);
  // df = 2 has the closed form 1 - t / sqrt(2 + t^2).
  EXPECT_NEAR(t_two_sided_exact(2.0, 2), 1.0 - 2.0 / std::sqrt(6.0), 1e-15);
}

TEST(StudentT, IncompleteBetaMatchesSeries) {
  for (int df = 1; df <= 40; ++df)
    for (double t : {0.1, 0.5, 1.0, 2.0, 3.5, 7.0, 20.0})
      EXPECT_NEAR(stats::student_t_two_sided(t, df), t_two_sided_exact(t, df), 1e-12) << t << " " << df;
}

TEST(PairedT, IdenticalSamples) {
  const std::vector<double> x{10, 20, 30, 45};
  const auto r = stats::paired_t_test(x, x);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(PairedT, GoldenValue) {
  const std::vector<double> x{90, 92, 88, 95}, y{65, 70, 60, 68};
  const auto r = stats::paired_t_test(x, y);
  EXPECT_NEAR(r.t, 19.276188123470586, 1e-9);
  EXPECT_NEAR(r.p, 0.0003049407839822065, 1e-9);
  EXPECT_LT(r.p, 0.05);
  EXPECT_EQ(r.df, 3u);
  const auto o = paired_t_oracle(x, y);
  EXPECT_NEAR(r.t, o.t, 1e-9);
  EXPECT_NEAR(r.p, o.p, 1e-9);
}

TEST(PairedT, SymmetricDifferences) {
  const auto r = stats::paired_t_test(std::vector<double>{50, 60}, std::vector<double>{60, 50});
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
}

TEST(PairedT, ConstantNonZeroDifference) {
  const auto r = stats::paired_t_test(std::vector<double>{5, 6, 7}, std::vector<double>{3, 4, 5});
  EXPECT_TRUE(std::isinf(r.t));
  EXPECT_GT(r.t, 0);
  EXPECT_EQ(r.p, 0.0);
}

TEST(PairedT, InputErrors) {
  EXPECT_THROW(stats::paired_t_test(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
  EXPECT_THROW(stats::paired_t_test(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST(PairedT, MatchesOracleOnRandomVectors) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = random_n(rng);
    const auto x = random_scores(rng, n), y = random_scores(rng, n);
    const auto r = stats::paired_t_test(x, y);
    const auto o = paired_t_oracle(x, y);
    if (std::isinf(o.t)) {
      EXPECT_EQ(r.t, o.t);
    } else {
      EXPECT_NEAR(r.t, o.t, 1e-9 * std::max(1.0, std::abs(o.t)));
    }
    EXPECT_NEAR(r.p, o.p, 1e-9);
  }
}

TEST(PairedT, Antisymmetry) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = random_n(rng);
    const auto x = random_scores(rng, n, 0, 100), y = random_scores(rng, n, 0, 100);
    const auto a = stats::paired_t_test(x, y), b = stats::paired_t_test(y, x);
    EXPECT_EQ(a.t, -b.t);
    EXPECT_EQ(a.p, b.p);
  }
}

TEST(Pearson, Examples) {
  EXPECT_NEAR(stats::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}), 1.0, 1e-12);
  EXPECT_NEAR(stats::pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-12);
  const std::vector<double> x{90, 65, 33, 80}, y{85, 70, 30, 70};
  EXPECT_NEAR(stats::pearson(x, y), 0.9682909864481704, 1e-9);
  EXPECT_NEAR(stats::pearson(x, y), pearson_oracle(x, y), 1e-9);
}

TEST(Pearson, ConstantInputIsUndefined) {
  EXPECT_THROW(stats::pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);
  EXPECT_THROW(stats::pearson(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST(Pearson, MatchesOracleOnRandomVectors) {
  std::mt19937_64 rng(3);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = random_n(rng);
    const auto x = random_scores(rng, n), y = random_scores(rng, n);
    if (constant(x) || constant(y)) {
      EXPECT_THROW(stats::pearson(x, y), Error);
      continue;
    }
    EXPECT_NEAR(stats::pearson(x, y), pearson_oracle(x, y), 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 950);
}

TEST(Pearson, AffineInvariance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> a(0.1, 5), b(-50, 50);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = random_n(rng);
    const auto x = random_scores(rng, n, 0, 100), y = random_scores(rng, n, 0, 100);
    if (constant(x) || constant(y)) continue;
    auto x2 = x;
    const double s = a(rng), o = b(rng);
    for (auto& v : x2) v = s * v + o;
    EXPECT_NEAR(stats::pearson(x, y), stats::pearson(x2, y), 1e-9);
  }
}

TEST(Kendall, Examples) {
  EXPECT_NEAR(stats::kendall_tau_b(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 1.0, 1e-12);
  EXPECT_NEAR(stats::kendall_tau_b(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-12);
  const std::vector<double> x{1, 2, 2, 3}, y{1, 3, 2, 3};
  EXPECT_NEAR(kendall_oracle(x, y), 0.8, 1e-12);
  EXPECT_NEAR(stats::kendall_tau_b(x, y), 0.8, 1e-9);
}

TEST(Kendall, AllTiedIsUndefined) {
  EXPECT_THROW(stats::kendall_tau_b(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST(Kendall, MatchesOracleOnRandomVectors) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = random_n(rng);
    const auto x = random_scores(rng, n, 0, 6), y = random_scores(rng, n, 0, 6);
    if (constant(x) || constant(y)) {
      EXPECT_THROW(stats::kendall_tau_b(x, y), Error);
      continue;
    }
    EXPECT_NEAR(stats::kendall_tau_b(x, y), kendall_oracle(x, y), 1e-9);
  }
}

TEST(Kendall, MonotoneInvariance) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = random_n(rng);
    const auto x = random_scores(rng, n), y = random_scores(rng, n);
    if (constant(x) || constant(y)) continue;
    auto x2 = x;
    for (auto& v : x2) v = std::exp(v / 3.0) + v * v * v;
    EXPECT_NEAR(stats::kendall_tau_b(x, y), stats::kendall_tau_b(x2, y), 1e-12);
  }
}

TEST(IdenticalInputs, PerfectScores) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto x = random_scores(rng, random_n(rng));
    if (constant(x)) continue;
    EXPECT_EQ(stats::paired_t_test(x, x).p, 1.0);
    EXPECT_NEAR(stats::pearson(x, x), 1.0, 1e-12);
    EXPECT_NEAR(stats::kendall_tau_b(x, x), 1.0, 1e-12);
  }
}
