#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "soilfusion/metrics.hpp"
#include "soilfusion/rng.hpp"

using namespace soilfusion;
using V = std::vector<double>;

TEST(Metrics, Rmse) {
  EXPECT_NEAR(metrics::rmse(V{0, 0}, V{3, -4}), 3.5355339059327378, 1e-12);
  EXPECT_EQ(metrics::rmse(V{1, 2}, V{1, 2}), 0);
  EXPECT_THROW(metrics::rmse(V{1, 2}, V{1}), Error);
  EXPECT_THROW(metrics::rmse(V{}, V{}), Error);
  EXPECT_THROW(metrics::rmse(V{NAN}, V{1}), Error);
}

TEST(Metrics, BiasSign) {
  EXPECT_DOUBLE_EQ(metrics::bias(V{2, 4}, V{1, 1}), 2);
  EXPECT_DOUBLE_EQ(metrics::bias(V{1, 1}, V{2, 4}), -2);
}

TEST(Metrics, Concordance) {
  EXPECT_NEAR(metrics::concordance(V{1, 2, 3}, V{2, 3, 4}), 4.0 / 7.0, 1e-12);
  EXPECT_NEAR(metrics::concordance(V{1, 2, 3}, V{1, 2, 3}), 1, 1e-12);
  EXPECT_NEAR(metrics::concordance(V{1, 2, 3}, V{3, 2, 1}), -1, 1e-12);
  EXPECT_EQ(metrics::concordance(V{1, 2, 3}, V{5, 5, 5}), 0);
}

TEST(Metrics, RSquared) {
  EXPECT_DOUBLE_EQ(metrics::r_squared(V{1, 2, 3}, V{1, 2, 3}), 1);
  EXPECT_DOUBLE_EQ(metrics::r_squared(V{1, 2, 3}, V{2, 2, 2}), 0);
  EXPECT_LT(metrics::r_squared(V{1, 2, 3}, V{3, 2, 1}), 0);
  try {
    metrics::r_squared(V{2, 2}, V{1, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConstantTruth);
  }
}

TEST(Metrics, ResidualCorrelation) {
  EXPECT_NEAR(metrics::residual_correlation(V{1, -1, 1, -1}, V{2, -2, 2, -2}), 1, 1e-12);
  EXPECT_NEAR(metrics::residual_correlation(V{1, -1, 1, -1}, V{-2, 2, -2, 2}), -1, 1e-12);
  EXPECT_THROW(metrics::residual_correlation(V{1, 1, 1}, V{1, 2, 3}), Error);
}

TEST(Metrics, RelativeChange) {
  EXPECT_NEAR(metrics::relative_change(0.33, 0.16), 106.25, 1e-9);
  EXPECT_NEAR(metrics::relative_change(10.554, 16.08), -34.37, 0.005);
  EXPECT_EQ(metrics::relative_change(2, 2), 0);
  try {
    metrics::relative_change(1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroBaseline);
  }
}

TEST(Metrics, Descriptive) {
  const auto s = metrics::descriptive_stats(V{2, 4, 6});
  EXPECT_DOUBLE_EQ(s.mean, 4);
  EXPECT_DOUBLE_EQ(s.sd, 2);
  EXPECT_DOUBLE_EQ(s.cv, 50);
  EXPECT_DOUBLE_EQ(s.min, 2);
  EXPECT_DOUBLE_EQ(s.max, 6);
  EXPECT_NEAR(*s.skewness, 0, 1e-12);
  EXPECT_FALSE(s.kurtosis);
  const auto k = metrics::descriptive_stats(V{1, 2, 3, 4});
  EXPECT_NEAR(*k.skewness, 0, 1e-12);
  EXPECT_NEAR(*k.kurtosis, -1.2, 1e-12);
  EXPECT_GT(*metrics::descriptive_stats(V{1, 1, 1, 10}).skewness, 0);
  EXPECT_THROW(metrics::descriptive_stats(V{1}), Error);
  EXPECT_THROW(metrics::descriptive_stats(V{-1, 0, 1}), Error);
}

TEST(Metrics, RandomIdentities) {
  Rng rng(11);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 3 + rng.index(30);
    V y(n), m(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.normal(5, 2);
      m[i] = 0.7 * y[i] + rng.normal(1, 1);
    }
    const double r = metrics::rmse(y, m), b = metrics::bias(y, m);
    V res(n);
    for (std::size_t i = 0; i < n; ++i) res[i] = y[i] - m[i];
    const double mu = std::accumulate(res.begin(), res.end(), 0.0) / n;
    double var = 0;
    for (double e : res) var += (e - mu) * (e - mu) / n;
    EXPECT_NEAR(r * r, b * b + var, 1e-10);
    EXPECT_LE(std::abs(metrics::concordance(y, m)), std::abs(metrics::pearson_or_zero(y, m)) + 1e-12);
    EXPECT_LE(metrics::r_squared(y, m), 1.0);
  }
}

TEST(FilmerPritchett, Encodings) {
  const std::vector<std::string> pm{"a", "b", "c", "d", "e"};
  const auto drop = metrics::filmer_pritchett_encode(pm, pm, metrics::DummyMode::DropFirst);
  EXPECT_EQ(drop.cols(), 4u);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(drop(0, c), 0);
  EXPECT_EQ(drop(2, 1), 1);
  const std::vector<std::string> vocab{"A", "B", "C"};
  const std::vector<std::string> values{"B"};
  const auto full = metrics::filmer_pritchett_encode(values, vocab, metrics::DummyMode::Full);
  ASSERT_EQ(full.cols(), 3u);
  EXPECT_EQ(full(0, 0), 0);
  EXPECT_EQ(full(0, 1), 1);
  EXPECT_EQ(full(0, 2), 0);
  const std::vector<std::string> unknown{"Z"};
  try {
    metrics::filmer_pritchett_encode(unknown, vocab, metrics::DummyMode::Full);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownCategory);
  }
}

TEST(Pca, RankOneAndIsotropic) {
  Rng rng(4);
  Matrix line(40, 2);
  for (std::size_t r = 0; r < 40; ++r) {
    line(r, 0) = rng.normal();
    line(r, 1) = 2 * line(r, 0);
  }
  const auto a = metrics::pca(line, false);
  EXPECT_NEAR(a.variance_explained[0], 100, 1e-9);
  EXPECT_NEAR(std::abs(a.loadings(1, 0)), 2 / std::sqrt(5.0), 1e-9);

  Matrix iso(20000, 3);
  for (std::size_t r = 0; r < iso.rows(); ++r) {
    for (std::size_t c = 0; c < 3; ++c) iso(r, c) = rng.normal();
  }
  const auto b = metrics::pca(iso, false);
  for (double v : b.variance_explained) EXPECT_NEAR(v, 100.0 / 3, 1.5);
}

TEST(Pca, ScoresAndSign) {
  Rng rng(6);
  Matrix x(30, 4);
  for (std::size_t r = 0; r < 30; ++r) {
    for (std::size_t c = 0; c < 4; ++c) x(r, c) = rng.normal() + (c == 2 ? 0.9 * x(r, 0) : 0);
  }
  const auto p = metrics::pca(x, true);
  for (std::size_t c = 0; c < p.loadings.cols(); ++c) {
    double best = 0;
    for (std::size_t v = 0; v < 4; ++v) {
      if (std::abs(p.loadings(v, c)) > std::abs(best)) best = p.loadings(v, c);
    }
    EXPECT_GT(best, 0);
    // Score variance equals the component variance.
    double s = 0;
    for (std::size_t r = 0; r < 30; ++r) s += p.scores(r, c) * p.scores(r, c);
    EXPECT_NEAR(s / 29, p.variances[c], 1e-9);
  }
  Matrix constant(5, 2, 1.0);
  EXPECT_THROW(metrics::pca(constant, true), Error);
  EXPECT_THROW(metrics::pca(constant, false), Error);
}
