#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "peerbench/copula.hpp"
#include "peerbench/normal.hpp"
#include "peerbench/synth.hpp"

using namespace peerbench;

TEST(Ecdf, SinglePointMass) {
  const std::vector<double> v{5.0};
  const auto f = fit_ecdf(v);
  EXPECT_EQ(f(5.0), 1.0);
  EXPECT_EQ(f(4.9), 0.0);
}

TEST(Ecdf, CountingDefinition) {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto f = fit_ecdf(v);
  EXPECT_DOUBLE_EQ(f(2.0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(f(3.0), 1.0);
  EXPECT_DOUBLE_EQ(f(100.0), 1.0);
  EXPECT_DOUBLE_EQ(f(0.5), 0.0);
}

TEST(Ecdf, RightContinuousAtTies) {
  const std::vector<double> v{1.0, 2.0, 2.0, 3.0};
  const auto f = fit_ecdf(v);
  EXPECT_DOUBLE_EQ(f(2.0), 0.75);
  EXPECT_DOUBLE_EQ(f(std::nextafter(2.0, 0.0)), 0.25);
}

TEST(Ecdf, EmptyOrNonFiniteRejected) {
  EXPECT_THROW(fit_ecdf(std::vector<double>{}), DomainError);
  EXPECT_THROW(fit_ecdf(std::vector<double>{1.0, NAN}), DomainError);
}

TEST(Ecdf, UniformDrawsWithinDkwBand) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(10000);
  for (auto& v : x) v = u(rng);
  const auto f = fit_ecdf(x);
  std::sort(x.begin(), x.end());
  // sup |F_n - F| is attained at sample points (from either side).
  double sup = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sup = std::max(sup, std::fabs(f(x[i]) - x[i]));
    sup = std::max(sup, std::fabs(static_cast<double>(i) / n - x[i]));
  }
  const double dkw99 = std::sqrt(std::log(2.0 / 0.01) / (2.0 * n));
  EXPECT_LT(sup, dkw99);
}

TEST(NormalScores, SingleValueIsZero) {
  const auto ns = fit_normal_scores(std::vector<double>{42.0});
  EXPECT_DOUBLE_EQ(ns.z[0], 0.0);
}

TEST(NormalScores, ThreeValuesMatchQuartiles) {
  const boost::math::normal_distribution<double> nd;
  const auto ns = fit_normal_scores(std::vector<double>{10.0, 20.0, 30.0});
  EXPECT_NEAR(ns.z[0], boost::math::quantile(nd, 0.25), 1e-14);
  EXPECT_NEAR(ns.z[1], 0.0, 1e-15);
  EXPECT_NEAR(ns.z[2], boost::math::quantile(nd, 0.75), 1e-14);
  EXPECT_NEAR(ns.z[2], 0.6744897501960817, 1e-13);
}

TEST(NormalScores, TiesShareScore) {
  const auto ns = fit_normal_scores(std::vector<double>{1.0, 3.0, 3.0, 2.0});
  EXPECT_EQ(ns.z[1], ns.z[2]);
}

TEST(NormalScores, MaximumMapsToTopRank) {
  const std::vector<double> v{0.3, -2.0, 7.0, 1.0, 0.0};
  const auto ns = fit_normal_scores(v);
  EXPECT_DOUBLE_EQ(*std::max_element(ns.z.begin(), ns.z.end()), normal_quantile(5.0 / 6.0));
}

TEST(NormalScores, FrozenEcdfScoresOutOfSample) {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto ns = fit_normal_scores(v);
  EXPECT_DOUBLE_EQ(normal_score(2.5, ns.ecdf), normal_quantile(0.5));
  EXPECT_DOUBLE_EQ(normal_score(99.0, ns.ecdf), normal_quantile(0.75));
  EXPECT_TRUE(std::isfinite(normal_score(-99.0, ns.ecdf)));
  EXPECT_LT(normal_score(-99.0, ns.ecdf), ns.z[0]);
}

TEST(NormalScores, MonotoneAndInvariantUnderIncreasingMaps) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> raw(2000);
  for (auto& v : raw) v = std::round(nd(rng) * 20.0) / 20.0;  // force ties
  std::vector<double> mapped(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) mapped[i] = std::exp(3.0 * raw[i]) + 1.0;
  const auto a = fit_normal_scores(raw);
  const auto b = fit_normal_scores(mapped);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_EQ(a.z[i], b.z[i]);
    ASSERT_TRUE(std::isfinite(a.z[i]));
  }
  for (std::size_t i = 0; i + 1 < raw.size(); ++i) {
    if (raw[i] < raw[i + 1]) {
      EXPECT_LT(a.z[i], a.z[i + 1]);
    }
    if (raw[i] == raw[i + 1]) {
      EXPECT_EQ(a.z[i], a.z[i + 1]);
    }
    if (raw[i] > raw[i + 1]) {
      EXPECT_GT(a.z[i], a.z[i + 1]);
    }
  }
}

TEST(NormalScores, MomentsForContinuousData) {
  std::mt19937_64 rng(8);
  std::exponential_distribution<double> ex(1.0);
  for (std::size_t n : {1000u, 5000u}) {
    std::vector<double> raw(n);
    for (auto& v : raw) v = -ex(rng);
    const auto ns = fit_normal_scores(raw);
    double m = 0, s = 0;
    for (double z : ns.z) m += z;
    m /= static_cast<double>(n);
    for (double z : ns.z) s += (z - m) * (z - m);
    s /= static_cast<double>(n - 1);
    EXPECT_LE(std::fabs(m), 0.05);
    EXPECT_GE(s, 0.90);
    EXPECT_LE(s, 1.05);
  }
}

TEST(CommonScale, Examples) {
  EXPECT_DOUBLE_EQ(common_scale(0.0), 0.5);
  EXPECT_NEAR(common_scale(1.959964), 0.975, 1e-7);
  for (double y : {0.1, 0.7, 1.5, 3.0, 8.0}) EXPECT_NEAR(common_scale(-y), 1.0 - common_scale(y), 1e-16);
}

TEST(Probit, AgreesWithBoost) {
  const boost::math::normal_distribution<double> nd;
  for (double p : {1e-300, 1e-100, 1e-20, 1e-10, 1e-5, 0.01, 0.2, 0.5, 0.8, 0.99, 1 - 1e-5, 1 - 1e-10}) {
    const double q = normal_quantile(p);
    const double ref = boost::math::quantile(nd, p);
    EXPECT_NEAR(q, ref, 1e-12 * std::max(1.0, std::fabs(ref))) << "p=" << p;
  }
  for (double x : {-30.0, -8.0, -1.0, 0.0, 0.5, 2.0, 7.0}) {
    const double ref = boost::math::cdf(nd, x);
    EXPECT_NEAR(normal_cdf(x), ref, 1e-15 + 1e-14 * ref) << "x=" << x;
  }
}

TEST(Probit, EdgeValues) {
  EXPECT_EQ(normal_quantile(0.0), -INFINITY);
  EXPECT_EQ(normal_quantile(1.0), INFINITY);
  EXPECT_TRUE(std::isnan(normal_quantile(-0.1)));
  EXPECT_TRUE(std::isnan(normal_quantile(1.1)));
  EXPECT_EQ(normal_quantile(0.5), 0.0);
}

TEST(Probit, RoundTripOnGrid) {
  double worst = 0.0;
  const int n = 100000;
  for (int i = 0; i <= n; ++i) {
    const double p = 1e-10 + (1.0 - 2e-10) * static_cast<double>(i) / n;
    worst = std::max(worst, std::fabs(normal_cdf(normal_quantile(p)) - p));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(SkewTransform, StrictlyIncreasingWithLongLowerTail) {
  double prev = skew_transform(-20.0);
  for (double z = -19.9; z < 20.0; z += 0.1) {
    const double g = skew_transform(z);
    EXPECT_GT(g, prev);
    prev = g;
  }
  EXPECT_DOUBLE_EQ(skew_transform(0.0), 0.0);
  EXPECT_GT(-skew_transform(-4.0), 5.0 * skew_transform(4.0));
}
