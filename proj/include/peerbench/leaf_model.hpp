#pragma once

// Conjugate normal-inverse-gamma model for the scores in one terminal node:
//   sigma^2 ~ IG(a0, b0),  mu | sigma^2 ~ N(m0, sigma^2 / kappa0),
//   z_i | mu, sigma^2 ~ N(mu, sigma^2).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>

#include "peerbench/error.hpp"

namespace peerbench {

struct LeafPrior {
  double m0 = 0.0;
  double kappa0 = 0.1;
  double a0 = 3.0;
  double b0 = 2.0;

  void validate() const {
    if (!std::isfinite(m0)) throw ConfigError("leaf prior m0 must be finite");
    if (!(kappa0 > 0.0)) throw ConfigError("leaf prior kappa0 must be > 0");
    if (!(a0 > 1.0)) throw ConfigError("leaf prior a0 must be > 1");
    if (!(b0 > 0.0)) throw ConfigError("leaf prior b0 must be > 0");
  }
};

// Sufficient statistics: count, mean and centred sum of squares.
struct LeafStats {
  std::size_t n = 0;
  double mean = 0.0;
  double ss = 0.0;

  static LeafStats of(std::span<const double> z) {
    LeafStats s;
    s.n = z.size();
    if (s.n == 0) return s;
    double sum = 0.0;
    for (double v : z) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    for (double v : z) s.ss += (v - s.mean) * (v - s.mean);
    return s;
  }
};

struct LeafParams {
  double mu = 0.0;
  double sigma = 1.0;
};

struct NigPosterior {
  double m;
  double kappa;
  double a;
  double b;
};

inline NigPosterior leaf_posterior(const LeafStats& s, const LeafPrior& prior) {
  const double n = static_cast<double>(s.n);
  const double kappa = prior.kappa0 + n;
  const double m = (prior.kappa0 * prior.m0 + n * s.mean) / kappa;
  const double a = prior.a0 + 0.5 * n;
  const double dev = s.mean - prior.m0;
  const double b = prior.b0 + 0.5 * s.ss + 0.5 * prior.kappa0 * n * dev * dev / kappa;
  return {m, kappa, a, b};
}

inline double leaf_log_marginal(const LeafStats& s, const LeafPrior& prior) {
  if (s.n == 0) return 0.0;
  const auto post = leaf_posterior(s, prior);
  const double n = static_cast<double>(s.n);
  return -0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * std::log(prior.kappa0 / post.kappa) +
         prior.a0 * std::log(prior.b0) - post.a * std::log(post.b) + std::lgamma(post.a) -
         std::lgamma(prior.a0);
}

inline double leaf_log_marginal(std::span<const double> z, const LeafPrior& prior) {
  return leaf_log_marginal(LeafStats::of(z), prior);
}

// One draw of (mu, sigma) from the conditional posterior.
template <class Rng>
LeafParams draw_leaf_params(const NigPosterior& post, Rng& rng) {
  std::gamma_distribution<double> gamma(post.a, 1.0);
  const double var = post.b / gamma(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  return {post.m + std::sqrt(var / post.kappa) * normal(rng), std::sqrt(var)};
}

}  // namespace peerbench
