#pragma once

// Normal-scores transform: raw values are pushed through their empirical CDF
// and the standard normal quantile so the marginal becomes standard normal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "peerbench/error.hpp"
#include "peerbench/normal.hpp"

namespace peerbench {

class EmpiricalCDF {
 public:
  EmpiricalCDF() = default;

  explicit EmpiricalCDF(std::span<const double> values) {
    std::vector<double> sorted;
    sorted.reserve(values.size());
    for (double v : values) {
      if (!std::isfinite(v)) throw DomainError("EmpiricalCDF: non-finite value");
      sorted.push_back(v);
    }
    if (sorted.empty()) throw DomainError("EmpiricalCDF: empty sample");
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (support_.empty() || sorted[i] != support_.back()) {
        support_.push_back(sorted[i]);
        cumulative_.push_back(i + 1);
      } else {
        cumulative_.back() = i + 1;
      }
    }
    total_ = sorted.size();
  }

  std::size_t size() const noexcept { return total_; }
  const std::vector<double>& support() const noexcept { return support_; }
  const std::vector<std::size_t>& cumulative_counts() const noexcept { return cumulative_; }

  // Number of sample values <= v.
  std::size_t count_at_or_below(double v) const {
    const auto it = std::upper_bound(support_.begin(), support_.end(), v);
    if (it == support_.begin()) return 0;
    return cumulative_[static_cast<std::size_t>(it - support_.begin()) - 1];
  }

  // Right-continuous F(v) = #{x <= v} / N.
  double operator()(double v) const {
    return static_cast<double>(count_at_or_below(v)) / static_cast<double>(total_);
  }

 private:
  std::vector<double> support_;
  std::vector<std::size_t> cumulative_;
  std::size_t total_ = 0;
};

inline EmpiricalCDF fit_ecdf(std::span<const double> values) { return EmpiricalCDF(values); }

// Maps a raw value through N/(N+1) * F(v) and the probit. Values below the
// fitted support (only possible out of sample) use half a rank step so the
// score stays finite.
inline double normal_score(double value, const EmpiricalCDF& ecdf) {
  const double n = static_cast<double>(ecdf.size());
  const std::size_t count = ecdf.count_at_or_below(value);
  const double rank = count == 0 ? 0.5 : static_cast<double>(count);
  return normal_quantile(rank / (n + 1.0));
}

inline std::vector<double> to_normal_scores(std::span<const double> data, const EmpiricalCDF& ecdf) {
  std::vector<double> out;
  out.reserve(data.size());
  for (double v : data) out.push_back(normal_score(v, ecdf));
  return out;
}

struct NormalScores {
  std::vector<double> z;
  EmpiricalCDF ecdf;
};

// Fits the ECDF on `raw` and scores the same values.
inline NormalScores fit_normal_scores(std::span<const double> raw) {
  NormalScores out{{}, fit_ecdf(raw)};
  out.z = to_normal_scores(raw, out.ecdf);
  return out;
}

inline double common_scale(double y) { return normal_cdf(y); }

}  // namespace peerbench
