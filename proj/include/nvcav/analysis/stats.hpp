#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include <boost/math/distributions/beta.hpp>

#include "nvcav/errors.hpp"

namespace nvcav {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// One-sample Kolmogorov-Smirnov test against N(0,1); returns the asymptotic p-value.
inline double ks_normal_pvalue(std::vector<double> z) {
  if (z.empty()) throw InvalidParameter("KS test needs samples");
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = normal_cdf(z[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sn = std::sqrt(n);
  const double lam = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

struct Proportion {
  double p = 0;
  double sigma = 0;
  double lo = 0;  // 68% interval
  double hi = 0;
};

/// Binomial proportion with a normal-approximation error, or the exact
/// Clopper-Pearson 68% interval when `exact` is set.
inline Proportion binomial(std::uint64_t k, std::uint64_t n, bool exact = false) {
  if (n == 0) throw InvalidParameter("binomial proportion of zero trials");
  if (k > n) throw InvalidParameter("more successes than trials");
  Proportion r;
  r.p = static_cast<double>(k) / static_cast<double>(n);
  r.sigma = std::sqrt(r.p * (1 - r.p) / static_cast<double>(n));
  if (!exact) {
    r.lo = std::max(0.0, r.p - r.sigma);
    r.hi = std::min(1.0, r.p + r.sigma);
    return r;
  }
  const double alpha = 1 - 0.682689492137086;
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  r.lo = k == 0 ? 0.0 : boost::math::quantile(boost::math::beta_distribution<>(kk, nn - kk + 1), alpha / 2);
  r.hi = k == n ? 1.0 : boost::math::quantile(boost::math::beta_distribution<>(kk + 1, nn - kk), 1 - alpha / 2);
  r.sigma = 0.5 * (r.hi - r.lo);
  return r;
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace nvcav
