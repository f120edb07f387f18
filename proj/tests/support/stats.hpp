#pragma once

// Test-side statistical oracles, independent of the library code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/gamma.hpp>

namespace testsupport {

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic p-value of the KS statistic (Kolmogorov series with the
/// Stephens small-sample correction).
inline double ks_pvalue(double d, std::size_t n) {
  const double rn = std::sqrt(static_cast<double>(n));
  const double lambda = (rn + 0.12 + 0.11 / rn) * d;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline double ks_pvalue(const std::vector<double>& xs, const std::function<double(double)>& cdf) {
  return ks_pvalue(ks_statistic(xs, cdf), xs.size());
}

/// Two-sample KS p-value.
inline double ks2_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double rn = std::sqrt(ne);
  const double lambda = (rn + 0.12 + 0.11 / rn) * d;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return lambda < 1e-3 ? 1.0 : std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Pearson chi-square goodness-of-fit p-value for counts against probabilities.
inline double chi2_pvalue(const std::vector<std::uint64_t>& counts, const std::vector<double>& probs) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = total * probs[i];
    stat += (static_cast<double>(counts[i]) - e) * (static_cast<double>(counts[i]) - e) / e;
  }
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double gamma_cdf(double shape, double scale, double x) {
  return boost::math::cdf(boost::math::gamma_distribution<double>(shape, scale), x);
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double stddev(const std::vector<double>& xs) {
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace testsupport
