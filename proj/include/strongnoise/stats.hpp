#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "strongnoise/errors.hpp"

namespace strongnoise::stats {

inline double mean(std::span<const double> v) {
  if (v.empty()) throw InsufficientData("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> v) {
  if (v.size() < 2) throw InsufficientData("variance needs at least two samples");
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double standard_error(std::span<const double> v) {
  return std::sqrt(variance(v) / static_cast<double>(v.size()));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

/// Survival function of the Kolmogorov distribution, P(K > x).
inline double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF, with the
/// asymptotic Kolmogorov law and Stephens' finite-n correction.
inline KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InsufficientData("KS test on empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double rn = std::sqrt(n);
  return {d, kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d), sample.size()};
}

/// Two-sample Kolmogorov-Smirnov test.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InsufficientData("KS test on empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d), a.size() + b.size()};
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  std::size_t n = 0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("least_squares: size mismatch");
  if (x.size() < 2) throw InsufficientData("least_squares needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("least_squares: degenerate abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.n = x.size();
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return f;
}

/// Lag-1 sample autocorrelation.
inline double lag1_autocorrelation(std::span<const double> v) {
  if (v.size() < 3) throw InsufficientData("autocorrelation needs at least three samples");
  const double m = mean(v);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    den += (v[i] - m) * (v[i] - m);
    if (i + 1 < v.size()) num += (v[i] - m) * (v[i + 1] - m);
  }
  return den > 0.0 ? num / den : 0.0;
}

struct DispersionResult {
  double ratio = 1.0;
  double z = 0.0;
  double p_value = 1.0;
  std::size_t windows = 0;
};

/// Variance-to-mean ratio of counts; under a Poisson law the ratio is 1
/// with standard deviation sqrt(2 / (n - 1)).
inline DispersionResult dispersion_test(std::span<const double> counts) {
  if (counts.size() < 30) throw InsufficientData("dispersion test needs at least 30 windows");
  const double m = mean(counts);
  if (m <= 0.0) throw InsufficientData("dispersion test: all counts are zero");
  DispersionResult r;
  r.windows = counts.size();
  r.ratio = variance(counts) / m;
  r.z = (r.ratio - 1.0) / std::sqrt(2.0 / (static_cast<double>(counts.size()) - 1.0));
  r.p_value = two_sided_normal_p(r.z);
  return r;
}

/// Quantile by linear interpolation of the order statistics.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw InsufficientData("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace strongnoise::stats
