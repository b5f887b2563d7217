#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "strongnoise/errors.hpp"

namespace strongnoise {

/// A driver f on an increasing time grid.
struct DiscretePath {
  std::vector<double> times;
  std::vector<double> values;
};

/// (b, y) with y = b + f, b nondecreasing from 0 and y >= 0.
struct DecompositionPair {
  std::vector<double> b_part;
  std::vector<double> y_part;
};

struct CheckReport {
  bool ok = true;
  std::string reason;
  std::optional<std::size_t> index;

  explicit operator bool() const noexcept { return ok; }
};

namespace detail {

inline void check_driver(const DiscretePath& f, const char* op) {
  if (f.times.size() != f.values.size()) throw ValidationError(std::string(op) + ": times and values differ in length");
  if (f.times.empty()) throw ValidationError(std::string(op) + ": empty driver");
  for (std::size_t i = 1; i < f.times.size(); ++i)
    if (!(f.times[i] > f.times[i - 1])) throw ValidationError(std::string(op) + ": times must be strictly increasing");
}

inline void check_pair(const DiscretePath& f, const DecompositionPair& p, const char* op) {
  check_driver(f, op);
  if (p.b_part.size() != f.values.size() || p.y_part.size() != f.values.size())
    throw ValidationError(std::string(op) + ": pair and driver live on different grids");
}

inline CheckReport fail(std::string why, std::size_t i) { return {false, std::move(why), i}; }

} // namespace detail

/// Minimal admissible pair: a_t = max(0, max_{s<=t} -f_s), x = a + f.
inline DecompositionPair skorokhod_decompose(const DiscretePath& f) {
  detail::check_driver(f, "skorokhod_decompose");
  if (f.values.front() < 0.0) throw DomainError("skorokhod_decompose: the driver must start at f_0 >= 0");
  DecompositionPair p;
  p.b_part.resize(f.values.size());
  p.y_part.resize(f.values.size());
  double a = 0.0;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    a = std::max(a, -f.values[i]);
    p.b_part[i] = a;
    p.y_part[i] = std::max(0.0, a + f.values[i]);
  }
  return p;
}

/// b nondecreasing (no tolerance), b_0 = 0, y >= 0, y_0 = f_0 and
/// |y - b - f| <= 1e-12 max(1, |f|).
inline CheckReport verify_admissible(const DiscretePath& f, const DecompositionPair& p) {
  detail::check_pair(f, p, "verify_admissible");
  if (p.b_part.front() != 0.0) return detail::fail("b_0 != 0", 0);
  if (p.y_part.front() != f.values.front()) return detail::fail("y_0 != f_0", 0);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    if (i > 0 && p.b_part[i] < p.b_part[i - 1]) return detail::fail("b decreases", i);
    if (p.y_part[i] < 0.0) return detail::fail("y is negative", i);
    if (std::abs(p.y_part[i] - p.b_part[i] - f.values[i]) > 1e-12 * std::max(1.0, std::abs(f.values[i])))
      return detail::fail("y != b + f", i);
  }
  return {};
}

/// Grid form of the measure condition: a step where b grows must touch
/// min(y_i, y_{i+1}) <= slack.
inline CheckReport verify_reflection_support(const DiscretePath& f, const DecompositionPair& p, double slack) {
  detail::check_pair(f, p, "verify_reflection_support");
  for (std::size_t i = 0; i + 1 < f.values.size(); ++i)
    if (p.b_part[i + 1] > p.b_part[i] && std::min(p.y_part[i], p.y_part[i + 1]) > slack)
      return detail::fail("b grows away from 0", i);
  return {};
}

/// Approximate (beta, upsilon) decomposition: on every grid step whose
/// endpoints both satisfy y >= upsilon, b grows by at most beta dt. Slopes on
/// longer stretches follow by summation.
inline CheckReport verify_approximate(const DiscretePath& f, const DecompositionPair& p, double beta, double upsilon) {
  detail::check_pair(f, p, "verify_approximate");
  if (!(beta >= 0.0) || !(upsilon > 0.0)) throw DomainError("verify_approximate: need beta >= 0 and upsilon > 0");
  for (std::size_t i = 0; i + 1 < f.values.size(); ++i) {
    if (p.y_part[i] < upsilon || p.y_part[i + 1] < upsilon) continue;
    const double db = p.b_part[i + 1] - p.b_part[i];
    const double allowed = beta * (f.times[i + 1] - f.times[i]);
    if (db > allowed * (1.0 + 1e-12) + 1e-300) return detail::fail("b grows faster than beta while y >= upsilon", i);
  }
  return {};
}

struct BoundReport {
  std::vector<double> gap;   // b_t - a_t
  std::vector<double> bound; // upsilon + beta t
  double max_gap = 0.0;
  bool ok = true;
  std::optional<std::size_t> witness;
};

/// Compares b with the Skorokhod term a of the same driver:
/// 0 <= b_t - a_t <= upsilon + beta t, checked without tolerance.
inline BoundReport bound_check(const DiscretePath& f, const DecompositionPair& p, double beta, double upsilon) {
  detail::check_pair(f, p, "bound_check");
  const auto exact = skorokhod_decompose(f);
  BoundReport r;
  r.gap.resize(f.values.size());
  r.bound.resize(f.values.size());
  const double t0 = f.times.front();
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    r.gap[i] = p.b_part[i] - exact.b_part[i];
    r.bound[i] = upsilon + beta * (f.times[i] - t0);
    r.max_gap = std::max(r.max_gap, r.gap[i]);
    if (r.ok && (r.gap[i] < 0.0 || r.gap[i] > r.bound[i])) {
      r.ok = false;
      r.witness = i;
    }
  }
  return r;
}

/// (1 + 1/alpha)(alpha eps t)^{1/(1+alpha)}: the best bound for the
/// eps-equation, from the family of (eps C^-alpha, C) decompositions.
inline double eps_equation_bound(double eps, double alpha, double t) {
  return (1.0 + 1.0 / alpha) * std::pow(alpha * eps * t, 1.0 / (1.0 + alpha));
}

/// Positive root y of y - c y^-alpha = r (unique: the left side increases
/// from -inf to inf). Safeguarded Newton in log y.
inline double solve_implicit_repulsion(double r, double c, double alpha) {
  const double y_hi = std::max(r, 0.0) + std::pow(c, 1.0 / (1.0 + alpha));
  const double y_lo = std::max(r, std::pow(c / (y_hi + std::abs(r)), 1.0 / alpha));
  if (!(y_lo > 0.0) || !std::isfinite(y_hi)) return std::numeric_limits<double>::quiet_NaN();
  // The brackets coincide up to rounding when r = 0.
  if (y_lo >= y_hi * (1.0 - 1e-15)) return 0.5 * (y_lo + y_hi);
  auto f = [&](double u) {
    const double e = std::exp(u), g = c * std::exp(-alpha * u);
    return std::pair<double, double>(e - g - r, e + alpha * g);
  };
  const double lo = std::log(y_lo), hi = std::log(y_hi);
  std::uintmax_t iters = 100;
  const double u = boost::math::tools::newton_raphson_iterate(f, hi, lo, hi, 50, iters);
  return std::exp(u);
}

/// Grid solution of y_t = f_t + eps int_0^t y_u^-alpha du by the implicit
/// step y_{i+1} = y_i + (f_{i+1} - f_i) + eps dt / y_{i+1}^alpha; b is the
/// accumulated eps-integral. f_0 = 0 needs no special start: the implicit
/// equation has a positive root for any right-hand side.
inline DecompositionPair solve_eps_equation(const DiscretePath& f, double eps, double alpha) {
  detail::check_driver(f, "solve_eps_equation");
  if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("solve_eps_equation: eps must be > 0");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("solve_eps_equation: alpha must be > 0");
  if (f.values.front() < 0.0) throw DomainError("solve_eps_equation: the driver must start at f_0 >= 0");
  DecompositionPair p;
  const std::size_t n = f.values.size();
  p.b_part.resize(n);
  p.y_part.resize(n);
  p.b_part[0] = 0.0;
  p.y_part[0] = f.values[0];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dt = f.times[i + 1] - f.times[i];
    const double r = p.y_part[i] + (f.values[i + 1] - f.values[i]);
    const double y = solve_implicit_repulsion(r, eps * dt, alpha);
    if (!(y > 0.0) || !std::isfinite(y)) {
      std::ostringstream os;
      os << "solve_eps_equation: implicit step failed at index " << i + 1 << " (r = " << r << ")";
      throw NumericError(os.str());
    }
    p.b_part[i + 1] = p.b_part[i] + eps * dt * std::pow(y, -alpha);
    // y = b + f holds by construction; store it in that form so that the
    // pair is admissible to rounding.
    p.y_part[i + 1] = p.b_part[i + 1] + f.values[i + 1];
  }
  return p;
}

} // namespace strongnoise
