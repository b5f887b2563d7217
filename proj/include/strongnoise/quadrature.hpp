#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "strongnoise/errors.hpp"

namespace strongnoise::numeric {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QuadratureOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  std::size_t max_refinements = 15;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  double l1 = 0.0;
  std::size_t levels = 0;
};

namespace detail {

inline std::string describe(const char* what, double a, double b, const QuadratureResult& r) {
  std::ostringstream os;
  os << what << " on [" << a << ", " << b << "]: value=" << r.value << " error_estimate=" << r.error
     << " l1=" << r.l1 << " levels=" << r.levels;
  return os.str();
}

} // namespace detail

/// Double-exponential quadrature of f over [a, b]; b may be +infinity.
/// Endpoint singularities and algebraic tails are handled by the
/// tanh-sinh / exp-sinh substitutions, with adaptive Gauss-Kronrod as the
/// fallback on finite intervals. Throws NumericError when the error estimate
/// exceeds max(abs_tol, rel_tol * L1).
template <class F>
QuadratureResult integrate_detailed(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
  if (!(a <= b)) throw DomainError("integrate: lower limit exceeds upper limit");
  QuadratureResult r;
  if (a == b) return r;
  auto guarded = [&f](double x) {
    const double v = f(x);
    return std::isfinite(v) ? v : 0.0;
  };
  // Boost may stop one level before its error estimate meets the requested
  // tolerance, so ask for more than the acceptance check below.
  const double tol = std::min(opt.rel_tol * 0.1, 1e-9);
  auto converged = [&](const QuadratureResult& q) {
    return std::isfinite(q.value) && q.error <= std::max(opt.abs_tol, opt.rel_tol * q.l1);
  };
  // tanh-sinh abscissae degenerate on intervals that are narrow relative to
  // their position; adaptive Gauss-Kronrod does not.
  auto kronrod = [&] {
    QuadratureResult g;
    g.value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(guarded, a, b, opt.max_refinements, tol,
                                                                            &g.error, &g.l1);
    return g;
  };
  const bool narrow = std::isfinite(b) && (b - a) < 1e-6 * std::max(std::abs(a), std::abs(b));
  try {
    if (narrow) {
      r = kronrod();
    } else if (std::isinf(b)) {
      boost::math::quadrature::exp_sinh<double> q(opt.max_refinements);
      r.value = q.integrate(guarded, a, b, tol, &r.error, &r.l1, &r.levels);
    } else {
      // Shifted to start at 0: Boost 1.74 recomputes left-end abscissae
      // imprecisely unless |a| < 1/2.
      boost::math::quadrature::tanh_sinh<double> q(opt.max_refinements);
      auto shifted = [&](double t) { return guarded(a + t); };
      r.value = q.integrate(shifted, 0.0, b - a, tol, &r.error, &r.l1, &r.levels);
      if (!converged(r)) {
        const auto g = kronrod();
        if (converged(g)) r = g;
      }
    }
  } catch (const std::exception& e) {
    throw NumericError(std::string("quadrature failed: ") + e.what() + " (" +
                       detail::describe("integral", a, b, r) + ")");
  }
  if (!converged(r)) throw NumericError("quadrature did not converge: " + detail::describe("integral", a, b, r));
  return r;
}

template <class F>
double integrate(F&& f, double a, double b, const QuadratureOptions& opt = {}) {
  return integrate_detailed(std::forward<F>(f), a, b, opt).value;
}

/// Integral over [a, b] split at interior breakpoints.
template <class F>
double integrate_pieces(F&& f, std::vector<double> points, const QuadratureOptions& opt = {}) {
  std::sort(points.begin(), points.end());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) sum += integrate(f, points[i], points[i + 1], opt);
  return sum;
}

inline double log_add_exp(double a, double b) noexcept {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// Location and value of the maximum of g over [lo, hi] (0 < lo < hi):
/// scan of a log-spaced grid followed by Brent refinement around the best
/// node. Assumes the maximum is not narrower than the refinement bracket.
template <class G>
std::pair<double, double> log_grid_peak(G&& g, double lo, double hi, int points = 1601) {
  const double l0 = std::log(lo), l1 = std::log(hi);
  const double step = (l1 - l0) / (points - 1);
  int best = 0;
  double best_v = -kInf;
  for (int i = 0; i < points; ++i) {
    const double v = g(std::exp(l0 + step * i));
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  if (!std::isfinite(best_v)) return {std::exp(l0 + step * best), best_v};
  const double ua = l0 + step * std::max(0, best - 1);
  const double ub = l0 + step * std::min(points - 1, best + 1);
  auto neg = [&](double u) {
    const double v = g(std::exp(u));
    return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
  };
  const auto r = boost::math::tools::brent_find_minima(neg, ua, ub, 40);
  if (-r.second > best_v) return {std::exp(r.first), -r.second};
  return {std::exp(l0 + step * best), best_v};
}

/// log of the integral of exp(logf) over [a, b] (b may be infinite).
/// The integrand is rescaled by its maximum and split there, so sharp peaks
/// and huge dynamic ranges stay representable.
template <class G>
double log_integrate(G&& logf, double a, double b, const QuadratureOptions& opt = {}) {
  if (!(a < b)) throw DomainError("log_integrate: empty interval");
  const double lo = std::max(a, 1e-250);
  const double hi = std::isinf(b) ? 1e250 : b;
  auto [xp, shift] = log_grid_peak(logf, lo, hi);
  if (!std::isfinite(shift))
    throw NumericError("log_integrate: integrand vanishes or is non-finite on the probe grid");
  xp = std::clamp(xp, a, b);
  auto f = [&](double x) { return std::exp(logf(x) - shift); };
  // Slivers narrower than rounding carry no mass.
  const double sliver = 1e-13 * std::max(std::abs(xp), 1e-300);
  double total = 0.0;
  if (xp - a > sliver) total += integrate(f, a, xp, opt);
  if (b - xp > sliver) total += integrate(f, xp, b, opt);
  if (!(total > 0.0)) throw NumericError("log_integrate: non-positive integral");
  return shift + std::log(total);
}

/// Root of a function with a sign change on [lo, hi] (TOMS 748).
template <class F>
double find_root(F&& f, double lo, double hi, int bits = 48, std::uintmax_t max_iter = 200) {
  double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0) == (fhi > 0)) {
    std::ostringstream os;
    os << "find_root: no sign change on [" << lo << ", " << hi << "] (f=" << flo << ", " << fhi << ")";
    throw NumericError(os.str());
  }
  std::uintmax_t it = max_iter;
  try {
    auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                               boost::math::tools::eps_tolerance<double>(bits), it);
    return 0.5 * (r.first + r.second);
  } catch (const std::exception& e) {
    throw NumericError(std::string("find_root failed: ") + e.what());
  }
}

} // namespace strongnoise::numeric
