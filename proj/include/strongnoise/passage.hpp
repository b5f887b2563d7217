#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "strongnoise/errors.hpp"
#include "strongnoise/models.hpp"
#include "strongnoise/quadrature.hpp"
#include "strongnoise/rng.hpp"
#include "strongnoise/simulate.hpp"
#include "strongnoise/stats.hpp"

namespace strongnoise {

// ---------------------------------------------------------------------------
// Limit laws

/// Atom at T = 0 plus an exponential component.
struct PassageLaw {
  double atom_weight = 0.0;
  double exp_rate = 1.0;

  double mean() const { return (1.0 - atom_weight) / exp_rate; }
  double cdf(double t) const { return t < 0.0 ? 0.0 : 1.0 - (1.0 - atom_weight) * std::exp(-exp_rate * t); }
  double survival(double t) const { return 1.0 - cdf(t); }
  double laplace(double sigma) const { return atom_weight + (1.0 - atom_weight) * exp_rate / (exp_rate + sigma); }
};

/// E[e^{-sigma T}] of a PassageLaw by quadrature of the exponential part.
inline double laplace_by_quadrature(const PassageLaw& law, double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("laplace_by_quadrature: sigma must be >= 0");
  auto f = [&](double t) { return std::exp(-(sigma + law.exp_rate) * t); };
  const double tail = numeric::integrate(f, 0.0, numeric::kInf, {1e-15, 1e-13, 15});
  return law.atom_weight + (1.0 - law.atom_weight) * law.exp_rate * tail;
}

namespace detail {

inline void require_ordered(double y, double z, const char* op) {
  if (!(y > 0.0) || !(z > y)) throw DomainError(std::string(op) + ": need 0 < y < z");
}

} // namespace detail

/// Limit of E[e^{-sigma T_{y->z}}]: (1 + sigma q(y)/Jhat) / (1 + sigma q(z)/Jhat).
/// z = +inf gives 0 for sigma > 0.
inline double limit_laplace_T(const ScalingFamily& fam, double y, double z, double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("limit_laplace_T: sigma must be >= 0");
  if (!(y > 0.0) || !(z > y)) throw DomainError("limit_laplace_T: need 0 < y < z");
  if (sigma == 0.0) return 1.0;
  if (std::isinf(z)) return 0.0;
  const double jh = fam.j_hat();
  return (1.0 + sigma * fam.scale_q(y) / jh) / (1.0 + sigma * fam.scale_q(z) / jh);
}

/// Limit law of T_{y->z}: atom q(y)/q(z), rate Jhat/q(z).
inline PassageLaw limit_mixture(const ScalingFamily& fam, double y, double z) {
  detail::require_ordered(y, z, "limit_mixture");
  const double qz = fam.scale_q(z);
  return {fam.scale_q(y) / qz, fam.j_hat() / qz};
}

// ---------------------------------------------------------------------------
// Exit probabilities

/// Probability of reaching z before x from y, for the model's eps:
/// ratio of integrals of the scale density e^{2 h0 + 2 eps h1}; at eps = 0
/// this is (q(y) - q(x)) / (q(z) - q(x)).
inline double exit_probability(const SdeModel& m, double x, double y, double z) {
  detail::require_scale_family(m, "exit_probability");
  if (!(x >= 0.0) || !(y > x) || !(z > y)) throw DomainError("exit_probability: need 0 <= x < y < z");
  const double eps = m.epsilon();
  if (eps == 0.0) {
    const double qx = scale_q(m, x);
    return (scale_q(m, y) - qx) / (scale_q(m, z) - qx);
  }
  // h1(0+) = +inf for every family with a closed form, so 0 is never reached.
  if (x == 0.0 && m.family() != Family::Custom) return 1.0;
  auto g = [&](double u) { return 2.0 * scale_h0(m, u) + 2.0 * eps * scale_h1(m, u); };
  const auto qo = detail::model_quadrature(m);
  const double l_xy = numeric::log_integrate(g, x, y, qo);
  const double l_yz = numeric::log_integrate(g, y, z, qo);
  return 1.0 / (1.0 + std::exp(l_yz - l_xy));
}

/// The two iterated limits of the exit probability at x -> 0+ and
/// eps -> 0+, which differ: taking eps first gives q(y)/q(z), taking x
/// first gives 1 (the origin is unreachable for every eps > 0).
struct ExitLimits {
  double eps_first = 0.0;
  double x_first = 1.0;
};

inline ExitLimits exit_probability_limits(const SdeModel& m, double y, double z) {
  detail::require_ordered(y, z, "exit_probability_limits");
  return {scale_q(m, y) / scale_q(m, z), 1.0};
}

// ---------------------------------------------------------------------------
// Riccati equations

enum class CrossingKind { Up, Down };

/// phi on a grid and its running integral from grid[0]. For Up,
/// E[e^{-sigma T_{y->z}}] = exp(-int_y^z phi); for Down,
/// E[e^{-sigma T_{y->x}}] = exp(-int_x^y phi) (phi = -u'/u > 0 there).
struct PhiSolution {
  std::vector<double> grid;
  std::vector<double> phi;
  std::vector<double> integral;

  /// exp(-int phi) between grid points i < j.
  double transform(std::size_t i, std::size_t j) const {
    if (!(i < j) || j >= grid.size()) throw DomainError("PhiSolution::transform: need i < j < grid size");
    return std::exp(-(integral[j] - integral[i]));
  }
};

struct PhiOdeOptions {
  /// Integration starts at origin_factor * eps.
  double origin_factor = 1e-2;
  /// Largest step in log u.
  double max_log_step = 1e-3;
};

namespace detail {

inline void check_grid(std::span<const double> grid, const char* op) {
  if (grid.empty()) throw DomainError(std::string(op) + ": empty grid");
  if (!(grid.front() > 0.0)) throw DomainError(std::string(op) + ": grid points must be > 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw DomainError(std::string(op) + ": grid must be strictly increasing");
}

/// Positive root of k u p^2 + (1 + k B) p - (r + k A) = 0, the implicit
/// stage p - k (A - B p - u p^2) = r.
inline double riccati_stage(double r, double k, double A, double B, double u) {
  const double alpha = k * u, beta = 1.0 + k * B, gamma = r + k * A;
  if (alpha == 0.0) return gamma / beta;
  const double disc = beta * beta + 4.0 * alpha * gamma;
  if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double sq = std::sqrt(disc);
  return beta > 0.0 ? 2.0 * gamma / (beta + sq) : (sq - beta) / (2.0 * alpha);
}

} // namespace detail

/// Up: integrates d phi/ds = A - B phi - u phi^2 in s = ln u, where
/// A = 2 sigma u / (lambda^2 c^2) and B = (eps a - b) u / c^2, from
/// u0 = origin_factor * eps with phi(u0) on the slow manifold, by TR-BDF2
/// (L-stable; each stage is a quadratic solved in closed form).
/// Down: linear family at eps = 0 only, phi = c0 / u with
/// c0 = (sqrt((b+1)^2 + 8 sigma / lambda^2) - (b+1)) / 2.
inline PhiSolution solve_phi_ode(const SdeModel& m, double sigma, CrossingKind direction,
                                 const std::vector<double>& grid, const PhiOdeOptions& opt = {}) {
  detail::require_scale_family(m, "solve_phi_ode");
  detail::check_grid(grid, "solve_phi_ode");
  if (!(sigma >= 0.0)) throw DomainError("solve_phi_ode: sigma must be >= 0");
  const double l2 = m.lambda() * m.lambda();
  PhiSolution sol;
  sol.grid = grid;
  sol.phi.assign(grid.size(), 0.0);
  sol.integral.assign(grid.size(), 0.0);

  if (direction == CrossingKind::Down) {
    if (m.family() != Family::Linear || m.epsilon() != 0.0)
      throw UnsupportedFamily("solve_phi_ode: the down-crossing equation is solved for the linear family at eps = 0");
    const double b1 = m.params_as<LinearParams>().b + 1.0;
    const double c0 = 0.5 * (std::sqrt(b1 * b1 + 8.0 * sigma / l2) - b1);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      sol.phi[i] = c0 / grid[i];
      sol.integral[i] = c0 * std::log(grid[i] / grid[0]);
    }
    return sol;
  }

  const double eps = m.epsilon();
  if (!(eps > 0.0)) throw DomainError("solve_phi_ode: the up-crossing equation needs eps > 0");
  if (sigma == 0.0) return sol;
  const double u0 = opt.origin_factor * eps;
  if (grid.front() < u0) throw DomainError("solve_phi_ode: grid starts below the integration origin");

  auto coef = [&](double s, double& A, double& B, double& u) {
    u = std::exp(s);
    const double c = m.c(u);
    const double c2 = c * c;
    A = 2.0 * sigma * u / (l2 * c2);
    B = (eps * m.a(u) - m.b(u)) * u / c2;
  };
  auto rhs = [](double p, double A, double B, double u) { return A - B * p - u * p * p; };

  double s = std::log(u0), A, B, u;
  coef(s, A, B, u);
  double p;
  {
    // Slow manifold: c^2 p^2 + (eps a - b) p = 2 sigma / lambda^2.
    const double c = m.c(u0);
    const double qa = c * c, qb = eps * m.a(u0) - m.b(u0), qc = 2.0 * sigma / l2;
    p = qa == 0.0 ? qc / qb : 2.0 * qc / (qb + std::sqrt(qb * qb + 4.0 * qa * qc));
  }
  double integral = 0.0;
  const double g = 2.0 - std::sqrt(2.0);
  const double d = (1.0 - g) / (2.0 - g);
  const double w1 = 1.0 / (g * (2.0 - g)), w0 = (1.0 - g) * (1.0 - g) / (g * (2.0 - g));

  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double target = std::log(grid[gi]);
    const double span = target - s;
    const auto n = static_cast<std::size_t>(std::ceil(span / opt.max_log_step));
    const double h = n > 0 ? span / static_cast<double>(n) : 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double f0 = rhs(p, A, B, u);
      const double u_old = u, p_old = p;
      double Ag, Bg, ug;
      coef(s + g * h, Ag, Bg, ug);
      const double kt = 0.5 * g * h;
      const double pg = detail::riccati_stage(p + kt * f0, kt, Ag, Bg, ug);
      s = (k + 1 == n) ? target : s + h;
      coef(s, A, B, u);
      p = detail::riccati_stage(w1 * pg - w0 * p, d * h, A, B, u);
      if (!std::isfinite(p) || !std::isfinite(pg)) {
        std::ostringstream os;
        os << "solve_phi_ode: implicit stage failed near u = " << u
           << "; try a smaller origin_factor or max_log_step";
        throw NumericError(os.str());
      }
      integral += 0.5 * h * (u_old * p_old + u * p);
    }
    sol.phi[gi] = p;
    sol.integral[gi] = integral;
  }
  const double base = sol.integral.front();
  for (double& v : sol.integral) v -= base;
  return sol;
}

/// Solves the limiting integral equation
///   phi(z) e^{-2 h0(z)} + int_0^z phi^2 e^{-2 h0} du = sigma / Jhat
/// through F = phi e^{-2 h0}, which obeys F' = -F^2 q', integrated in ln z
/// by an adaptive Dormand-Prince scheme from far below the grid.
inline std::vector<double> solve_phi_integral(const ScalingFamily& fam, double sigma, const std::vector<double>& z_grid) {
  detail::check_grid(z_grid, "solve_phi_integral");
  if (!(sigma >= 0.0)) throw DomainError("solve_phi_integral: sigma must be >= 0");
  std::vector<double> phi(z_grid.size(), 0.0);
  if (sigma == 0.0) return phi;
  const SdeModel& m = fam.base();
  const double f0 = sigma / fam.j_hat();
  const double z_start = z_grid.front() * 1e-14;
  // Picard start: F(z) = f0 - f0^2 q(z) + O(q^2).
  const double q_start = scale_q(m, z_start);
  using State = std::vector<double>;
  State F{f0 - f0 * f0 * q_start};
  auto sys = [&](const State& x, State& dxdt, double s) {
    const double z = std::exp(s);
    dxdt[0] = -x[0] * x[0] * z * scale_q_prime(m, z);
  };
  namespace ode = boost::numeric::odeint;
  auto stepper = ode::make_dense_output(1e-13, 1e-12, ode::runge_kutta_dopri5<State>());
  std::vector<double> s_points{std::log(z_start)};
  for (double z : z_grid) s_points.push_back(std::log(z));
  std::vector<double> values;
  try {
    ode::integrate_times(stepper, sys, F, s_points.begin(), s_points.end(), 1e-3,
                         [&](const State& x, double) { values.push_back(x[0]); });
  } catch (const std::exception& e) {
    throw NumericError(std::string("solve_phi_integral: integration failed: ") + e.what());
  }
  for (std::size_t i = 0; i < z_grid.size(); ++i) {
    phi[i] = values[i + 1] * scale_q_prime(m, z_grid[i]);
    if (!std::isfinite(phi[i])) throw NumericError("solve_phi_integral: non-finite solution");
  }
  return phi;
}

/// The limiting solution (sigma/Jhat) q'(z) / (1 + sigma q(z)/Jhat).
inline double phi_integral_closed_form(const ScalingFamily& fam, double sigma, double z) {
  const double r = sigma / fam.j_hat();
  return r * scale_q_prime(fam.base(), z) / (1.0 + r * fam.scale_q(z));
}

// ---------------------------------------------------------------------------
// Regularity diagnostics

/// int_0^z P_inv(eps, [0, u])^2 e^{2 eps h1(u) + 2 h0(u)} du, which tends to 0
/// as eps -> 0 and then z -> 0.
inline double variance_regularity_integral(const SdeModel& m, double eps, double z) {
  detail::require_scale_family(m, "variance_regularity_integral");
  if (!(eps > 0.0) || !(z > 0.0)) throw DomainError("variance_regularity_integral: need eps > 0 and z > 0");
  // u = eps s puts the inner edge at s = O(1).
  auto f = [&](double s) {
    if (!(s > 0.0)) return 0.0;
    const double u = eps * s;
    const double lp = log_invariant_mass_below(m, eps, u);
    if (lp == -numeric::kInf) return 0.0;
    return eps * std::exp(2.0 * lp + 2.0 * eps * scale_h1(m, u) + 2.0 * scale_h0(m, u));
  };
  std::vector<double> pts{0.0, z / eps};
  for (double k : {1.0, 10.0, 100.0})
    if (k < z / eps) pts.push_back(k);
  return numeric::integrate_pieces(f, pts, {1e-14, 1e-4, 15});
}

// ---------------------------------------------------------------------------
// Crossings on stored paths

struct CrossingRecord {
  CrossingKind kind = CrossingKind::Up;
  double from_level = 0.0;
  double to_level = 0.0;
  double start = 0.0;
  double duration = 0.0;
  /// Minimum during an up-crossing, maximum during a down-crossing.
  double extremum = 0.0;
};

namespace detail {

/// Time at which the chord from (t0, x0) to (t1, x1) meets `level`; an
/// exact hit of a sample returns the sample time.
inline double chord_time(double t0, double x0, double t1, double x1, double level) {
  if (x0 == level) return t0;
  if (x1 == level) return t1;
  return t0 + (t1 - t0) * (level - x0) / (x1 - x0);
}

} // namespace detail

/// Alternating passages from `from` to `to` on a sampled path: each record
/// starts at the first hit of `from` after the previous record ends (or
/// after time 0) and ends at the next hit of `to`. Hits are located by
/// linear interpolation between bracketing samples. Up when from < to.
inline std::vector<CrossingRecord> estimate_crossings(const std::vector<double>& times,
                                                      const std::vector<double>& values, double from, double to) {
  if (times.size() != values.size()) throw ValidationError("estimate_crossings: times and values differ in length");
  if (!(from > 0.0) || !(to > 0.0) || from == to) throw DomainError("estimate_crossings: need distinct positive levels");
  const CrossingKind kind = to > from ? CrossingKind::Up : CrossingKind::Down;
  const bool up = kind == CrossingKind::Up;
  std::vector<CrossingRecord> out;
  bool armed = false;
  double start = 0.0, ext = from;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    const double x0 = values[i], x1 = values[i + 1];
    if (!armed) {
      if (std::min(x0, x1) <= from && from <= std::max(x0, x1)) {
        armed = true;
        start = detail::chord_time(times[i], x0, times[i + 1], x1, from);
        ext = from;
      } else {
        continue;
      }
    }
    const bool reached = up ? x1 >= to : x1 <= to;
    if (reached) {
      const double t_end = detail::chord_time(times[i], x0, times[i + 1], x1, to);
      out.push_back({kind, from, to, start, std::max(0.0, t_end - start), ext});
      armed = false;
    } else {
      ext = up ? std::min(ext, x1) : std::max(ext, x1);
    }
  }
  return out;
}

inline std::vector<CrossingRecord> estimate_crossings(const Path& path, double from, double to) {
  return estimate_crossings(path.times, path.values, from, to);
}

// ---------------------------------------------------------------------------
// Streaming first passages

enum class ExitSide { Lower, Upper, None };

struct FirstPassage {
  double time = 0.0;
  ExitSide side = ExitSide::None;
  double max = 0.0;
  double min = 0.0;
  std::uint64_t steps = 0;
};

/// Runs the SDE from x0 until it leaves (lower, upper) or `horizon` ends.
/// In-step exits and extrema come from the sampled bridge extrema; the exit
/// time is the chord crossing when the endpoint is outside, otherwise the
/// step midpoint. Use lower = -inf or upper = +inf for one-sided passages.
inline FirstPassage first_passage(const SdeModel& m, double x0, double lower, double upper, double horizon, double dt,
                                  const BrownianStream& stream, const SimulationOptions& opt = {}) {
  if (!(lower < upper)) throw DomainError("first_passage: need lower < upper");
  FirstPassage fp;
  fp.max = fp.min = x0;
  if (x0 <= lower || x0 >= upper) {
    fp.side = x0 <= lower ? ExitSide::Lower : ExitSide::Upper;
    return fp;
  }
  const auto s = simulate_stream(m, x0, horizon, dt, stream, opt, [&](const StepView& v) {
    if (v.max_envelope() > fp.max) fp.max = std::max(fp.max, v.max());
    if (v.min_envelope() < fp.min) fp.min = std::min(fp.min, v.min());
    if (v.x1 >= upper || fp.max >= upper) {
      fp.side = ExitSide::Upper;
      fp.time = v.x1 >= upper ? detail::chord_time(v.t0, v.x0, v.t1, v.x1, upper) : 0.5 * (v.t0 + v.t1);
      return false;
    }
    if (v.x1 <= lower || fp.min <= lower) {
      fp.side = ExitSide::Lower;
      fp.time = v.x1 <= lower ? detail::chord_time(v.t0, v.x0, v.t1, v.x1, lower) : 0.5 * (v.t0 + v.t1);
      return false;
    }
    return true;
  });
  fp.steps = s.steps;
  if (fp.side == ExitSide::None) fp.time = s.final_time;
  return fp;
}

struct PassageSample {
  std::vector<double> durations;
  /// Maximum (down-crossings) or minimum (up-crossings) during each passage.
  std::vector<double> extrema;
  std::size_t censored = 0;
};

struct PassageSampling {
  double dt = 0.0;
  /// Passages longer than this are censored.
  double horizon = 1e3;
  std::optional<Scheme> scheme;
  unsigned workers = 1;
};

/// n independent passages from y to the level `to` (path id i for the i-th).
inline PassageSample sample_passages(const SdeModel& m, double y, double to, std::size_t n,
                                     const BrownianStream& stream, const PassageSampling& ps) {
  if (!(ps.dt > 0.0)) throw ValidationError("sample_passages: dt must be > 0");
  const bool up = to > y;
  const double inf = numeric::kInf;
  std::vector<FirstPassage> runs(n);
  SimulationOptions so;
  so.scheme = ps.scheme;
  parallel_for(n, ps.workers, [&](std::size_t i) {
    runs[i] = first_passage(m, y, up ? -inf : to, up ? to : inf, ps.horizon, ps.dt,
                            stream.with_path(static_cast<std::uint32_t>(i)), so);
  });
  PassageSample out;
  for (const auto& r : runs) {
    if (r.side == ExitSide::None) {
      ++out.censored;
      continue;
    }
    out.durations.push_back(r.time);
    out.extrema.push_back(up ? r.min : r.max);
  }
  return out;
}

struct ExitEstimate {
  std::size_t upper = 0;
  std::size_t lower = 0;
  std::size_t censored = 0;
  double probability = 0.0;
  double standard_error = 0.0;
};

/// Monte Carlo frequency of leaving (x, z) through z, starting from y.
inline ExitEstimate estimate_exit_probability(const SdeModel& m, double x, double y, double z, std::size_t n,
                                              const BrownianStream& stream, const PassageSampling& ps) {
  if (!(x < y) || !(y < z)) throw DomainError("estimate_exit_probability: need x < y < z");
  std::vector<ExitSide> side(n);
  SimulationOptions so;
  so.scheme = ps.scheme;
  parallel_for(n, ps.workers, [&](std::size_t i) {
    side[i] = first_passage(m, y, x, z, ps.horizon, ps.dt, stream.with_path(static_cast<std::uint32_t>(i)), so).side;
  });
  ExitEstimate e;
  for (ExitSide s : side) {
    if (s == ExitSide::Upper) ++e.upper;
    else if (s == ExitSide::Lower) ++e.lower;
    else ++e.censored;
  }
  const double k = static_cast<double>(e.upper + e.lower);
  if (k == 0.0) throw InsufficientData("estimate_exit_probability: no path left the interval");
  e.probability = static_cast<double>(e.upper) / k;
  e.standard_error = std::sqrt(std::max(e.probability * (1.0 - e.probability), 1.0 / k) / k);
  return e;
}

/// Mean of e^{-sigma T} with its standard error.
struct LaplaceEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

inline LaplaceEstimate empirical_laplace(std::span<const double> durations, double sigma) {
  if (durations.size() < 2) throw InsufficientData("empirical_laplace needs at least two durations");
  std::vector<double> w(durations.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(-sigma * durations[i]);
  return {stats::mean(w), stats::standard_error(w)};
}

// ---------------------------------------------------------------------------
// Finite-lambda mixture estimation

struct MixtureFit {
  double threshold = 0.0;
  double atom_fraction = 0.0;
  /// Atom fractions with the threshold halved and doubled.
  double atom_fraction_low = 0.0;
  double atom_fraction_high = 0.0;
  double tail_rate = 0.0;
  double tail_rate_se = 0.0;
  std::size_t tail_count = 0;
  /// Tail excesses over the threshold against Exponential(reference_rate).
  stats::KsResult tail_ks;
};

/// A duration counts toward the atom when it is below 10 lambda^-2 (the
/// classical time scale); the tail rate is the maximum-likelihood rate of
/// the excesses over the threshold, which are exponential by memorylessness.
inline MixtureFit fit_passage_mixture(std::span<const double> durations, double lambda, double reference_rate) {
  if (durations.size() < 50) throw InsufficientData("fit_passage_mixture needs at least 50 durations");
  const double unit = 1.0 / (lambda * lambda);
  auto frac_below = [&](double thr) {
    return static_cast<double>(std::count_if(durations.begin(), durations.end(), [&](double d) { return d < thr; })) /
           static_cast<double>(durations.size());
  };
  MixtureFit f;
  f.threshold = 10.0 * unit;
  f.atom_fraction = frac_below(f.threshold);
  f.atom_fraction_low = frac_below(5.0 * unit);
  f.atom_fraction_high = frac_below(20.0 * unit);
  std::vector<double> excess;
  for (double d : durations)
    if (d >= f.threshold) excess.push_back(d - f.threshold);
  f.tail_count = excess.size();
  if (excess.size() < 20) throw InsufficientData("fit_passage_mixture: fewer than 20 tail durations");
  f.tail_rate = 1.0 / stats::mean(excess);
  f.tail_rate_se = f.tail_rate / std::sqrt(static_cast<double>(excess.size()));
  f.tail_ks = stats::ks_one_sample(excess, [&](double t) { return 1.0 - std::exp(-reference_rate * t); });
  return f;
}

// ---------------------------------------------------------------------------
// Down-crossing scaling

struct DownScalingReport {
  std::vector<double> lambdas;
  std::vector<double> means;
  std::vector<double> standard_errors;
  double slope = 0.0;
  double slope_se = 0.0;
};

/// Mean of T_{y->x} along a scaling family at each lambda (n_paths passages
/// each, dt = dt_factor lambda^-2) and the least-squares slope of log-mean
/// against log lambda, which tends to -2.
inline DownScalingReport downcross_scaling_check(const ScalingFamily& fam, double y, double x,
                                                 const std::vector<double>& lambdas, std::size_t n_paths,
                                                 const BrownianStream& stream, double dt_factor = 0.1,
                                                 unsigned workers = 1) {
  if (!(x > 0.0) || !(y > x)) throw DomainError("downcross_scaling_check: need y > x > 0");
  if (lambdas.size() < 2) throw InsufficientData("downcross_scaling_check needs at least two lambda values");
  DownScalingReport r;
  std::vector<double> lx, ly;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    const double lam = lambdas[l];
    PassageSampling ps;
    ps.dt = dt_factor / (lam * lam);
    ps.horizon = 1e4 / (lam * lam);
    ps.workers = workers;
    const auto s = sample_passages(fam.model_at(lam), y, x, n_paths,
                                   BrownianStream(stream.seed() + l, stream.path_id()), ps);
    if (s.durations.size() < 10) throw InsufficientData("downcross_scaling_check: fewer than 10 down-crossings");
    r.lambdas.push_back(lam);
    r.means.push_back(stats::mean(s.durations));
    r.standard_errors.push_back(stats::standard_error(s.durations));
    lx.push_back(std::log(lam));
    ly.push_back(std::log(r.means.back()));
  }
  const auto fit = stats::least_squares(lx, ly);
  r.slope = fit.slope;
  r.slope_se = fit.slope_se;
  return r;
}

} // namespace strongnoise
