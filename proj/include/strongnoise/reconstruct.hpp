#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "strongnoise/errors.hpp"
#include "strongnoise/models.hpp"
#include "strongnoise/rng.hpp"
#include "strongnoise/simulate.hpp"
#include "strongnoise/skorokhod.hpp"
#include "strongnoise/stats.hpp"

namespace strongnoise {

/// A path seen in the effective time tau = <Q>, Q = q(X), together with the
/// approximate local time L^(eps) accumulated by the eps-kick.
struct TimeChangedPath {
  std::vector<double> tau_grid;
  std::vector<double> q_values;
  std::vector<double> l_eps;
  std::vector<double> t_grid;
};

/// Reflected Brownian motion |W~| on a tau grid with its local time at 0.
struct ReflectedBM {
  std::vector<double> tau_grid;
  std::vector<double> w_values;
  std::vector<double> local_time;
};

/// dtau = lambda^2 e^{4 h0(X)} c^2(X) dt and dL = (lambda^2 eps / 2)
/// e^{2 h0(X)} a(X) dt, both by the trapezoidal rule; Q = q(X). Samples at
/// X = 0 contribute nothing.
inline TimeChangedPath time_change(const Path& path, const SdeModel& m) {
  if (path.times.size() != path.values.size()) throw ValidationError("time_change: times and values differ in length");
  const double l2 = m.lambda() * m.lambda();
  auto dtau = [&](double x) { return x > 0.0 ? l2 * std::exp(4.0 * scale_h0(m, x)) * m.c(x) * m.c(x) : 0.0; };
  auto dl = [&](double x) {
    return x > 0.0 && m.epsilon() > 0.0 ? 0.5 * l2 * m.epsilon() * std::exp(2.0 * scale_h0(m, x)) * m.a(x) : 0.0;
  };
  TimeChangedPath tc;
  const std::size_t n = path.values.size();
  tc.tau_grid.resize(n);
  tc.q_values.resize(n);
  tc.l_eps.resize(n);
  tc.t_grid = path.times;
  double g_prev = 0.0, l_prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = path.values[i];
    tc.q_values[i] = x > 0.0 ? scale_q(m, x) : 0.0;
    const double g = dtau(x), l = dl(x);
    if (i == 0) {
      tc.tau_grid[0] = 0.0;
      tc.l_eps[0] = 0.0;
    } else {
      const double h = path.times[i] - path.times[i - 1];
      tc.tau_grid[i] = tc.tau_grid[i - 1] + 0.5 * h * (g + g_prev);
      tc.l_eps[i] = tc.l_eps[i - 1] + 0.5 * h * (l + l_prev);
    }
    g_prev = g;
    l_prev = l;
  }
  return tc;
}

struct ReflectionOptions {
  /// Level of Q above which the growth rate of L^(eps) is measured.
  double upsilon = 0.1;
  /// Steps per quadratic-variation window.
  std::size_t window = 1000;
};

struct ReflectionReport {
  CheckReport admissible;
  /// Sum of (dW)^2 over the tau-length of the path.
  double qv_slope = 0.0;
  std::size_t windows = 0;
  double window_median = 0.0;
  /// Fraction of windows whose quadratic variation per tau is within 10% of 1.
  double window_fraction_within = 0.0;
  /// Largest dL/dtau over steps touching {Q >= upsilon}.
  double beta = 0.0;
  double upsilon = 0.0;
  BoundReport bound;
};

/// Reads (L^(eps), Q) as an approximate Skorokhod pair of the driver
/// W = Q - L^(eps) in the time tau: admissibility, the quadratic variation
/// of W per unit tau, and the bound 0 <= L^(eps) - a <= upsilon + beta tau
/// against the Skorokhod term a of W with beta measured on the path. Steps
/// with dtau = 0 are dropped.
inline ReflectionReport check_reflection(const TimeChangedPath& tc, const ReflectionOptions& opt = {}) {
  if (tc.tau_grid.size() < 2) throw InsufficientData("check_reflection needs at least two samples");
  if (!(opt.upsilon > 0.0) || opt.window < 2) throw DomainError("check_reflection: need upsilon > 0 and window >= 2");
  DiscretePath f;
  DecompositionPair pair;
  for (std::size_t i = 0; i < tc.tau_grid.size(); ++i) {
    if (i > 0 && !(tc.tau_grid[i] > f.times.back())) continue;
    f.times.push_back(tc.tau_grid[i]);
    f.values.push_back(tc.q_values[i] - tc.l_eps[i]);
    pair.b_part.push_back(tc.l_eps[i]);
    pair.y_part.push_back(tc.q_values[i]);
  }
  ReflectionReport r;
  r.upsilon = opt.upsilon;
  r.admissible = verify_admissible(f, pair);
  const std::size_t n = f.values.size();
  if (n < 2) throw InsufficientData("check_reflection: the path never leaves 0");
  double qv = 0.0;
  std::vector<double> ratios;
  double wqv = 0.0, wtau = 0.0;
  std::size_t in_window = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dw = f.values[i + 1] - f.values[i];
    const double dtau = f.times[i + 1] - f.times[i];
    qv += dw * dw;
    wqv += dw * dw;
    wtau += dtau;
    if (++in_window == opt.window) {
      ratios.push_back(wqv / wtau);
      wqv = wtau = 0.0;
      in_window = 0;
    }
    if (std::max(pair.y_part[i], pair.y_part[i + 1]) >= opt.upsilon)
      r.beta = std::max(r.beta, (pair.b_part[i + 1] - pair.b_part[i]) / dtau);
  }
  r.qv_slope = qv / (f.times.back() - f.times.front());
  r.windows = ratios.size();
  if (!ratios.empty()) {
    r.window_median = stats::quantile(ratios, 0.5);
    std::size_t within = 0;
    for (double x : ratios) within += std::abs(x - 1.0) <= 0.1;
    r.window_fraction_within = static_cast<double>(within) / static_cast<double>(ratios.size());
  }
  r.bound = bound_check(f, pair, r.beta * (1.0 + 1e-9), opt.upsilon);
  return r;
}

struct LocalTimeRateOptions {
  /// Leading fraction of the horizon left out of the fit.
  double burn_in = 0.1;
  /// A spike is an excursion of X from below spike_low (spike_level / 10
  /// when 0) to above spike_level.
  double spike_level = 0.5;
  double spike_low = 0.0;
  std::size_t min_spikes = 10;
};

struct LocalTimeRate {
  stats::LinearFit fit;
  double predicted = 0.0;
  std::size_t spikes = 0;
};

/// Least-squares slope of L^(eps) against t after the burn-in, to be
/// compared with Jhat (J / (2 Gamma(b+1)) for Linear, J / (2 Z) for
/// PowerLaw).
inline LocalTimeRate local_time_rate(const TimeChangedPath& tc, const ScalingFamily& fam,
                                     const LocalTimeRateOptions& opt = {}) {
  if (!(opt.burn_in >= 0.0 && opt.burn_in < 1.0)) throw DomainError("local_time_rate: burn_in must lie in [0, 1)");
  if (tc.t_grid.size() < 3) throw InsufficientData("local_time_rate: path too short");
  LocalTimeRate out;
  out.predicted = fam.j_hat();
  const double q_hi = fam.scale_q(opt.spike_level), q_lo = fam.scale_q(opt.spike_low > 0.0 ? opt.spike_low : 0.1 * opt.spike_level);
  bool low = false;
  for (double q : tc.q_values) {
    if (q <= q_lo) low = true;
    else if (low && q >= q_hi) {
      ++out.spikes;
      low = false;
    }
  }
  if (out.spikes < opt.min_spikes) throw InsufficientData("local_time_rate: fewer spikes than required");
  const double t0 = tc.t_grid.front() + opt.burn_in * (tc.t_grid.back() - tc.t_grid.front());
  const auto first = static_cast<std::size_t>(std::lower_bound(tc.t_grid.begin(), tc.t_grid.end(), t0) - tc.t_grid.begin());
  out.fit = stats::least_squares(std::span(tc.t_grid).subspan(first), std::span(tc.l_eps).subspan(first));
  return out;
}

/// Brownian motion from `start` on a uniform grid of step dtau.
inline DiscretePath sample_brownian(double tau_horizon, double dtau, double start, const BrownianStream& stream) {
  if (!(dtau > 0.0) || !(tau_horizon >= 0.0)) throw DomainError("sample_brownian: need dtau > 0 and horizon >= 0");
  const auto n = static_cast<std::size_t>(std::ceil(tau_horizon / dtau - 1e-9));
  DiscretePath w;
  w.times.resize(n + 1);
  w.values.resize(n + 1);
  w.times[0] = 0.0;
  w.values[0] = start;
  const double s = std::sqrt(dtau);
  for (std::size_t i = 0; i < n; ++i) {
    w.times[i + 1] = dtau * static_cast<double>(i + 1);
    w.values[i + 1] = w.values[i] + s * stream.normal(i);
  }
  return w;
}

/// Brownian motion from `start >= 0` run until its Skorokhod local time
/// max(0, -min W) reaches `local_time`. Stopping at a local-time level keeps
/// the excursions before it a Poisson sample; stopping at a fixed tau would
/// bias against the long, high ones, whose durations are heavy tailed. The
/// step is max(dtau_min, (relative_step * y)^2) with y the reflected value,
/// so an excursion of height m costs about relative_step^-2 steps whatever m.
inline DiscretePath sample_brownian_to_local_time(double local_time, double dtau_min, double start,
                                                  const BrownianStream& stream, double relative_step = 0.01) {
  if (!(dtau_min > 0.0) || !(local_time >= 0.0) || !(start >= 0.0) || !(relative_step >= 0.0))
    throw DomainError("sample_brownian_to_local_time: need dtau_min > 0, local_time >= 0 and start >= 0");
  DiscretePath w{{0.0}, {start}};
  double running_min = 0.0;
  for (std::uint64_t i = 0; -running_min < local_time; ++i) {
    const double y = w.values.back() - running_min;
    const double h = std::max(dtau_min, relative_step * relative_step * y * y);
    const double next = w.values.back() + std::sqrt(h) * stream.normal(i);
    w.times.push_back(w.times.back() + h);
    w.values.push_back(next);
    running_min = std::min(running_min, next);
  }
  return w;
}

/// Reflection of a Brownian driver by the discrete Skorokhod map: the
/// reflected path W + a with local time a = max(0, max -W). By Levy's
/// identity it has the law of (|W~|, L).
inline ReflectedBM reflect_brownian(const DiscretePath& w) {
  const auto p = skorokhod_decompose(w);
  return {w.times, p.y_part, p.b_part};
}

struct ReconstructedPath {
  /// X on the uniform t-grid; the value at t_k is q^-1 of the largest |W~|
  /// over the tau-stretch with L in (rate t_{k-1}, rate t_k] (L = 0 for
  /// k = 0).
  Path path;
  ReflectedBM rbm;
  double rate = 0.0;
};

/// Spiky trajectory X_t = q^-1(|W~_tau(t)|), tau(t) = inf{tau : L_tau >
/// rate t}, rate = Jhat. An excursion of |W~| lives at a single t, so each
/// t-cell records the highest point it contains.
inline ReconstructedPath build_from_reflected_bm(const DiscretePath& wtilde, const ScalingFamily& fam,
                                                 double horizon_t, double dt_t) {
  if (!(dt_t > 0.0) || !(horizon_t >= 0.0)) throw DomainError("build_from_reflected_bm: need dt > 0 and horizon >= 0");
  ReconstructedPath out;
  out.rbm = reflect_brownian(wtilde);
  out.rate = fam.j_hat();
  const double l_end = out.rbm.local_time.back();
  const double l_needed = out.rate * horizon_t;
  if (std::all_of(out.rbm.w_values.begin(), out.rbm.w_values.end(), [](double w) { return w == 0.0; }))
    throw DomainError("build_from_reflected_bm: the reflected driver vanishes identically, tau(t) is undefined");
  if (l_end < l_needed)
    throw InsufficientData("build_from_reflected_bm: the local time of the Brownian sample does not reach rate * horizon");
  const auto cells = static_cast<std::size_t>(std::ceil(horizon_t / dt_t - 1e-9));
  std::vector<double> cell_max(cells + 1, 0.0);
  const double cell_l = out.rate * dt_t;
  for (std::size_t i = 0; i < out.rbm.w_values.size(); ++i) {
    const double l = out.rbm.local_time[i];
    if (l > l_needed) break;
    const auto k = std::min(cells, static_cast<std::size_t>(std::ceil(l / cell_l)));
    cell_max[k] = std::max(cell_max[k], out.rbm.w_values[i]);
  }
  out.path.dt = dt_t;
  out.path.times.resize(cells + 1);
  out.path.values.resize(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k) {
    out.path.times[k] = dt_t * static_cast<double>(k);
    out.path.values[k] = cell_max[k] > 0.0 ? fam.scale_q_inverse(cell_max[k]) : 0.0;
  }
  return out;
}

struct Excursion {
  double local_time = 0.0;
  double max = 0.0;
  double tau_start = 0.0;
  double tau_end = 0.0;
};

/// Completed excursions of the reflected path above `slack` (maximal runs
/// with w > slack) whose maximum reaches `threshold`. A run still open at the
/// end of the sample is not reported.
inline std::vector<Excursion> extract_excursions(const ReflectedBM& rbm, double threshold, double slack = 0.0) {
  std::vector<Excursion> out;
  bool open = false;
  Excursion cur;
  for (std::size_t i = 0; i < rbm.w_values.size(); ++i) {
    const double w = rbm.w_values[i];
    if (w > slack) {
      if (!open) {
        open = true;
        cur = {rbm.local_time[i], w, rbm.tau_grid[i > 0 ? i - 1 : 0], 0.0};
      }
      cur.max = std::max(cur.max, w);
    } else if (open) {
      open = false;
      cur.tau_end = rbm.tau_grid[i];
      if (cur.max >= threshold) out.push_back(cur);
    }
  }
  return out;
}

/// CSV rows "local_time,t,max" with t = local_time / rate.
inline std::string excursions_csv(const std::vector<Excursion>& ex, double rate) {
  std::ostringstream os;
  os.precision(17);
  os << "local_time,t,max\n";
  for (const auto& e : ex) os << e.local_time << ',' << e.local_time / rate << ',' << e.max << '\n';
  return os.str();
}

/// T_{y->z} read off reconstructed trajectories: a Brownian motion started
/// at q(y) is run in tau until its reflection reaches q(z), the trajectory
/// is rebuilt on a t-grid of step dt_t, and T is the first grid time with
/// X >= z. Sample i uses path id i.
inline std::vector<double> reconstructed_passage_times(const ScalingFamily& fam, double y, double z, std::size_t n,
                                                       double dtau, double dt_t, const BrownianStream& stream,
                                                       unsigned workers = 1) {
  if (!(y > 0.0) || !(z > y)) throw DomainError("reconstructed_passage_times: need 0 < y < z");
  const double qy = fam.scale_q(y), qz = fam.scale_q(z);
  std::vector<double> out(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto s = stream.with_path(static_cast<std::uint32_t>(i));
    DiscretePath w{{0.0}, {qy}};
    const double sd = std::sqrt(dtau);
    double running_min = std::min(0.0, qy);
    for (std::uint64_t k = 0;; ++k) {
      const double next = w.values.back() + sd * s.normal(k);
      w.times.push_back(dtau * static_cast<double>(k + 1));
      w.values.push_back(next);
      running_min = std::min(running_min, next);
      if (next - running_min >= qz) break;
    }
    const double l_end = -running_min;
    const auto rec = build_from_reflected_bm(w, fam, l_end / fam.j_hat(), dt_t);
    double t = rec.path.times.back();
    for (std::size_t k = 0; k < rec.path.values.size(); ++k)
      if (rec.path.values[k] >= z * (1.0 - 1e-9)) {
        t = rec.path.times[k];
        break;
      }
    out[i] = t;
  });
  return out;
}

/// Time average of X^power along a path of `m` started at x0, by the
/// trapezoidal rule. With the Linear model at lambda = eps = 1 this is the
/// ergodic average of Y^b.
inline double ergodic_average(const SdeModel& m, double power, double x0, double horizon, double dt,
                              const BrownianStream& stream) {
  double acc = 0.0;
  double prev = std::pow(x0, power);
  simulate_stream(m, x0, horizon, dt, stream, SimulationOptions{}, [&](const StepView& v) {
    const double cur = std::pow(v.x1, power);
    acc += 0.5 * (v.t1 - v.t0) * (prev + cur);
    prev = cur;
  });
  return acc / horizon;
}

} // namespace strongnoise
