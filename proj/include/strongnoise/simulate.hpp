#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <vector>

#include "strongnoise/errors.hpp"
#include "strongnoise/model_config.hpp"
#include "strongnoise/models.hpp"
#include "strongnoise/rng.hpp"

namespace strongnoise {

enum class Scheme { EulerMaruyama, Milstein, ExactLinear, LogEuler };

inline std::string_view scheme_name(Scheme s) {
  switch (s) {
  case Scheme::EulerMaruyama: return "euler_maruyama";
  case Scheme::Milstein: return "milstein";
  case Scheme::ExactLinear: return "exact_linear";
  case Scheme::LogEuler: return "log_euler";
  }
  return "unknown";
}

inline Scheme scheme_from_name(std::string_view s) {
  for (Scheme v : {Scheme::EulerMaruyama, Scheme::Milstein, Scheme::ExactLinear, Scheme::LogEuler})
    if (scheme_name(v) == s) return v;
  throw ValidationError("unknown scheme '" + std::string(s) + "'");
}

/// LogEuler for families on [0, inf), Milstein for the bounded qubit models,
/// Euler-Maruyama for the double well.
inline Scheme default_scheme(const SdeModel& m) {
  switch (m.family()) {
  case Family::DoubleWell: return Scheme::EulerMaruyama;
  case Family::ThermalQND:
  case Family::RabiQND: return Scheme::Milstein;
  default: return Scheme::LogEuler;
  }
}

/// Largest admissible step: 0.1 lambda^-2, or 0.1 / max|U''| at the wells for
/// the double well.
inline double max_time_step(const SdeModel& m) {
  if (m.family() == Family::DoubleWell) return 0.1 / (8.0 * m.params_as<DoubleWellParams>().depth);
  return 0.1 / (m.lambda() * m.lambda());
}

struct SimulationOptions {
  std::optional<Scheme> scheme;
  /// Drop the Brownian term and integrate the drift only.
  bool zero_noise = false;
  /// Keep every m-th grid point in stored paths (the last point is always kept).
  std::uint64_t keep_every = 1;
  std::uint32_t max_substeps = 64;
};

/// Uniform grid 0 = t_0 < ... < t_n = horizon with t_i = i dt except the last.
struct TimeGrid {
  double horizon = 0.0;
  double dt = 0.0;
  std::uint64_t steps = 0;

  TimeGrid(double horizon_, double dt_) : horizon(horizon_), dt(dt_) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ValidationError("horizon must be a positive number");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be a positive number");
    const double n = std::ceil(horizon / dt * (1.0 - 1e-12));
    if (n > 9.0e15) throw ValidationError("horizon / dt is too large");
    steps = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(n));
  }

  double time(std::uint64_t i) const { return i >= steps ? horizon : static_cast<double>(i) * dt; }
};

/// One grid step together with the law of the path between the endpoints.
/// The in-step extrema are Brownian-bridge extrema, sampled from dedicated
/// random lanes so that querying them never changes the path.
class StepView {
public:
  std::uint64_t index = 0;
  double t0 = 0.0, t1 = 0.0, x0 = 0.0, x1 = 0.0;

  /// Level above which the in-step maximum lies with probability < e^-18.
  double max_envelope() const {
    if (!bridged()) return std::max(x0, x1);
    if (log_coords_) return std::max(x0, x1) * spread();
    return std::max(x0, x1) + spread();
  }

  double min_envelope() const {
    if (!bridged()) return std::min(x0, x1);
    if (log_coords_) return std::min(x0, x1) / spread();
    return std::max(floor_, std::min(x0, x1) - spread());
  }

  /// Sampled maximum of the bridge between x0 and x1.
  double max() const {
    if (!bridged()) return std::max(x0, x1);
    const double u = stream_->uniform(index, Lane::BridgeMax);
    if (log_coords_) {
      const double y0 = std::log(x0), y1 = std::log(x1);
      return std::exp(0.5 * (y0 + y1 + std::sqrt((y1 - y0) * (y1 - y0) - 2.0 * var_ * std::log(u))));
    }
    return 0.5 * (x0 + x1 + std::sqrt((x1 - x0) * (x1 - x0) - 2.0 * var_ * std::log(u)));
  }

  /// Sampled minimum of the bridge between x0 and x1.
  double min() const {
    if (!bridged()) return std::min(x0, x1);
    const double u = stream_->uniform(index, Lane::BridgeMin);
    if (log_coords_) {
      const double y0 = std::log(x0), y1 = std::log(x1);
      return std::exp(0.5 * (y0 + y1 - std::sqrt((y1 - y0) * (y1 - y0) - 2.0 * var_ * std::log(u))));
    }
    return std::max(floor_, 0.5 * (x0 + x1 - std::sqrt((x1 - x0) * (x1 - x0) - 2.0 * var_ * std::log(u))));
  }

  double bridge_variance() const noexcept { return var_; }
  bool log_coordinates() const noexcept { return log_coords_; }

private:
  template <class>
  friend class Stepper;

  /// 6 bridge standard deviations (a factor in log coordinates), cached
  /// while the variance is unchanged.
  double spread() const {
    if (var_ != spread_var_) {
      spread_var_ = var_;
      spread_ = log_coords_ ? std::exp(6.0 * std::sqrt(var_)) : 6.0 * std::sqrt(var_);
    }
    return spread_;
  }

  bool bridged() const {
    if (!(var_ > 0.0)) return false;
    return !log_coords_ || (x0 > 1e-290 && x1 > 1e-290);
  }

  const BrownianStream* stream_ = nullptr;
  double var_ = 0.0;
  mutable double spread_var_ = -1.0;
  mutable double spread_ = 0.0;
  double floor_ = -std::numeric_limits<double>::infinity();
  bool log_coords_ = false;
};

struct StreamSummary {
  std::uint64_t steps = 0;
  double final_time = 0.0;
  double final_value = 0.0;
  std::uint64_t positivity_violations = 0;
  std::uint64_t substeps = 0;
  bool stopped_early = false;
};

namespace detail {

inline double state_upper_bound(const SdeModel& m) {
  switch (m.family()) {
  case Family::ThermalQND: return 1.0;
  case Family::RabiQND: return std::numbers::pi;
  default: return std::numeric_limits<double>::infinity();
  }
}

inline void check_scheme(const SdeModel& m, Scheme s) {
  if (s == Scheme::ExactLinear && m.family() != Family::Linear)
    throw UnsupportedFamily("exact_linear sampler needs the linear family, got '" +
                            std::string(family_name(m.family())) + "'");
  if (m.family() == Family::DoubleWell && s != Scheme::EulerMaruyama)
    throw ValidationError("the double-well model is simulated with euler_maruyama only");
}

inline void check_step(const SdeModel& m, double dt) {
  const double cap = max_time_step(m);
  if (dt > cap * (1.0 + 1e-9)) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds " << cap;
    if (m.family() == Family::DoubleWell)
      os << " = 0.1 / max|U''|; the relaxation time in the wells must be resolved";
    else
      os << " = 0.1 lambda^-2; the intrinsic time scale of the process is lambda^-2 and must be resolved";
    throw ValidationError(os.str());
  }
}

} // namespace detail

/// Advances one path over a TimeGrid. Substeps of LogEuler refine the
/// Brownian increment of the grid step by Brownian-bridge interpolation, so
/// every scheme sees the same Brownian path at grid resolution.
template <class Model = SdeModel>
class Stepper {
public:
  Stepper(const Model& m, double x0, TimeGrid grid, BrownianStream stream, const SimulationOptions& opt)
      : m_(m), grid_(grid), stream_(stream), opt_(opt), scheme_(opt.scheme.value_or(default_scheme(m))), x_(x0) {
    if (!std::isfinite(x0)) throw ValidationError("x0 must be finite");
    if (m.positive_state() && x0 < 0.0) throw ValidationError("x0 must be >= 0");
    if (x0 > detail::state_upper_bound(m)) throw ValidationError("x0 lies outside the state space");
    if (opt.max_substeps < 1) throw ValidationError("max_substeps must be >= 1");
    detail::check_scheme(m, scheme_);
    detail::check_step(m, grid.dt);
    l2_ = m.lambda() * m.lambda();
    upper_ = detail::state_upper_bound(m);
    view_.stream_ = &stream_;
    view_.log_coords_ = scheme_ == Scheme::LogEuler || scheme_ == Scheme::ExactLinear;
    view_.floor_ = m.positive_state() ? 0.0 : -std::numeric_limits<double>::infinity();
    if (m.family() == Family::Linear) lin_b_ = m.template params_as<LinearParams>().b;
  }

  bool done() const noexcept { return i_ >= grid_.steps; }
  double value() const noexcept { return x_; }
  double time() const { return grid_.time(i_); }
  std::uint64_t index() const noexcept { return i_; }
  Scheme scheme() const noexcept { return scheme_; }
  std::uint64_t positivity_violations() const noexcept { return violations_; }
  std::uint64_t substeps() const noexcept { return substeps_; }

  const StepView& advance() {
    const double t0 = grid_.time(i_), t1 = grid_.time(i_ + 1);
    const double h = t1 - t0;
    const double db = opt_.zero_noise ? 0.0 : std::sqrt(h) * normal(i_);
    view_.index = i_;
    view_.t0 = t0;
    view_.t1 = t1;
    view_.x0 = x_;
    view_.var_ = 0.0;
    switch (scheme_) {
    case Scheme::LogEuler: log_euler(h, db); break;
    case Scheme::ExactLinear: exact_linear(h, db); break;
    case Scheme::EulerMaruyama:
    case Scheme::Milstein: explicit_step(h, db); break;
    }
    if (!std::isfinite(x_)) {
      std::ostringstream os;
      os << "non-finite state at step " << i_ << " (t = " << t0 << ", previous value " << view_.x0 << ")";
      throw NumericError(os.str());
    }
    if (opt_.zero_noise) view_.var_ = 0.0;
    view_.x1 = x_;
    ++i_;
    return view_;
  }

private:
  double normal(std::uint64_t i) {
    if ((i & 1u) == 0 || cached_pair_ != (i >> 1)) {
      pair_ = stream_.normal_pair(i >> 1);
      cached_pair_ = i >> 1;
    }
    return pair_[i & 1u];
  }

  void bound(double& x) {
    if (x < 0.0 && m_.positive_state()) {
      ++violations_;
      x = 0.0;
    } else if (x > upper_) {
      ++violations_;
      x = upper_;
    }
  }

  /// Largest LogEuler substep at state x.
  double substep_cap(double x) const {
    double cap = std::numeric_limits<double>::infinity();
    const double g = m_.c_over_x(x);
    if (g != 0.0) cap = std::min(cap, 0.1 / (l2_ * g * g));
    const double bx = std::abs(m_.b_over_x(x));
    if (bx > 0.0) cap = std::min(cap, 0.1 / (l2_ * bx));
    const double ka = m_.epsilon() * m_.a(x);
    if (ka > 0.0 && x > 0.0) cap = std::min(cap, 0.4 * x / (l2_ * ka));
    return cap;
  }

  /// Strang splitting: half eps-kick, exact geometric flow with frozen
  /// coefficients b/x and c/x, half eps-kick.
  double log_euler_substep(double x, double h, double db, double& var) const {
    const double kappa = 0.5 * l2_ * m_.epsilon() * std::max(0.0, m_.a(x)) * h;
    if (x <= 0.0) return kappa;
    const double g = m_.c_over_x(x);
    const double ito = opt_.zero_noise ? 0.0 : 0.5 * l2_ * g * g;
    const double lg = (-0.5 * l2_ * m_.b_over_x(x) - ito) * h + m_.lambda() * g * db;
    var += l2_ * g * g * h;
    const double y = std::exp(lg) * (x + 0.5 * kappa) + 0.5 * kappa;
    return std::max(y, 1e-300);
  }

  void log_euler(double h, double db) {
    double rem_t = h, rem_b = db, var = 0.0;
    std::uint32_t j = 0;
    const double floor_h = h / opt_.max_substeps;
    while (rem_t > 0.0) {
      double hj = rem_t;
      if (j + 1 < opt_.max_substeps) {
        const double cap = std::max(substep_cap(x_), floor_h);
        if (cap < rem_t * (1.0 - 1e-12)) hj = cap;
      }
      double dbj = rem_b;
      if (hj < rem_t) {
        const double z = opt_.zero_noise ? 0.0 : stream_.normal(i_, Lane::Increment, j + 1);
        dbj = rem_b * (hj / rem_t) + std::sqrt(hj * (rem_t - hj) / rem_t) * z;
      } else {
        hj = rem_t;
      }
      x_ = log_euler_substep(x_, hj, dbj, var);
      bound(x_);
      rem_t -= hj;
      rem_b -= dbj;
      ++j;
    }
    substeps_ += j;
    view_.var_ = var;
  }

  /// Variation-of-constants recursion with the trapezoid rule for the
  /// eps-integral over each step.
  void exact_linear(double h, double db) {
    const double ito = opt_.zero_noise ? 0.0 : 1.0;
    const double g = std::exp(m_.lambda() * db - 0.5 * l2_ * (lin_b_ + ito) * h);
    const double kappa = 0.5 * l2_ * m_.epsilon() * h;
    view_.var_ = l2_ * h;
    if (x_ <= 0.0 && kappa == 0.0) return;
    x_ = std::max(g * (x_ + 0.5 * kappa) + 0.5 * kappa, 1e-300);
    substeps_ += 1;
  }

  void explicit_step(double h, double db) {
    const double x = x_;
    double mu, sigma, dsigma;
    if (m_.family() == Family::DoubleWell) {
      mu = -m_.potential_gradient(x);
      sigma = m_.lambda();
      dsigma = 0.0;
    } else {
      mu = 0.5 * l2_ * (m_.epsilon() * m_.a(x) - m_.b(x));
      sigma = m_.lambda() * m_.c(x);
      dsigma = m_.lambda() * m_.c_prime(x);
    }
    double y = x + mu * h + sigma * db;
    if (scheme_ == Scheme::Milstein) y += 0.5 * sigma * dsigma * (db * db - h);
    view_.var_ = sigma * sigma * h;
    x_ = y;
    bound(x_);
    substeps_ += 1;
  }

  const Model& m_;
  TimeGrid grid_;
  BrownianStream stream_;
  SimulationOptions opt_;
  Scheme scheme_;
  double x_;
  double l2_ = 0.0;
  double upper_ = 0.0;
  double lin_b_ = 0.0;
  std::uint64_t i_ = 0;
  std::uint64_t violations_ = 0;
  std::uint64_t substeps_ = 0;
  std::uint64_t cached_pair_ = std::numeric_limits<std::uint64_t>::max();
  std::array<double, 2> pair_{};
  StepView view_;
};

/// Runs a path without storing it, calling visit(const StepView&) after each
/// grid step. A visitor returning bool stops the path when it returns false.
template <class Visitor>
StreamSummary simulate_stream(const SdeModel& m, double x0, double horizon, double dt, const BrownianStream& stream,
                              const SimulationOptions& opt, Visitor&& visit) {
  Stepper<SdeModel> st(m, x0, TimeGrid(horizon, dt), stream, opt);
  StreamSummary out;
  while (!st.done()) {
    const StepView& v = st.advance();
    if constexpr (std::is_same_v<std::invoke_result_t<Visitor&, const StepView&>, bool>) {
      if (!visit(v)) {
        out.stopped_early = true;
        break;
      }
    } else {
      visit(v);
    }
  }
  out.steps = st.index();
  out.final_time = st.time();
  out.final_value = st.value();
  out.positivity_violations = st.positivity_violations();
  out.substeps = st.substeps();
  return out;
}

struct Path {
  std::vector<double> times;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::uint32_t path_id = 0;
  Scheme scheme = Scheme::LogEuler;
  double dt = 0.0;
  std::uint64_t keep_every = 1;
  std::uint64_t positivity_violations = 0;
  std::optional<SdeModel> model;
  Json model_snapshot;
};

inline Path simulate_path(const SdeModel& m, double x0, double horizon, double dt, const BrownianStream& stream,
                          const SimulationOptions& opt = {}) {
  if (opt.keep_every < 1) throw ValidationError("keep_every must be >= 1");
  const TimeGrid grid(horizon, dt);
  Path p;
  p.seed = stream.seed();
  p.path_id = stream.path_id();
  p.scheme = opt.scheme.value_or(default_scheme(m));
  p.dt = dt;
  p.keep_every = opt.keep_every;
  p.model = m;
  p.model_snapshot = model_to_json(m);
  const std::uint64_t kept = grid.steps / opt.keep_every + 2;
  p.times.reserve(kept);
  p.values.reserve(kept);
  p.times.push_back(0.0);
  p.values.push_back(x0);
  const auto s = simulate_stream(m, x0, horizon, dt, stream, opt, [&](const StepView& v) {
    if ((v.index + 1) % opt.keep_every == 0 || v.index + 1 == grid.steps) {
      p.times.push_back(v.t1);
      p.values.push_back(v.x1);
    }
  });
  p.positivity_violations = s.positivity_violations;
  return p;
}

inline Path exact_linear_path(const SdeModel& m, double x0, double horizon, double dt, const BrownianStream& stream) {
  if (m.family() != Family::Linear)
    throw UnsupportedFamily("exact_linear_path needs the linear family, got '" +
                            std::string(family_name(m.family())) + "'");
  SimulationOptions opt;
  opt.scheme = Scheme::ExactLinear;
  return simulate_path(m, x0, horizon, dt, stream, opt);
}

inline Path simulate_double_well(double nu, double x0, double horizon, double dt, const BrownianStream& stream,
                                 double depth = 0.25) {
  SimulationOptions opt;
  opt.scheme = Scheme::EulerMaruyama;
  return simulate_path(SdeModel::double_well(nu, depth), x0, horizon, dt, stream, opt);
}

/// Calls fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any call is rethrown after all threads finish.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        {
          std::lock_guard<std::mutex> lock(mu);
          if (error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct EnsembleOptions {
  /// Start value; NaN means eps.
  double x0 = std::numeric_limits<double>::quiet_NaN();
  /// dt = dt_factor lambda^-2.
  double dt_factor = 0.1;
  std::optional<Scheme> scheme;
  std::uint64_t keep_every = 1;
  unsigned workers = 1;
};

struct EnsembleLevel {
  double lambda = 0.0;
  double epsilon = 0.0;
  double j = std::numeric_limits<double>::quiet_NaN();
  double j_hat = 0.0;
  double dt = 0.0;
  std::vector<Path> paths;
};

/// Paths along a scaling family; path ids are level * n_paths + index.
inline std::vector<EnsembleLevel> simulate_scaled_ensemble(const ScalingFamily& fam, const std::vector<double>& lambdas,
                                                           std::size_t n_paths, double horizon,
                                                           const BrownianStream& stream,
                                                           const EnsembleOptions& opt = {}) {
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] > lambdas[i - 1])) throw ValidationError("lambda values must be strictly increasing");
  if (!(opt.dt_factor > 0.0) || opt.dt_factor > 0.1) throw ValidationError("dt_factor must lie in (0, 0.1]");
  std::vector<EnsembleLevel> out;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    EnsembleLevel lev;
    lev.lambda = lambdas[l];
    const SdeModel m = fam.model_at(lev.lambda);
    lev.epsilon = m.epsilon();
    lev.j_hat = fam.j_hat();
    if (fam.base().family() == Family::Linear || fam.base().family() == Family::PowerLaw) lev.j = fam.j();
    lev.dt = opt.dt_factor / (lev.lambda * lev.lambda);
    lev.paths.resize(n_paths);
    const double x0 = std::isnan(opt.x0) ? lev.epsilon : opt.x0;
    SimulationOptions so;
    so.scheme = opt.scheme;
    so.keep_every = opt.keep_every;
    parallel_for(n_paths, opt.workers, [&](std::size_t p) {
      const auto id = static_cast<std::uint32_t>(l * n_paths + p);
      lev.paths[p] = simulate_path(m, x0, horizon, lev.dt, stream.with_path(id), so);
    });
    out.push_back(std::move(lev));
  }
  return out;
}

} // namespace strongnoise
