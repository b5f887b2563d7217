#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "strongnoise/errors.hpp"
#include "strongnoise/models.hpp"
#include "strongnoise/passage.hpp"
#include "strongnoise/rng.hpp"
#include "strongnoise/simulate.hpp"
#include "strongnoise/stats.hpp"

namespace strongnoise {

/// One spike: the down-crossing time U_{2k} of delta_minus that ends it, its
/// maximum M_k, and the preceding up-crossing time U_{2k-1} of delta_plus.
struct SpikeEvent {
  double time = 0.0;
  double max = 0.0;
  double up_time = 0.0;
};

struct SpikePointProcess {
  std::vector<SpikeEvent> events;
  double delta_minus = 0.0;
  double delta_plus = 0.0;
  double horizon = 0.0;
};

namespace detail {

inline void check_thresholds(double dm, double dp) {
  if (!(dm > 0.0) || !(dp > dm)) throw DomainError("spike thresholds: need 0 < delta_minus < delta_plus");
}

} // namespace detail

/// delta_minus = min(5 eps, z_min / 5), delta_plus = min(max(5 delta_minus,
/// 0.02 z_min), z_min): above the eps-kick scale and below every level of
/// interest.
inline std::pair<double, double> default_thresholds(double eps, double z_min) {
  if (!(eps > 0.0) || !(z_min > 0.0)) throw DomainError("default_thresholds: need eps > 0 and z_min > 0");
  const double dm = std::min(5.0 * eps, z_min / 5.0);
  const double dp = std::min(std::max(5.0 * dm, 0.02 * z_min), z_min);
  return {dm, dp};
}

/// Incremental extraction of the alternating crossings
/// ... <= delta_minus -> >= delta_plus -> <= delta_minus ...
/// from a stream of steps. The process is trimmed to its first visit below
/// delta_minus. In-step crossings and maxima use the step's bridge extrema
/// (endpoint values for plain steps); crossing times are chord
/// interpolations, or the step midpoint when only the bridge crosses.
class SpikeTracker {
public:
  SpikeTracker(double delta_minus, double delta_plus, double x0) : dm_(delta_minus), dp_(delta_plus) {
    detail::check_thresholds(dm_, dp_);
    armed_ = x0 <= dm_;
  }

  void observe(const StepView& v) {
    if (!armed_) {
      if (below(v)) armed_ = true;
      return;
    }
    bool rose_here = false;
    if (!up_) {
      const double hi = v.max_envelope() >= dp_ ? v.max() : std::max(v.x0, v.x1);
      if (hi < dp_) return;
      up_ = true;
      rose_here = true;
      up_time_ = v.x1 >= dp_ ? detail::chord_time(v.t0, v.x0, v.t1, v.x1, dp_) : 0.5 * (v.t0 + v.t1);
      max_ = hi;
    } else if (v.max_envelope() > max_) {
      max_ = std::max(max_, v.max());
    }
    // In the step that rose above delta_plus only the endpoint can come
    // back down: the step minimum may precede the rise.
    if (rose_here ? v.x1 <= dm_ : below(v)) {
      const double t = v.x1 <= dm_ && v.x0 > dm_ ? detail::chord_time(v.t0, v.x0, v.t1, v.x1, dm_)
                                                 : 0.5 * (v.t0 + v.t1);
      events_.push_back({t, max_, up_time_});
      up_ = false;
    }
  }

  /// True while an excursion above delta_plus has not come back down.
  bool in_excursion() const noexcept { return up_; }
  double pending_max() const noexcept { return max_; }
  double pending_up_time() const noexcept { return up_time_; }
  std::vector<SpikeEvent>& events() noexcept { return events_; }

private:
  bool below(const StepView& v) const {
    return v.x1 <= dm_ || (v.min_envelope() <= dm_ && v.min() <= dm_);
  }

  double dm_, dp_;
  bool armed_ = false;
  bool up_ = false;
  double up_time_ = 0.0;
  double max_ = 0.0;
  std::vector<SpikeEvent> events_;
};

/// Point process of maxima of a sampled path. An excursion still above
/// delta_minus at the end of the path is not an event.
inline SpikePointProcess extract_point_process(const std::vector<double>& times, const std::vector<double>& values,
                                               double delta_minus, double delta_plus) {
  if (times.size() != values.size()) throw ValidationError("extract_point_process: times and values differ in length");
  SpikePointProcess pp;
  pp.delta_minus = delta_minus;
  pp.delta_plus = delta_plus;
  pp.horizon = times.empty() ? 0.0 : times.back() - times.front();
  if (values.empty()) {
    detail::check_thresholds(delta_minus, delta_plus);
    return pp;
  }
  SpikeTracker tr(delta_minus, delta_plus, values.front());
  StepView v;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    v.index = i;
    v.t0 = times[i];
    v.t1 = times[i + 1];
    v.x0 = values[i];
    v.x1 = values[i + 1];
    tr.observe(v);
  }
  pp.events = std::move(tr.events());
  return pp;
}

inline SpikePointProcess extract_point_process(const Path& p, double delta_minus, double delta_plus) {
  return extract_point_process(p.times, p.values, delta_minus, delta_plus);
}

/// Spike processes of n_paths independent paths of `m` started at x0,
/// extracted while streaming (no path is stored). Path ids 0..n_paths-1.
inline std::vector<SpikePointProcess> simulate_spike_processes(const SdeModel& m, double x0, std::size_t n_paths,
                                                               double horizon, double dt, double delta_minus,
                                                               double delta_plus, const BrownianStream& stream,
                                                               unsigned workers = 1,
                                                               const SimulationOptions& opt = {}) {
  std::vector<SpikePointProcess> out(n_paths);
  parallel_for(n_paths, workers, [&](std::size_t i) {
    SpikeTracker tr(delta_minus, delta_plus, x0);
    simulate_stream(m, x0, horizon, dt, stream.with_path(static_cast<std::uint32_t>(i)), opt,
                    [&](const StepView& v) { tr.observe(v); });
    out[i] = {std::move(tr.events()), delta_minus, delta_plus, horizon};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Sets of maxima, intensity measure and counting processes

/// Finite union of intervals [lo, hi) with 0 < lo < hi <= inf, kept sorted
/// and merged.
class IntervalSet {
public:
  IntervalSet() = default;
  IntervalSet(std::initializer_list<std::pair<double, double>> pieces) {
    for (auto [lo, hi] : pieces) add(lo, hi);
  }

  static IntervalSet at_least(double x) { return IntervalSet{{x, numeric::kInf}}; }

  IntervalSet& add(double lo, double hi) {
    if (!(lo < hi)) throw DomainError("IntervalSet: need lo < hi");
    if (!(lo > 0.0)) throw DomainError("IntervalSet: the set touches 0, so mu(B) is infinite");
    pieces_.push_back({lo, hi});
    std::sort(pieces_.begin(), pieces_.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& p : pieces_) {
      if (!merged.empty() && p.first <= merged.back().second)
        merged.back().second = std::max(merged.back().second, p.second);
      else
        merged.push_back(p);
    }
    pieces_ = std::move(merged);
    return *this;
  }

  bool contains(double m) const {
    for (const auto& [lo, hi] : pieces_)
      if (m >= lo && m < hi) return true;
    return false;
  }

  bool empty() const noexcept { return pieces_.empty(); }
  double infimum() const { return pieces_.empty() ? numeric::kInf : pieces_.front().first; }
  const std::vector<std::pair<double, double>>& pieces() const noexcept { return pieces_; }

private:
  std::vector<std::pair<double, double>> pieces_;
};

/// Intensity of the limiting point process, Jhat dt dq(x)/q(x)^2:
/// tail(x) = Jhat / q(x) is the rate of spikes with maximum >= x.
struct IntensityMeasure {
  ScalingFamily family;

  double tail(double x) const {
    if (!(x > 0.0)) throw DomainError("IntensityMeasure::tail: x must be > 0");
    if (std::isinf(x)) return 0.0;
    return family.j_hat() / family.scale_q(x);
  }
};

/// Stationary rate, at the model's own lambda and eps, of cycles that climb
/// from delta_minus to z and come back: lambda^2 / (2 Z_eps) divided by the
/// eps-scale length int_{delta_minus}^z e^{2 h0 + 2 eps h1}. It tends to
/// Jhat/q(z) in the scaling limit and measures the finite-lambda bias of
/// spike counts.
inline double finite_spike_rate(const SdeModel& m, double delta_minus, double z) {
  detail::require_scale_family(m, "finite_spike_rate");
  const double eps = m.epsilon();
  if (!(eps > 0.0)) throw DomainError("finite_spike_rate: epsilon must be > 0");
  if (!(delta_minus > 0.0) || !(z > delta_minus)) throw DomainError("finite_spike_rate: need 0 < delta_minus < z");
  auto g = [&](double u) { return 2.0 * scale_h0(m, u) + 2.0 * eps * scale_h1(m, u); };
  const double ls = numeric::log_integrate(g, delta_minus, z, detail::model_quadrature(m));
  const double lz = log_partition_function(m, eps);
  return std::exp(2.0 * std::log(m.lambda()) - std::log(2.0) - lz - ls);
}

/// mu(B) = sum over the pieces [u, v) of 1/q(u) - 1/q(v).
inline double mu_measure(const ScalingFamily& fam, const IntervalSet& b) {
  double total = 0.0;
  for (const auto& [lo, hi] : b.pieces()) total += 1.0 / fam.scale_q(lo) - (std::isinf(hi) ? 0.0 : 1.0 / fam.scale_q(hi));
  return total;
}

/// Right-continuous step function N_t(B).
struct CountingProcess {
  std::vector<double> jump_times;

  std::size_t at(double t) const {
    return static_cast<std::size_t>(std::upper_bound(jump_times.begin(), jump_times.end(), t) - jump_times.begin());
  }
  std::size_t total() const noexcept { return jump_times.size(); }
};

inline CountingProcess counting_process(const SpikePointProcess& pp, const IntervalSet& b) {
  if (b.empty()) return {};
  if (!(b.infimum() > 0.0)) throw DomainError("counting_process: mu(B) is infinite for sets touching 0");
  CountingProcess n;
  for (const auto& e : pp.events)
    if (b.contains(e.max)) n.jump_times.push_back(e.time);
  return n;
}

/// Events with maximum >= x, i.e. the process for thresholds
/// (delta_minus, x) when x >= delta_plus.
inline SpikePointProcess restrict_process(const SpikePointProcess& pp, double x) {
  if (x < pp.delta_plus) throw DomainError("restrict_process: level below delta_plus");
  SpikePointProcess out{{}, pp.delta_minus, x, pp.horizon};
  for (const auto& e : pp.events)
    if (e.max >= x) out.events.push_back(e);
  return out;
}

// ---------------------------------------------------------------------------
// Statistical tests

struct PoissonLevelReport {
  double level = 0.0;
  double predicted_rate = 0.0;
  double estimated_rate = 0.0;
  std::size_t events = 0;
  stats::KsResult interarrival;
  stats::KsResult tip_tail;
  double lag1 = 0.0;
  double lag1_bound = 0.0;
  bool passed = false;
};

struct PoissonReport {
  std::vector<PoissonLevelReport> levels;
  double alpha = 0.01;
  bool passed = false;
};

/// Tests, per level z, that spikes with maximum >= z arrive as a Poisson
/// process of rate Jhat/q(z) with tips distributed as
/// P(M >= m | M >= z) = q(z)/q(m): (a) KS of the inter-arrival times against
/// the exponential law, (b) KS of q(z)/q(M) against Uniform(0, 1), (c) lag-1
/// autocorrelation of the inter-arrivals within 3/sqrt(n) of 0. Paths are
/// pooled by placing their windows end to end, which for independent Poisson
/// windows is again a Poisson process; only gaps completed inside a single
/// short window would be biased short. At most max_events inter-arrivals
/// enter the tests; fewer than min_top_events above the largest level is
/// InsufficientData.
inline PoissonReport test_poisson(std::span<const SpikePointProcess> processes, const ScalingFamily& fam,
                                  std::span<const double> z_levels, double alpha = 0.01,
                                  std::size_t max_events = std::numeric_limits<std::size_t>::max(),
                                  std::size_t min_top_events = 50) {
  if (z_levels.empty()) throw DomainError("test_poisson: no levels");
  const IntensityMeasure nu{fam};
  const double z_top = *std::max_element(z_levels.begin(), z_levels.end());
  std::size_t top_count = 0;
  double horizon = 0.0;
  for (const auto& pp : processes) {
    horizon += pp.horizon;
    for (const auto& e : pp.events) top_count += e.max >= z_top;
  }
  if (top_count < min_top_events)
    throw InsufficientData("test_poisson: too few events above the largest level (" + std::to_string(top_count) + ")");
  PoissonReport rep;
  rep.alpha = alpha;
  rep.passed = true;
  for (double z : z_levels) {
    if (!processes.empty() && z < processes.front().delta_plus)
      throw DomainError("test_poisson: level below delta_plus");
    PoissonLevelReport lr;
    lr.level = z;
    lr.predicted_rate = nu.tail(z);
    std::vector<double> pooled, tips;
    double offset = 0.0, last = 0.0;
    for (const auto& pp : processes) {
      for (const auto& e : pp.events) {
        if (e.max < z) continue;
        ++lr.events;
        if (pooled.size() < max_events) {
          pooled.push_back(offset + e.time - last);
          tips.push_back(fam.scale_q(z) / fam.scale_q(e.max));
        }
        last = offset + e.time;
      }
      offset += pp.horizon;
    }
    lr.estimated_rate = static_cast<double>(lr.events) / horizon;
    if (pooled.size() < 3) throw InsufficientData("test_poisson: fewer than 3 events at a level");
    const double rate = lr.predicted_rate;
    lr.interarrival = stats::ks_one_sample(pooled, [rate](double t) { return 1.0 - std::exp(-rate * t); });
    lr.tip_tail = stats::ks_one_sample(tips, [](double u) { return std::clamp(u, 0.0, 1.0); });
    lr.lag1 = stats::lag1_autocorrelation(pooled);
    lr.lag1_bound = 3.0 / std::sqrt(static_cast<double>(pooled.size()));
    lr.passed = lr.interarrival.p_value > alpha && lr.tip_tail.p_value > alpha && std::abs(lr.lag1) <= lr.lag1_bound;
    rep.passed = rep.passed && lr.passed;
    rep.levels.push_back(lr);
  }
  return rep;
}

/// Exponent kappa of a tail P(M >= m) ~ m^-kappa from the maxima >= level,
/// by least squares of log(rank / n) against log m.
inline stats::LinearFit tail_rank_regression(std::span<const double> maxima, double level) {
  std::vector<double> m;
  for (double x : maxima)
    if (x >= level) m.push_back(x);
  if (m.size() < 10) throw InsufficientData("tail_rank_regression needs at least 10 maxima above the level");
  std::sort(m.begin(), m.end(), std::greater<>());
  const double n = static_cast<double>(m.size());
  std::vector<double> lx(m.size()), ly(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    lx[i] = std::log(m[i]);
    ly[i] = std::log((static_cast<double>(i) + 0.5) / n);
  }
  auto fit = stats::least_squares(lx, ly);
  fit.slope = -fit.slope;
  return fit;
}

/// Permutation test of independence between the gaps U_{2k} - U_{2k-2} and
/// the maxima M_k (absolute Pearson correlation). Returns the p-value.
inline double renewal_permutation_test(const SpikePointProcess& pp, std::size_t permutations,
                                       const BrownianStream& stream) {
  if (pp.events.size() < 10) throw InsufficientData("renewal_permutation_test needs at least 10 events");
  std::vector<double> gap, mx;
  double last = 0.0;
  for (const auto& e : pp.events) {
    gap.push_back(e.time - last);
    mx.push_back(std::log(e.max));
    last = e.time;
  }
  auto corr = [&](const std::vector<double>& y) {
    const double ma = stats::mean(gap), mb = stats::mean(y);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      sab += (gap[i] - ma) * (y[i] - mb);
      saa += (gap[i] - ma) * (gap[i] - ma);
      sbb += (y[i] - mb) * (y[i] - mb);
    }
    return saa > 0.0 && sbb > 0.0 ? std::abs(sab) / std::sqrt(saa * sbb) : 0.0;
  };
  const double observed = corr(mx);
  std::size_t exceed = 0;
  auto perm = mx;
  for (std::size_t r = 0; r < permutations; ++r) {
    for (std::size_t i = perm.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(stream.uniform(r * perm.size() + i, Lane::Auxiliary) * (i + 1));
      std::swap(perm[i], perm[std::min(j, i)]);
    }
    exceed += corr(perm) >= observed;
  }
  return (static_cast<double>(exceed) + 1.0) / (static_cast<double>(permutations) + 1.0);
}

/// Variance-to-mean test of the per-path counts of spikes with maximum in B.
inline stats::DispersionResult count_dispersion(std::span<const SpikePointProcess> processes, const IntervalSet& b) {
  std::vector<double> counts;
  for (const auto& pp : processes) counts.push_back(static_cast<double>(counting_process(pp, b).total()));
  return stats::dispersion_test(counts);
}

// ---------------------------------------------------------------------------
// Poisson reconstruction

/// Uniform random bits from the Auxiliary lane, as a standard generator.
class StreamEngine {
public:
  using result_type = std::uint32_t;

  explicit StreamEngine(const BrownianStream& s) : stream_(s) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xFFFFFFFFu; }
  result_type operator()() {
    if (slot_ == 4) {
      block_ = stream_.block(counter_++, Lane::Auxiliary);
      slot_ = 0;
    }
    return block_[slot_++];
  }

private:
  BrownianStream stream_;
  std::uint64_t counter_ = 0;
  Philox4x32::Counter block_{};
  int slot_ = 4;
};

/// Points of the limiting process above eta on [0, horizon]: a
/// Poisson(horizon Jhat / q(eta)) number of spikes at uniform times with
/// heights q^-1(q(eta)/U), U uniform.
inline SpikePointProcess sample_poisson_spikes(const ScalingFamily& fam, double horizon, double eta,
                                               const BrownianStream& stream) {
  if (!(eta > 0.0)) throw DomainError("sample_poisson_spikes: eta must be > 0");
  if (!(horizon >= 0.0)) throw DomainError("sample_poisson_spikes: horizon must be >= 0");
  SpikePointProcess pp{{}, eta, eta, horizon};
  if (horizon == 0.0) return pp;
  const double q_eta = fam.scale_q(eta);
  StreamEngine gen(stream);
  std::poisson_distribution<long long> count(horizon * fam.j_hat() / q_eta);
  const long long k = count(gen);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  pp.events.reserve(static_cast<std::size_t>(k));
  for (long long i = 0; i < k; ++i) {
    const double t = horizon * unit(gen);
    double u;
    do u = unit(gen);
    while (u == 0.0);
    const double m = fam.scale_q_inverse(q_eta / u);
    pp.events.push_back({t, m, t});
  }
  std::sort(pp.events.begin(), pp.events.end(), [](const SpikeEvent& a, const SpikeEvent& b) { return a.time < b.time; });
  return pp;
}

/// Law of T_{y->z} in the Poisson picture: the spike running through y
/// also reaches z with probability nu([z,inf))/nu([y,inf)); otherwise the
/// wait is for the first spike reaching z, at rate nu([z,inf)).
inline PassageLaw poisson_passage_law(const ScalingFamily& fam, double y, double z) {
  if (!(y > 0.0) || !(z > y)) throw DomainError("poisson_passage_law: need 0 < y < z");
  const IntensityMeasure nu{fam};
  return {nu.tail(z) / nu.tail(y), nu.tail(z)};
}

// ---------------------------------------------------------------------------
// Covering check

struct CoverReport {
  bool covered = true;
  std::size_t violations = 0;
  std::size_t samples = 0;
  double fraction = 0.0;
};

/// Checks that every sample (t_i, x_i) lies in
/// K = (R+ x [0, delta_plus]) u U_k [U_{2k} - Delta, U_{2k}] x [0, M_k].
/// Samples of an excursion unfinished at the end of the path are outside K.
inline CoverReport k_delta_cover_check(const std::vector<double>& times, const std::vector<double>& values,
                                       const SpikePointProcess& pp, double delta) {
  if (!(delta >= 0.0)) throw DomainError("k_delta_cover_check: Delta must be >= 0");
  CoverReport r;
  r.samples = values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = times[i], x = values[i];
    if (x <= pp.delta_plus) continue;
    auto it = std::lower_bound(pp.events.begin(), pp.events.end(), t,
                               [](const SpikeEvent& e, double v) { return e.time < v; });
    bool inside = false;
    for (; it != pp.events.end() && it->time <= t + delta; ++it)
      if (x <= it->max) {
        inside = true;
        break;
      }
    if (!inside) ++r.violations;
  }
  r.covered = r.violations == 0;
  r.fraction = r.samples ? static_cast<double>(r.violations) / static_cast<double>(r.samples) : 0.0;
  return r;
}

inline CoverReport k_delta_cover_check(const Path& p, const SpikePointProcess& pp, double delta) {
  return k_delta_cover_check(p.times, p.values, pp, delta);
}

} // namespace strongnoise
