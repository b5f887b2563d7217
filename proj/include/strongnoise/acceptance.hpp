#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "strongnoise/errors.hpp"
#include "strongnoise/models.hpp"
#include "strongnoise/passage.hpp"
#include "strongnoise/reconstruct.hpp"
#include "strongnoise/rng.hpp"
#include "strongnoise/simulate.hpp"
#include "strongnoise/skorokhod.hpp"
#include "strongnoise/spikes.hpp"
#include "strongnoise/stats.hpp"
#include "strongnoise/weaknoise.hpp"

namespace strongnoise::acceptance {

enum class Verdict { Pass, Fail, Inconclusive };

inline const char* verdict_name(Verdict v) {
  switch (v) {
  case Verdict::Pass: return "PASS";
  case Verdict::Fail: return "FAIL";
  default: return "INCONCLUSIVE";
  }
}

struct CriterionResult {
  int id = 0;
  std::string name;
  Verdict verdict = Verdict::Fail;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  std::uint64_t seed = 20240611;
  unsigned workers = 1;
};

/// One line per criterion: "[PASS] 3 exit-probability: ... (12.4 s)".
inline std::string format_line(const CriterionResult& r) {
  std::ostringstream os;
  os << '[' << verdict_name(r.verdict) << "] " << r.id << ' ' << r.name << ": " << r.detail << " ("
     << std::fixed << std::setprecision(1) << r.seconds << " s)";
  return os.str();
}

namespace detail {

struct Outcome {
  bool passed = true;
  std::ostringstream detail;

  void require(bool ok) { passed = passed && ok; }
};

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

inline CriterionResult run(int id, const char* name, const std::function<void(Outcome&)>& body) {
  CriterionResult r;
  r.id = id;
  r.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Outcome o;
    body(o);
    r.verdict = o.passed ? Verdict::Pass : Verdict::Fail;
    r.detail = o.detail.str();
  } catch (const InsufficientData& e) {
    r.verdict = Verdict::Inconclusive;
    r.detail = e.what();
  } catch (const std::exception& e) {
    r.verdict = Verdict::Fail;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline BrownianStream stream_for(const Options& opt, int id, std::uint64_t k = 0) {
  return BrownianStream(opt.seed + 1000003ULL * static_cast<std::uint64_t>(id) + k, 0);
}

} // namespace detail

/// 0 <= b^eps_t - a_t <= (1 + 1/alpha)(alpha eps t)^{1/(1+alpha)} at every
/// grid point, for 50 Brownian drivers on [0, 1] with 10^4 steps.
inline CriterionResult skorokhod_bound(const Options& opt) {
  return detail::run(1, "skorokhod-bound", [&](detail::Outcome& o) {
    std::size_t violations = 0, checks = 0;
    double worst = 0.0;
    for (std::uint32_t path = 0; path < 50; ++path) {
      const auto f = sample_brownian(1.0, 1e-4, 0.0, detail::stream_for(opt, 1).with_path(path));
      const auto exact = skorokhod_decompose(f);
      for (double alpha : {1.5, 2.0, 3.0})
        for (double eps : {1e-2, 1e-3, 1e-4}) {
          const auto p = solve_eps_equation(f, eps, alpha);
          for (std::size_t i = 0; i < f.values.size(); ++i) {
            const double gap = p.b_part[i] - exact.b_part[i];
            const double bound = eps_equation_bound(eps, alpha, f.times[i]);
            ++checks;
            if (gap < 0.0 || gap > bound) ++violations;
            if (bound > 0.0) worst = std::max(worst, gap / bound);
          }
        }
    }
    o.require(violations == 0);
    o.detail << violations << " violations in " << checks << " grid checks, max gap/bound " << detail::fmt(worst);
  });
}

/// Limit-law identities over 20 random draws, the averaging identity and
/// the power-law normalizer at (q, n, k) = (0, 1, 1).
inline CriterionResult analytic_identities(const Options& opt) {
  return detail::run(2, "analytic-identities", [&](detail::Outcome& o) {
    std::mt19937_64 gen(opt.seed);
    std::uniform_real_distribution<double> ub(-0.5, 3.0), ul(0.05, 3.0), us(0.0, 5.0), uj(0.2, 4.0);
    double law_err = 0.0;
    for (int k = 0; k < 20; ++k) {
      const auto fam = ScalingFamily::linear_j(ub(gen), uj(gen));
      double y = ul(gen), z = ul(gen);
      if (y > z) std::swap(y, z);
      const double sigma = us(gen);
      const auto mix = limit_mixture(fam, y, z);
      const auto poi = poisson_passage_law(fam, y, z);
      const double target = limit_laplace_T(fam, y, z, sigma);
      law_err = std::max({law_err, std::abs(mix.atom_weight - poi.atom_weight), std::abs(mix.exp_rate - poi.exp_rate),
                          std::abs(poi.laplace(sigma) - target), std::abs(laplace_by_quadrature(mix, sigma) - target),
                          std::abs(limit_laplace_T(fam, y, z, 1e13) - mix.atom_weight)});
    }
    o.require(law_err < 1e-10);
    double avg_err = 0.0;
    for (const auto& [m, eps] : {std::pair{SdeModel::linear(0.0, 1.0, 0.5), 0.5}, std::pair{SdeModel::linear(1.0, 1.0, 0.1), 0.1},
                                 std::pair{SdeModel::homodyne(1.0, 1.0, 0.2), 0.2},
                                 std::pair{SdeModel::homodyne(1.0, 1.0, 0.05), 0.05}})
      avg_err = std::max(avg_err, std::abs(averaging_identity_check(m, eps) - 1.0));
    o.require(avg_err < 1e-4);
    double z_err = 0.0;
    for (double b : {-0.5, 0.0, 1.0, 2.5, 3.0})
      z_err = std::max(z_err, std::abs(power_law_normalizer({b, 0.0, 1.0, 1.0}) / std::tgamma(b + 1.0) - 1.0));
    o.require(z_err < 1e-12);
    o.detail << "law max error " << detail::fmt(law_err, 3) << ", averaging max |r-1| " << detail::fmt(avg_err, 3)
             << ", normalizer max rel error " << detail::fmt(z_err, 3);
  });
}

/// Monte Carlo exit-at-z frequency against the quadrature formula,
/// Linear(b in {0, 1}), eps = 1e-3, lambda = 30, (x, y, z) = (0.2, 0.5, 1).
inline CriterionResult exit_probabilities(const Options& opt) {
  return detail::run(3, "exit-probability", [&](detail::Outcome& o) {
    for (double b : {0.0, 1.0}) {
      const auto m = SdeModel::linear(b, 30.0, 1e-3);
      PassageSampling ps;
      ps.dt = max_time_step(m);
      ps.workers = opt.workers;
      const auto e = estimate_exit_probability(m, 0.2, 0.5, 1.0, 10000, detail::stream_for(opt, 3, static_cast<std::uint64_t>(b)), ps);
      const double exact = exit_probability(m, 0.2, 0.5, 1.0);
      const double z = (e.probability - exact) / e.standard_error;
      o.require(std::abs(z) <= 3.0 && e.censored == 0);
      o.detail << "b=" << b << ": " << detail::fmt(e.probability) << " vs " << detail::fmt(exact) << " (" << detail::fmt(z, 2)
               << " se)" << (b == 0.0 ? "; " : "");
    }
  });
}

/// Up-crossings 0.5 -> 1 of Linear(b = 0), J = 1, lambda = 30: atom
/// fraction 0.5 +- 0.05, tail rate 0.5 within 10%, KS of the tail.
inline CriterionResult upcrossing_mixture(const Options& opt) {
  return detail::run(4, "upcrossing-mixture", [&](detail::Outcome& o) {
    const auto fam = ScalingFamily::linear_j(0.0, 1.0);
    const double lambda = 30.0;
    const auto m = fam.model_at(lambda);
    PassageSampling ps;
    ps.dt = max_time_step(m);
    ps.workers = opt.workers;
    const auto s = sample_passages(m, 0.5, 1.0, 2000, detail::stream_for(opt, 4), ps);
    const auto law = limit_mixture(fam, 0.5, 1.0);
    const auto f = fit_passage_mixture(s.durations, lambda, law.exp_rate);
    o.require(std::abs(f.atom_fraction - law.atom_weight) <= 0.05);
    o.require(std::abs(f.tail_rate / law.exp_rate - 1.0) <= 0.1);
    o.require(f.tail_ks.p_value > 0.01);
    o.detail << s.durations.size() << " crossings: atom " << detail::fmt(f.atom_fraction) << " (limit "
             << law.atom_weight << "), tail rate " << detail::fmt(f.tail_rate) << " (limit " << law.exp_rate
             << "), tail KS p " << detail::fmt(f.tail_ks.p_value, 3);
  });
}

/// Slope of log E[T_{1 -> 0.5}] against log lambda, lambda in {10, 20, 40}.
inline CriterionResult downcrossing_scaling(const Options& opt) {
  return detail::run(5, "downcrossing-scaling", [&](detail::Outcome& o) {
    const auto fam = ScalingFamily::linear_j(0.0, 1.0);
    const auto r = downcross_scaling_check(fam, 1.0, 0.5, {10.0, 20.0, 40.0}, 2000, detail::stream_for(opt, 5), 0.1,
                                           opt.workers);
    o.require(std::abs(r.slope + 2.0) <= 0.2);
    o.detail << "slope " << detail::fmt(r.slope) << " +- " << detail::fmt(r.slope_se, 2) << ", means";
    for (double v : r.means) o.detail << ' ' << detail::fmt(v, 3);
  });
}

/// Setting for one value of b in the spike-process check.
struct SpikeSweepPoint {
  double b = 0.0;
  double lambda = 30.0;
};

/// Spikes of Linear(b), J = 1, with about 10^3 pooled events of height
/// >= 0.5: inter-arrival KS at rate Jhat/q(z) for z in {0.5, 1, 2} and the
/// tip exponent b+1 from rank regression within 10%.
inline CriterionResult poisson_spikes(const Options& opt,
                                      std::vector<SpikeSweepPoint> sweep = {{-0.5, 30.0}, {0.0, 30.0}, {1.0, 100.0},
                                                                            {3.0, 1000.0}}) {
  return detail::run(6, "poisson-spikes", [&](detail::Outcome& o) {
    const std::vector<double> levels{0.5, 1.0, 2.0};
    bool first = true;
    for (const auto& pt : sweep) {
      const auto fam = ScalingFamily::linear_j(pt.b, 1.0);
      const auto m = fam.model_at(pt.lambda);
      const auto [dm, dp] = default_thresholds(m.epsilon(), levels.front());
      const IntensityMeasure nu{fam};
      const std::size_t paths = 8;
      const double horizon = 1.1 * 1000.0 / nu.tail(levels.front()) / static_cast<double>(paths);
      const auto pps = simulate_spike_processes(m, 0.5 * dm, paths, horizon, max_time_step(m), dm, dp,
                                                detail::stream_for(opt, 6, static_cast<std::uint64_t>(pt.b * 10 + 100)),
                                                opt.workers);
      const auto rep = test_poisson(pps, fam, levels, 0.01, 1000, 2);
      std::vector<double> maxima;
      for (const auto& pp : pps)
        for (const auto& e : pp.events)
          if (e.max >= levels.front()) maxima.push_back(e.max);
      const auto fit = tail_rank_regression(maxima, levels.front());
      const bool tail_ok = std::abs(fit.slope / (pt.b + 1.0) - 1.0) <= 0.1;
      o.require(tail_ok);
      o.detail << (first ? "" : "; ") << "b=" << pt.b << " lambda=" << pt.lambda << ":";
      first = false;
      for (const auto& l : rep.levels) {
        o.require(l.interarrival.p_value > 0.01);
        o.detail << " z=" << l.level << " n=" << l.interarrival.n << " p=" << detail::fmt(l.interarrival.p_value, 2)
                 << " rate " << detail::fmt(l.estimated_rate / l.predicted_rate, 3) << "x (finite-lambda "
                 << detail::fmt(finite_spike_rate(m, dm, l.level) / l.predicted_rate, 3) << "x)";
      }
      o.detail << " exponent " << detail::fmt(fit.slope, 3);
    }
  });
}

/// Two-sample KS between direct and reconstructed passage times 0.5 -> 1,
/// Linear(b in {0, 1}), J = 1, lambda = 30, 2000 samples each. Both samples
/// are floored to a common resolution of 0.02: the direct sampler smears the
/// limit atom at T = 0 over times of order lambda^-2.
inline CriterionResult reconstruction_equivalence(const Options& opt) {
  return detail::run(7, "reconstruction-equivalence", [&](detail::Outcome& o) {
    const double lambda = 30.0, resolution = 0.02;
    auto floor_to = [&](std::vector<double> v) {
      for (double& x : v) x = std::floor(x / resolution) * resolution;
      return v;
    };
    for (double b : {0.0, 1.0}) {
      const auto fam = ScalingFamily::linear_j(b, 1.0);
      const auto m = fam.model_at(lambda);
      PassageSampling ps;
      ps.dt = max_time_step(m);
      ps.workers = opt.workers;
      const auto direct = sample_passages(m, 0.5, 1.0, 2000, detail::stream_for(opt, 7, static_cast<std::uint64_t>(2 * b)), ps);
      const auto rebuilt =
          reconstructed_passage_times(fam, 0.5, 1.0, 2000, 1e-4, 1e-3, detail::stream_for(opt, 7, static_cast<std::uint64_t>(2 * b + 1)), opt.workers);
      const auto ks = stats::ks_two_sample(floor_to(direct.durations), floor_to(rebuilt));
      o.require(ks.p_value > 0.01 && direct.censored == 0);
      o.detail << (b == 0.0 ? "" : "; ") << "b=" << b << ": D=" << detail::fmt(ks.statistic, 3)
               << " p=" << detail::fmt(ks.p_value, 3) << " (means " << detail::fmt(stats::mean(direct.durations), 3)
               << ", " << detail::fmt(stats::mean(rebuilt), 3) << ")";
    }
  });
}

/// Fitted slope of L^(eps) against t: Jhat within 10% for Linear(b in
/// {0, 1}) and within 15% for Homodyne(b = 1) under the Jhat rule.
inline CriterionResult local_time_rate_check(const Options& opt) {
  return detail::run(8, "local-time-rate", [&](detail::Outcome& o) {
    const double lambda = 30.0, horizon = 200.0;
    struct Case {
      const char* label;
      ScalingFamily fam;
      double tol;
      LocalTimeRateOptions lt;
    };
    LocalTimeRateOptions homodyne_levels;
    homodyne_levels.spike_level = 2.0;
    homodyne_levels.spike_low = 0.5;
    const std::vector<Case> cases{
        {"linear b=0", ScalingFamily::linear_j(0.0, 1.0), 0.1, {}},
        {"linear b=1", ScalingFamily::linear_j(1.0, 1.0), 0.1, {}},
        {"homodyne b=1", ScalingFamily(SdeModel::homodyne(1.0, 1.0, 0.0), ScalingRule::PartitionJhat, 1.0), 0.15,
         homodyne_levels}};
    std::uint64_t k = 0;
    for (const auto& c : cases) {
      const auto m = c.fam.model_at(lambda);
      const auto tc = time_change(simulate_path(m, m.epsilon(), horizon, max_time_step(m), detail::stream_for(opt, 8, k++)), m);
      const auto r = local_time_rate(tc, c.fam, c.lt);
      o.require(std::abs(r.fit.slope / r.predicted - 1.0) <= c.tol);
      o.detail << (k == 1 ? "" : "; ") << c.label << ": " << detail::fmt(r.fit.slope) << " vs " << detail::fmt(r.predicted);
    }
  });
}

/// Homodyne Z_eps by quadrature against its saddle asymptotic, b = 1:
/// within 20% at eps = 0.1 and 5% at eps = 0.05.
inline CriterionResult homodyne_partition(const Options&) {
  return detail::run(9, "homodyne-partition", [&](detail::Outcome& o) {
    bool first = true;
    for (const auto& [eps, tol] : {std::pair{0.1, 0.2}, std::pair{0.05, 0.05}}) {
      const auto m = SdeModel::homodyne(1.0, 1.0, eps);
      const double ratio = std::exp(log_partition_function_quadrature(m, eps) - homodyne_log_partition_saddle(1.0, eps));
      o.require(std::abs(ratio - 1.0) <= tol);
      o.detail << (first ? "" : "; ") << "eps=" << eps << ": Z/saddle = " << detail::fmt(ratio, 5);
      first = false;
    }
  });
}

/// Double well U = (x^2 - 1)^2 / 4 at nu = 0.35: mean inter-jump time within
/// a factor 3 of e^{2 Delta U / nu^2}, and within-well occupation against
/// the Gibbs density (KS p > 0.01 in each well).
inline CriterionResult weak_noise(const Options& opt) {
  return detail::run(10, "weak-noise", [&](detail::Outcome& o) {
    const auto m = SdeModel::double_well(0.35);
    const auto run = run_weak_noise(m, 2.0e5, 0.005, 5.0, detail::stream_for(opt, 10));
    const auto s = summarize_weak_noise(m, run);
    const double ratio = s.mean_inter_jump / s.kramers;
    o.require(ratio >= 1.0 / 3.0 && ratio <= 3.0);
    o.require(s.left_gibbs.p_value > 0.01 && s.right_gibbs.p_value > 0.01);
    o.detail << s.jumps << " jumps, mean inter-jump " << detail::fmt(s.mean_inter_jump) << " = " << detail::fmt(ratio, 3)
             << " x Kramers " << detail::fmt(s.kramers) << " (exact mean " << detail::fmt(s.exact_inter_jump)
             << "), Gibbs KS p " << detail::fmt(s.left_gibbs.p_value, 3) << " / " << detail::fmt(s.right_gibbs.p_value, 3);
  });
}

/// Runs the selected criteria (all when `only` is empty) in order and
/// reports each result through `sink` as soon as it is known.
inline std::vector<CriterionResult> run_all(const Options& opt, const std::vector<int>& only = {},
                                            const std::function<void(const CriterionResult&)>& sink = {}) {
  const std::vector<std::function<CriterionResult(const Options&)>> all{
      skorokhod_bound,         analytic_identities, exit_probabilities,
      upcrossing_mixture,      downcrossing_scaling, [](const Options& o) { return poisson_spikes(o); },
      reconstruction_equivalence, local_time_rate_check, homodyne_partition,
      weak_noise};
  std::vector<CriterionResult> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    out.push_back(all[i](opt));
    if (sink) sink(out.back());
  }
  return out;
}

} // namespace strongnoise::acceptance
