#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <vector>

#include "strongnoise/passage.hpp"
#include "strongnoise/rng.hpp"
#include "strongnoise/simulate.hpp"
#include "strongnoise/spikes.hpp"

using namespace strongnoise;

namespace {

Path piecewise(const std::vector<std::pair<double, double>>& knots, double dt) {
  Path p;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const auto [ta, xa] = knots[k];
    const auto [tb, xb] = knots[k + 1];
    const auto n = static_cast<std::size_t>(std::llround((tb - ta) / dt));
    for (std::size_t i = 0; i < n; ++i) {
      const double s = static_cast<double>(i) / static_cast<double>(n);
      p.times.push_back(ta + s * (tb - ta));
      p.values.push_back(xa + s * (xb - xa));
    }
  }
  p.times.push_back(knots.back().first);
  p.values.push_back(knots.back().second);
  return p;
}

struct McSetup {
  ScalingFamily fam;
  double lambda;
  double eps;
  SdeModel model;
  double dm, dp;
};

McSetup linear_setup(double b, double lambda, double z_min) {
  auto fam = ScalingFamily::linear_j(b, 1.0);
  const double eps = fam.epsilon_for_lambda(lambda);
  const auto [dm, dp] = default_thresholds(eps, z_min);
  return {fam, lambda, eps, fam.model_at(lambda), dm, dp};
}

} // namespace

TEST(Extract, SyntheticSpikes) {
  const auto p = piecewise({{0, 0.0}, {1, 0.0}, {2, 1.0}, {3, 0.0}, {4, 0.0}, {4.5, 0.5}, {5, 0.0}, {6, 2.0}}, 1e-3);
  const auto pp = extract_point_process(p, 0.05, 0.2);
  ASSERT_EQ(pp.events.size(), 2u);
  EXPECT_NEAR(pp.events[0].time, 2.95, 1e-9);
  EXPECT_NEAR(pp.events[0].up_time, 1.2, 1e-9);
  EXPECT_NEAR(pp.events[0].max, 1.0, 1e-12);
  EXPECT_NEAR(pp.events[1].time, 4.95, 1e-9);
  EXPECT_NEAR(pp.events[1].max, 0.5, 1e-12);
  EXPECT_NEAR(pp.horizon, 6.0, 1e-12);
}

TEST(Extract, OneSampleSpikes) {
  Path p;
  for (int i = 0; i <= 10; ++i) {
    p.times.push_back(i);
    p.values.push_back(i == 3 || i == 7 ? 1.0 : 0.0);
  }
  const auto pp = extract_point_process(p, 0.05, 0.2);
  ASSERT_EQ(pp.events.size(), 2u);
  EXPECT_NEAR(pp.events[0].up_time, 2.2, 1e-12);
  EXPECT_NEAR(pp.events[0].time, 3.95, 1e-12);
  EXPECT_NEAR(pp.events[1].time, 7.95, 1e-12);
}

TEST(Extract, TrimmedToFirstVisitBelow) {
  const auto p = piecewise({{0, 1.0}, {1, 0.0}, {2, 0.8}, {3, 0.0}}, 1e-3);
  const auto pp = extract_point_process(p, 0.05, 0.2);
  ASSERT_EQ(pp.events.size(), 1u);
  EXPECT_NEAR(pp.events[0].max, 0.8, 1e-12);
}

TEST(Extract, SubThresholdWigglesIgnored) {
  const auto p = piecewise({{0, 0.0}, {1, 0.19}, {2, 0.06}, {3, 0.19}, {4, 0.0}}, 1e-3);
  EXPECT_TRUE(extract_point_process(p, 0.05, 0.2).events.empty());
  EXPECT_THROW(extract_point_process(p, 0.2, 0.2), DomainError);
  EXPECT_THROW(extract_point_process(p, 0.0, 0.2), DomainError);
}

TEST(Extract, RestrictionMatchesHigherThreshold) {
  const auto s = linear_setup(0.0, 30.0, 0.5);
  const auto path = simulate_path(s.model, s.eps, 40.0, 0.1 / (s.lambda * s.lambda), BrownianStream(11, 0));
  const auto pp = extract_point_process(path, s.dm, s.dp);
  ASSERT_GT(pp.events.size(), 20u);
  for (double x : {0.1, 0.5, 1.0}) {
    const auto a = restrict_process(pp, x);
    const auto b = extract_point_process(path, s.dm, x);
    ASSERT_EQ(a.events.size(), b.events.size()) << x;
    for (std::size_t k = 0; k < a.events.size(); ++k) {
      EXPECT_EQ(a.events[k].time, b.events[k].time);
      EXPECT_EQ(a.events[k].max, b.events[k].max);
    }
  }
}

TEST(Extract, StreamingMatchesStoredOnPlainSteps) {
  const auto s = linear_setup(1.0, 30.0, 0.5);
  const auto path = simulate_path(s.model, s.eps, 10.0, 0.1 / (s.lambda * s.lambda), BrownianStream(12, 3));
  const auto stored = extract_point_process(path, s.dm, s.dp);
  SpikeTracker tr(s.dm, s.dp, path.values.front());
  for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
    StepView v;
    v.index = i;
    v.t0 = path.times[i];
    v.t1 = path.times[i + 1];
    v.x0 = path.values[i];
    v.x1 = path.values[i + 1];
    tr.observe(v);
  }
  ASSERT_EQ(tr.events().size(), stored.events.size());
  for (std::size_t k = 0; k < stored.events.size(); ++k) EXPECT_EQ(tr.events()[k].max, stored.events[k].max);
}

TEST(Extract, BridgeMaximaDominateGridMaxima) {
  const auto s = linear_setup(0.0, 30.0, 0.5);
  const double dt = 0.1 / (s.lambda * s.lambda);
  const BrownianStream stream(13, 0);
  const auto stored = extract_point_process(simulate_path(s.model, s.eps, 20.0, dt, stream), s.dm, s.dp);
  const auto streamed = simulate_spike_processes(s.model, s.eps, 1, 20.0, dt, s.dm, s.dp, stream);
  ASSERT_EQ(streamed.size(), 1u);
  // Same path; the bridge can only add crossings and raise maxima, so every
  // grid spike is dominated by a streamed spike ending in its window.
  ASSERT_GE(streamed[0].events.size(), stored.events.size());
  double prev = -1.0;
  for (const auto& e : stored.events) {
    double best = 0.0;
    for (const auto& f : streamed[0].events)
      if (f.time > prev && f.time <= e.time + dt) best = std::max(best, f.max);
    EXPECT_GE(best, e.max) << "spike ending at " << e.time;
    prev = e.time;
  }
}

TEST(Thresholds, Defaults) {
  const auto [dm, dp] = default_thresholds(1e-3, 0.5);
  EXPECT_DOUBLE_EQ(dm, 5e-3);
  EXPECT_DOUBLE_EQ(dp, 0.025);
  const auto [dm2, dp2] = default_thresholds(0.1, 0.5);
  EXPECT_DOUBLE_EQ(dm2, 0.1);
  EXPECT_DOUBLE_EQ(dp2, 0.5);
  EXPECT_THROW(default_thresholds(0.0, 1.0), DomainError);
}

TEST(Measure, LinearClosedForm) {
  const auto fam = ScalingFamily::linear_j(0.0, 1.0);
  EXPECT_NEAR(mu_measure(fam, IntervalSet{{1.0, 2.0}}), 0.5, 1e-12);
  EXPECT_NEAR(mu_measure(fam, IntervalSet::at_least(4.0)), 0.25, 1e-12);
  EXPECT_NEAR(mu_measure(fam, IntervalSet{{1.0, 2.0}, {1.5, 4.0}}), 0.75, 1e-12);
  EXPECT_NEAR(mu_measure(fam, IntervalSet{{1.0, 2.0}, {3.0, 4.0}}), 0.5 + 1.0 / 12.0, 1e-12);
  EXPECT_THROW(IntervalSet({{0.0, 1.0}}), DomainError);
  EXPECT_THROW(IntervalSet({{1.0, 1.0}}), DomainError);
  const auto fam3 = ScalingFamily::linear_j(3.0, 1.0);
  // q(x) = x^4 / 4 for b = 3.
  EXPECT_NEAR(mu_measure(fam3, IntervalSet::at_least(2.0)), 4.0 / 16.0, 1e-10);
  const IntensityMeasure nu{fam3};
  EXPECT_NEAR(nu.tail(2.0), fam3.j_hat() * 4.0 / 16.0, 1e-12);
  EXPECT_EQ(nu.tail(numeric::kInf), 0.0);
}

TEST(Counting, StepFunction) {
  SpikePointProcess pp{{{1.0, 0.3, 0.9}, {2.0, 1.5, 1.9}, {3.0, 0.7, 2.9}, {4.0, 2.5, 3.9}}, 0.01, 0.1, 5.0};
  const auto n = counting_process(pp, IntervalSet{{0.5, 2.0}});
  EXPECT_EQ(n.total(), 2u);
  EXPECT_EQ(n.at(0.5), 0u);
  EXPECT_EQ(n.at(2.0), 1u);
  EXPECT_EQ(n.at(3.5), 2u);
  EXPECT_EQ(counting_process(pp, IntervalSet::at_least(2.0)).total(), 1u);
  EXPECT_EQ(counting_process(pp, IntervalSet{}).total(), 0u);
  const auto r = restrict_process(pp, 1.0);
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_THROW(restrict_process(pp, 0.05), DomainError);
}

TEST(PoissonSampler, PassesItsOwnTest) {
  const auto fam = ScalingFamily::linear_j(1.0, 1.0);
  std::vector<SpikePointProcess> pps;
  for (std::uint32_t i = 0; i < 40; ++i) pps.push_back(sample_poisson_spikes(fam, 100.0, 0.05, BrownianStream(21, i)));
  const std::vector<double> z{0.5, 1.0, 2.0};
  const auto rep = test_poisson(pps, fam, z);
  EXPECT_TRUE(rep.passed);
  for (const auto& lr : rep.levels) {
    EXPECT_NEAR(lr.estimated_rate / lr.predicted_rate, 1.0, 5.0 / std::sqrt(static_cast<double>(lr.events)));
  }
  std::vector<double> maxima;
  for (const auto& pp : pps)
    for (const auto& e : pp.events) maxima.push_back(e.max);
  const auto fit = tail_rank_regression(maxima, 0.5);
  EXPECT_NEAR(fit.slope, 2.0, 0.2);
  EXPECT_GT(count_dispersion(pps, IntervalSet::at_least(1.0)).p_value, 0.01);
  for (const auto& pp : pps) EXPECT_TRUE(std::is_sorted(pp.events.begin(), pp.events.end(),
                                                        [](const auto& a, const auto& b) { return a.time < b.time; }));
}

TEST(PoissonSampler, CountMatchesIntensity) {
  const auto fam = ScalingFamily::linear_j(0.0, 1.0);
  double total = 0.0;
  const int n = 400;
  for (int i = 0; i < n; ++i) total += sample_poisson_spikes(fam, 10.0, 0.5, BrownianStream(22, i)).events.size();
  // Jhat = 1/2, q(0.5) = 0.5: mean 10 per path.
  EXPECT_NEAR(total / n, 10.0, 4.0 * std::sqrt(10.0 / n));
  EXPECT_TRUE(sample_poisson_spikes(fam, 0.0, 0.5, BrownianStream(22, 0)).events.empty());
}

TEST(PoissonTest, RejectsRegularArrivals) {
  const auto fam = ScalingFamily::linear_j(0.0, 1.0);
  SpikePointProcess pp{{}, 0.01, 0.1, 0.0};
  // Spikes every 0.5 time units with exact Pareto tips: right tips, wrong
  // clock.
  for (int k = 1; k <= 400; ++k) {
    const double u = (k - 0.5) / 400.0;
    pp.events.push_back({0.5 * k, 0.5 / u, 0.5 * k});
  }
  pp.horizon = 200.5;
  const std::vector<SpikePointProcess> pps{pp};
  const std::vector<double> z{0.5};
  const auto rep = test_poisson(pps, fam, z);
  EXPECT_FALSE(rep.passed);
  EXPECT_LT(rep.levels[0].interarrival.p_value, 0.01);
  EXPECT_GT(rep.levels[0].tip_tail.p_value, 0.5);
}

TEST(PoissonTest, RejectsDurationThinnedProcess) {
  // Keeping only spikes that follow a long quiet spell makes the
  // inter-arrivals of the thinned process non-exponential.
  const auto fam = ScalingFamily::linear_j(0.0, 1.0);
  std::vector<SpikePointProcess> pps;
  for (std::uint32_t i = 0; i < 20; ++i) {
    auto pp = sample_poisson_spikes(fam, 200.0, 0.5, BrownianStream(23, i));
    SpikePointProcess thin{{}, pp.delta_minus, pp.delta_plus, pp.horizon};
    double last = 0.0;
    for (const auto& e : pp.events) {
      if (e.time - last > 0.5) thin.events.push_back(e);
      last = e.time;
    }
    pps.push_back(thin);
  }
  const std::vector<double> z{0.5};
  EXPECT_FALSE(test_poisson(pps, fam, z).passed);
}

TEST(PoissonTest, NeedsEnoughEvents) {
  const auto fam = ScalingFamily::linear_j(0.0, 1.0);
  const std::vector<SpikePointProcess> pps{sample_poisson_spikes(fam, 10.0, 0.5, BrownianStream(24, 0))};
  const std::vector<double> z{0.5, 50.0};
  EXPECT_THROW(test_poisson(pps, fam, z), InsufficientData);
}

TEST(PassageLaw, AgreesWithMixtureLaw) {
  const BrownianStream s(25, 0);
  const std::vector<ScalingFamily> fams{ScalingFamily::linear_j(-0.5, 1.0), ScalingFamily::linear_j(0.0, 2.0),
                                        ScalingFamily::linear_j(3.0, 1.0)};
  std::uint64_t k = 0;
  for (const auto& fam : fams)
    for (int i = 0; i < 20; ++i) {
      const double y = 0.05 + 2.0 * s.uniform(k++, Lane::Auxiliary);
      const double z = y * (1.0 + 5.0 * s.uniform(k++, Lane::Auxiliary));
      const auto a = poisson_passage_law(fam, y, z);
      const auto b = limit_mixture(fam, y, z);
      EXPECT_NEAR(a.atom_weight, b.atom_weight, 1e-12);
      EXPECT_NEAR(a.exp_rate / b.exp_rate, 1.0, 1e-12);
      for (double sigma : {0.1, 1.0, 7.0})
        EXPECT_NEAR(laplace_by_quadrature(a, sigma), limit_laplace_T(fam, y, z, sigma), 1e-9);
    }
  EXPECT_THROW(poisson_passage_law(fams[0], 1.0, 0.5), DomainError);
}

TEST(PassageLaw, SampledPoissonPassageTimes) {
  // Passage times read off the exact point process: from the last spike
  // reaching y, wait for the first spike reaching z (the same spike when it
  // does).
  const auto fam = ScalingFamily::linear_j(0.0, 1.0);
  const double y = 0.5, z = 1.5;
  std::vector<double> waits;
  for (std::uint32_t i = 0; waits.size() < 4000; ++i) {
    const auto pp = sample_poisson_spikes(fam, 100.0, y, BrownianStream(26, i));
    for (std::size_t k = 0; k < pp.events.size(); ++k) {
      for (std::size_t j = k; j < pp.events.size(); ++j)
        if (pp.events[j].max >= z) {
          waits.push_back(pp.events[j].time - pp.events[k].time);
          break;
        }
    }
  }
  const auto law = poisson_passage_law(fam, y, z);
  std::size_t zeros = 0;
  for (double w : waits) zeros += w == 0.0;
  const double n = static_cast<double>(waits.size());
  const double p = law.atom_weight;
  EXPECT_NEAR(zeros / n, p, 4.0 * std::sqrt(p * (1 - p) / n));
  EXPECT_NEAR(stats::mean(waits) / law.mean(), 1.0, 0.08);
}

TEST(Cover, SyntheticSpikes) {
  const auto p = piecewise({{0, 0.0}, {1, 0.0}, {1.1, 1.0}, {1.2, 0.0}, {3, 0.0}}, 1e-3);
  const auto pp = extract_point_process(p, 0.05, 0.2);
  ASSERT_EQ(pp.events.size(), 1u);
  EXPECT_TRUE(k_delta_cover_check(p, pp, 0.2).covered);
  EXPECT_FALSE(k_delta_cover_check(p, pp, 0.0).covered);
  const auto q = piecewise({{0, 0.0}, {1, 0.0}, {1.1, 1.0}, {1.2, 0.0}, {2, 0.0}, {2.1, 0.5}}, 1e-3);
  const auto trailing = k_delta_cover_check(q, extract_point_process(q, 0.05, 0.2), 0.2);
  EXPECT_FALSE(trailing.covered);
  EXPECT_GT(trailing.violations, 0u);
}

TEST(Cover, SimulatedPathsConcentrateOnSpikes) {
  const auto s = linear_setup(0.0, 30.0, 0.5);
  const double dt = 0.1 / (s.lambda * s.lambda);
  std::size_t violations = 0, samples = 0;
  std::size_t zero_delta_failures = 0;
  for (std::uint32_t i = 0; i < 20; ++i) {
    const auto path = simulate_path(s.model, s.eps, 10.0, dt, BrownianStream(27, i));
    const auto pp = extract_point_process(path, s.dm, s.dp);
    const auto r = k_delta_cover_check(path, pp, 0.1);
    violations += r.violations;
    samples += r.samples;
    zero_delta_failures += !k_delta_cover_check(path, pp, 0.0).covered;
  }
  EXPECT_LT(static_cast<double>(violations) / static_cast<double>(samples), 1e-3);
  EXPECT_EQ(zero_delta_failures, 20u);
}

TEST(MonteCarlo, SpikesArePoissonAtModerateLambda) {
  const auto s = linear_setup(0.0, 30.0, 0.5);
  const double dt = 0.1 / (s.lambda * s.lambda);
  const auto pps = simulate_spike_processes(s.model, s.eps, 16, 40.0, dt, s.dm, s.dp, BrownianStream(28, 0));
  const std::vector<double> z{0.5, 1.0, 2.0};
  const auto rep = test_poisson(pps, s.fam, z);
  for (const auto& lr : rep.levels) {
    EXPECT_TRUE(lr.passed) << "z=" << lr.level << " ks=" << lr.interarrival.p_value << " tip=" << lr.tip_tail.p_value
                           << " lag1=" << lr.lag1;
    EXPECT_NEAR(lr.estimated_rate / lr.predicted_rate, 1.0, 4.0 / std::sqrt(static_cast<double>(lr.events)))
        << "z=" << lr.level;
  }
  EXPECT_GT(renewal_permutation_test(pps[0], 200, BrownianStream(29, 0)), 0.001);
}

namespace {

double gk(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-11);
}

/// Mean up-crossing time d -> z plus mean down-crossing time z -> d of the
/// linear model, from the scale density x^b e^{eps/x} and the speed density
/// 2 x^{-b-2} e^{-eps/x} / lambda^2.
double linear_cycle_time(double b, double lambda, double eps, double d, double z) {
  auto s = [&](double x) { return std::pow(x, b) * std::exp(eps / x); };
  auto m = [&](double x) { return 2.0 / (lambda * lambda) * std::pow(x, -b - 2.0) * std::exp(-eps / x); };
  auto below = [&](double y) { return gk(m, 0.0, y); };
  // int_y^inf m with x = 1/v.
  auto above = [&](double y) { return gk([&](double v) { return m(1.0 / v) / (v * v); }, 0.0, 1.0 / y); };
  const double up = gk([&](double y) { return s(y) * below(y); }, d, z);
  const double down = gk([&](double y) { return s(y) * above(y); }, d, z);
  return up + down;
}

} // namespace

TEST(FiniteSpikeRate, MatchesCycleTimes) {
  struct Case {
    double b, lambda, d, z;
  };
  for (const Case c : {Case{3.0, 100.0, 0.1, 1.0}, Case{1.0, 30.0, 0.1, 0.5}, Case{0.0, 30.0, 0.01, 2.0}}) {
    const auto fam = ScalingFamily::linear_j(c.b, 1.0);
    const auto m = fam.model_at(c.lambda);
    const double want = 1.0 / linear_cycle_time(c.b, c.lambda, m.epsilon(), c.d, c.z);
    EXPECT_NEAR(finite_spike_rate(m, c.d, c.z) / want, 1.0, 1e-6) << c.b;
  }
}

TEST(FiniteSpikeRate, TendsToLimitIntensity) {
  const auto fam = ScalingFamily::linear_j(3.0, 1.0);
  const IntensityMeasure nu{fam};
  double prev = 1.0;
  for (double lambda : {1e2, 1e3, 1e4, 1e6}) {
    const double r = finite_spike_rate(fam.model_at(lambda), 1e-1 * std::pow(lambda, -0.25), 1.0) / nu.tail(1.0);
    EXPECT_LT(r, 1.0);
    EXPECT_LT(1.0 - r, prev);
    prev = 1.0 - r;
  }
  EXPECT_LT(prev, 0.01);
  EXPECT_THROW(finite_spike_rate(fam.model_at(10.0), 0.5, 0.2), DomainError);
}
