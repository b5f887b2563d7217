#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <boost/math/special_functions/expint.hpp>

#include "strongnoise/passage.hpp"

using namespace strongnoise;

namespace {

/// int_x^y e^{eps/u} du = [u e^{eps/u} - eps Ei(eps/u)]_x^y.
double linear0_scale_integral(double eps, double x, double y) {
  auto prim = [eps](double u) { return u * std::exp(eps / u) - eps * boost::math::expint(eps / u); };
  return prim(y) - prim(x);
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

} // namespace

TEST(ExitProbability, ScaleFunctionRatio) {
  EXPECT_NEAR(exit_probability(SdeModel::linear(0.0, 1.0, 0.0), 0.0, 1.0, 2.0), 0.5, 1e-15);
  EXPECT_NEAR(exit_probability(SdeModel::linear(1.0, 1.0, 0.0), 1.0, 2.0, 3.0), 0.375, 1e-15);
  EXPECT_THROW(exit_probability(SdeModel::linear(0.0, 1.0, 0.0), 1.0, 0.5, 2.0), DomainError);
  EXPECT_THROW(exit_probability(SdeModel::linear(0.0, 1.0, 0.0), 0.0, 2.0, 2.0), DomainError);
}

TEST(ExitProbability, PositiveEpsMatchesExponentialIntegral) {
  for (double eps : {1e-3, 0.05, 0.4}) {
    const auto m = SdeModel::linear(0.0, 1.0, eps);
    const double x = 0.2, y = 0.5, z = 1.0;
    const double exact = linear0_scale_integral(eps, x, y) / linear0_scale_integral(eps, x, z);
    EXPECT_NEAR(exit_probability(m, x, y, z), exact, 1e-9) << "eps=" << eps;
  }
}

TEST(ExitProbability, OriginUnreachableForPositiveEps) {
  for (double b : {0.0, 1.0, 3.0}) {
    const auto m = SdeModel::linear(b, 1.0, 1e-2);
    EXPECT_EQ(exit_probability(m, 0.0, 0.3, 2.0), 1.0);
    EXPECT_GT(exit_probability(m, 1e-4, 0.3, 2.0), 0.999);
    const auto lim = exit_probability_limits(m, 0.3, 2.0);
    EXPECT_EQ(lim.x_first, 1.0);
    EXPECT_NEAR(lim.eps_first, std::pow(0.15, b + 1.0), 1e-14);
  }
  const auto hom = SdeModel::homodyne(1.0, 1.0, 0.1);
  EXPECT_EQ(exit_probability(hom, 0.0, 0.5, 1.0), 1.0);
  const double p = exit_probability(hom, 0.2, 0.5, 1.0);
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1.0);
}

TEST(LimitLaws, LaplaceTransformValues) {
  const auto fam = ScalingFamily::linear_j(0.0, 2.0); // Jhat = 1
  EXPECT_EQ(limit_laplace_T(fam, 1.0, 2.0, 0.0), 1.0);
  EXPECT_NEAR(limit_laplace_T(fam, 1.0, 2.0, 1.0), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(limit_laplace_T(fam, 1.0, numeric::kInf, 1.0), 0.0);
  EXPECT_LT(limit_laplace_T(fam, 1.0, 1e12, 1.0), 1e-11);
}

TEST(LimitLaws, Monotonicity) {
  const auto fam = ScalingFamily::linear_j(1.0, 1.0);
  double prev = 1.0;
  for (double s : {0.1, 0.5, 1.0, 5.0}) {
    const double v = limit_laplace_T(fam, 0.5, 1.5, s);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_GT(limit_laplace_T(fam, 0.5, 1.5, 1.0), limit_laplace_T(fam, 0.5, 2.0, 1.0));
  EXPECT_LT(limit_laplace_T(fam, 0.5, 1.5, 1.0), limit_laplace_T(fam, 0.7, 1.5, 1.0));
}

TEST(LimitLaws, MixtureValues) {
  const auto law0 = limit_mixture(ScalingFamily::linear_j(0.0, 2.0), 1.0, 2.0);
  EXPECT_NEAR(law0.atom_weight, 0.5, 1e-15);
  EXPECT_NEAR(law0.exp_rate, 0.5, 1e-15);
  EXPECT_NEAR(law0.mean(), 1.0, 1e-15);
  // Linear b = 1 with Jhat = J/(2 Gamma(2)) = 1.
  const auto law1 = limit_mixture(ScalingFamily::linear_j(1.0, 2.0), 1.0, 2.0);
  EXPECT_NEAR(law1.atom_weight, 0.25, 1e-15);
  EXPECT_NEAR(law1.exp_rate, 0.5, 1e-15);
  EXPECT_NEAR(law1.mean(), 1.5, 1e-15);
  const auto near = limit_mixture(ScalingFamily::linear_j(0.0, 2.0), 2.0 - 1e-9, 2.0);
  EXPECT_NEAR(near.atom_weight, 1.0, 1e-9);
  EXPECT_THROW(limit_mixture(ScalingFamily::linear_j(0.0, 1.0), 2.0, 1.0), DomainError);
}

TEST(LimitLaws, MixtureInvertsTransform) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> ub(-0.5, 3.0), ul(0.05, 3.0), us(0.0, 5.0), uj(0.2, 4.0);
  for (int k = 0; k < 20; ++k) {
    const auto fam = ScalingFamily::linear_j(ub(gen), uj(gen));
    double y = ul(gen), z = ul(gen);
    if (y > z) std::swap(y, z);
    const double sigma = us(gen);
    const auto law = limit_mixture(fam, y, z);
    const double target = limit_laplace_T(fam, y, z, sigma);
    EXPECT_NEAR(law.laplace(sigma), target, 1e-12);
    EXPECT_NEAR(laplace_by_quadrature(law, sigma), target, 1e-12);
    // Mean from the scale function.
    EXPECT_NEAR(law.mean(), (fam.scale_q(z) - fam.scale_q(y)) / fam.j_hat(), 1e-12 * (1.0 + law.mean()));
  }
}

TEST(PhiOde, DownClosedForm) {
  const double lam = 7.0;
  const auto m = SdeModel::linear(0.0, lam, 0.0);
  const auto sol = solve_phi_ode(m, lam * lam, CrossingKind::Down, {1.0, 1.5, 2.0});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(sol.phi[i] * sol.grid[i], 1.0, 1e-14);
  EXPECT_NEAR(sol.transform(0, 2), 0.5, 1e-14);
  // b = 1, 8 sigma / lambda^2 = 5: c0 = (3 - 2) / 2.
  const auto m1 = SdeModel::linear(1.0, 2.0, 0.0);
  EXPECT_NEAR(solve_phi_ode(m1, 2.5, CrossingKind::Down, {1.0}).phi[0], 0.5, 1e-14);
  EXPECT_THROW(solve_phi_ode(SdeModel::linear(0.0, 2.0, 0.1), 1.0, CrossingKind::Down, {1.0}), UnsupportedFamily);
}

TEST(PhiOde, UpVanishesWithSigma) {
  const auto m = SdeModel::linear(0.0, 30.0, 1.0 / 900.0);
  const auto grid = linspace(0.1, 2.0, 20);
  const auto zero = solve_phi_ode(m, 0.0, CrossingKind::Up, grid);
  for (double p : zero.phi) EXPECT_EQ(p, 0.0);
  const auto tiny = solve_phi_ode(m, 1e-10, CrossingKind::Up, grid);
  for (double p : tiny.phi) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1e-8);
  }
}

TEST(PhiOde, UpApproachesLimitLaw) {
  const auto fam = ScalingFamily::linear_j(0.0, 1.0);
  const double lam = 100.0;
  const auto sol = solve_phi_ode(fam.model_at(lam), 1.0, CrossingKind::Up, {1.0, 2.0});
  const double limit = limit_laplace_T(fam, 1.0, 2.0, 1.0);
  EXPECT_NEAR(limit, 0.6, 1e-15);
  EXPECT_NEAR(sol.transform(0, 1) / limit, 1.0, 0.02);
  // Step refinement changes the answer far below the tolerance.
  PhiOdeOptions fine;
  fine.max_log_step = 2.5e-4;
  fine.origin_factor = 1e-3;
  const auto sol2 = solve_phi_ode(fam.model_at(lam), 1.0, CrossingKind::Up, {1.0, 2.0}, fine);
  EXPECT_NEAR(sol2.transform(0, 1), sol.transform(0, 1), 1e-5);
}

TEST(PhiOde, UpMatchesFiniteLambdaMonteCarlo) {
  const double lam = 10.0, eps = 0.01, y = 0.5, z = 1.0, sigma = 1.0;
  const auto m = SdeModel::linear(0.0, lam, eps);
  const auto sol = solve_phi_ode(m, sigma, CrossingKind::Up, {y, z});
  PassageSampling ps;
  ps.dt = 0.02 / (lam * lam);
  ps.horizon = 200.0;
  const auto s = sample_passages(m, y, z, 4000, BrownianStream(21, 0), ps);
  ASSERT_EQ(s.censored, 0u);
  const auto est = empirical_laplace(s.durations, sigma);
  EXPECT_NEAR(est.value, sol.transform(0, 1), 3.0 * est.standard_error + 0.005)
      << "mc " << est.value << " +- " << est.standard_error << " ode " << sol.transform(0, 1);
}

TEST(PhiOde, BoundaryWeightVanishesAtOrigin) {
  const auto m = SdeModel::linear(1.0, 30.0, 1e-2);
  const auto grid = std::vector<double>{2e-4, 4e-4, 8e-4, 1.6e-3};
  const auto sol = solve_phi_ode(m, 1.0, CrossingKind::Up, grid);
  std::vector<double> w;
  for (std::size_t i = 0; i < grid.size(); ++i)
    w.push_back(sol.phi[i] * std::exp(-2.0 * m.epsilon() * scale_h1(m, grid[i]) - 2.0 * scale_h0(m, grid[i])));
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_LT(w[i - 1], w[i]);
  EXPECT_LT(w.front(), 1e-15);
  // phi(0+) = 2 sigma / (lambda^2 eps), corrected by b u / eps.
  EXPECT_NEAR(sol.phi.front(), 2.0 / (900.0 * (1e-2 - 2e-4)), 1e-3);
}

TEST(PhiIntegral, LinearClosedForm) {
  const auto fam = ScalingFamily::linear_j(0.0, 2.0);
  const auto grid = linspace(0.01, 5.0, 30);
  const auto phi = solve_phi_integral(fam, 1.0, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(phi[i], 1.0 / (1.0 + grid[i]), 1e-9);
  for (double p : solve_phi_integral(fam, 0.0, grid)) EXPECT_EQ(p, 0.0);
}

TEST(PhiIntegral, SingularScaleDensity) {
  const auto fam = ScalingFamily::linear_j(-0.5, 1.0);
  const auto grid = linspace(0.05, 4.0, 20);
  const auto phi = solve_phi_integral(fam, 2.0, grid);
  const double r = 2.0 / fam.j_hat();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double z = grid[i];
    EXPECT_NEAR(phi[i], r / std::sqrt(z) / (1.0 + 2.0 * r * std::sqrt(z)), 1e-7 * phi[i]);
  }
}

TEST(PhiIntegral, HomodyneAgainstQuadratureScale) {
  const auto fam = ScalingFamily(SdeModel::homodyne(1.0, 1.0, 0.0), ScalingRule::PartitionJhat, 1.0);
  const auto grid = linspace(0.05, 3.0, 25);
  const auto phi = solve_phi_integral(fam, 1.0, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double z = grid[i];
    // q by the erfc closed form, independent of the library's quadrature.
    const double beta = 0.5;
    const double q = z * std::exp(-beta / (z * z)) - std::sqrt(std::numbers::pi * beta) * std::erfc(std::sqrt(beta) / z);
    const double oracle = std::exp(-beta / (z * z)) / (1.0 + q);
    EXPECT_NEAR(phi[i], oracle, 1e-6) << "z=" << z;
    EXPECT_NEAR(phi[i], phi_integral_closed_form(fam, 1.0, z), 1e-6);
  }
}

TEST(Regularity, VarianceIntegralVanishes) {
  using Grid = std::vector<std::pair<double, double>>;
  const Grid linear_grid{{0.5, 1e-2}, {0.2, 1e-3}, {0.05, 1e-4}, {0.01, 1e-5}};
  const Grid homodyne_grid{{0.5, 1e-2}, {0.2, 5e-3}, {0.1, 2e-3}, {0.05, 1e-3}};
  const std::vector<std::pair<SdeModel, Grid>> cases{{SdeModel::linear(0.0, 1.0, 0.0), linear_grid},
                                                     {SdeModel::linear(1.0, 1.0, 0.0), linear_grid},
                                                     {SdeModel::homodyne(1.0, 1.0, 0.0), homodyne_grid}};
  for (const auto& [m, grid] : cases) {
    double prev = numeric::kInf;
    for (auto [z, eps] : grid) {
      const double v = variance_regularity_integral(m, eps, z);
      EXPECT_GE(v, 0.0);
      EXPECT_LT(v, prev) << family_name(m.family()) << " z=" << z;
      prev = v;
    }
    EXPECT_LT(prev, 0.02);
  }
  // Linear b = 0: the integrand is e^{-eps/u}, so the value is below z and
  // tends to z as eps -> 0.
  const double v = variance_regularity_integral(SdeModel::linear(0.0, 1.0, 0.0), 1e-5, 0.01);
  EXPECT_LT(v, 0.01);
  EXPECT_GT(v, 0.01 - 1e-5 * (1.0 + std::log(1e3)));
}

TEST(Crossings, RampUp) {
  std::vector<double> t, x;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(0.01 * i);
    x.push_back(0.1 + 2.0 * 0.01 * i);
  }
  const auto r = estimate_crossings(t, x, 0.5, 1.5);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].kind, CrossingKind::Up);
  EXPECT_NEAR(r[0].duration, 1.0 / 2.0, 1e-12);
  EXPECT_NEAR(r[0].start, 0.2, 1e-12);
  EXPECT_NEAR(r[0].extremum, 0.5, 1e-12);
  EXPECT_TRUE(estimate_crossings(t, x, 0.5, 3.0).empty());
}

TEST(Crossings, DownRecordsMaximumAndAlternates) {
  // 1 -> 2 -> 0.4 -> 1.2 -> 0.3 on a unit grid.
  const std::vector<double> t{0, 1, 2, 3, 4}, x{1.0, 2.0, 0.4, 1.2, 0.3};
  const auto r = estimate_crossings(t, x, 1.0, 0.5);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].kind, CrossingKind::Down);
  EXPECT_EQ(r[0].start, 0.0);
  EXPECT_NEAR(r[0].duration, 1.0 + 1.5 / 1.6, 1e-12);
  EXPECT_EQ(r[0].extremum, 2.0);
  EXPECT_NEAR(r[1].start, 2.0 + 0.6 / 0.8, 1e-12);
  EXPECT_NEAR(r[1].extremum, 1.2, 1e-15);
  // Exact grid hits use the sample time.
  const auto e = estimate_crossings(std::vector<double>{0, 1, 2}, std::vector<double>{0.2, 0.5, 1.0}, 0.5, 1.0);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].start, 1.0);
  EXPECT_EQ(e[0].duration, 1.0);
}

TEST(Crossings, StoredPathAgreesWithStreaming) {
  const auto m = SdeModel::linear(0.0, 10.0, 0.01);
  const auto p = simulate_path(m, 0.5, 50.0, 1e-3, BrownianStream(31, 0));
  const auto up = estimate_crossings(p, 0.5, 1.0);
  ASSERT_GT(up.size(), 5u);
  for (const auto& r : up) {
    EXPECT_GT(r.duration, 0.0);
    EXPECT_LE(r.extremum, 0.5);
  }
}

TEST(DownCrossing, ExactSamplerTransform) {
  const double lam = 10.0;
  const auto m = SdeModel::linear(0.0, lam, 0.0);
  PassageSampling ps;
  ps.dt = 0.01 / (lam * lam);
  ps.scheme = Scheme::ExactLinear;
  const auto s = sample_passages(m, 2.0, 1.0, 4000, BrownianStream(41, 0), ps);
  ASSERT_EQ(s.censored, 0u);
  const auto est = empirical_laplace(s.durations, lam * lam);
  EXPECT_NEAR(est.value, 0.5, 0.02) << est.standard_error;
}

TEST(DownCrossing, MaximumLaw) {
  const double lam = 10.0, y = 1.0, x = 0.5;
  for (double b : {0.0, 1.0}) {
    const auto m = SdeModel::linear(b, lam, 0.0);
    PassageSampling ps;
    ps.dt = 0.1 / (lam * lam);
    const auto s = sample_passages(m, y, x, 10000, BrownianStream(42, static_cast<std::uint32_t>(b)), ps);
    ASSERT_EQ(s.censored, 0u);
    for (double mm : {1.5, 2.0, 4.0}) {
      const double p = static_cast<double>(std::count_if(s.extrema.begin(), s.extrema.end(),
                                                         [&](double v) { return v > mm; })) /
                       static_cast<double>(s.extrema.size());
      const double e = b + 1.0;
      const double exact = (std::pow(y, e) - std::pow(x, e)) / (std::pow(mm, e) - std::pow(x, e));
      EXPECT_NEAR(p, exact, 0.03) << "b=" << b << " m=" << mm;
    }
  }
}

TEST(DownCrossing, StrongMarkovFactorization) {
  const double lam = 10.0, sigma = 100.0;
  const auto m = SdeModel::linear(1.0, lam, 1e-3);
  PassageSampling ps;
  ps.dt = 0.02 / (lam * lam);
  const auto whole = sample_passages(m, 1.0, 0.4, 4000, BrownianStream(43, 0), ps);
  const auto first = sample_passages(m, 1.0, 0.7, 4000, BrownianStream(44, 0), ps);
  const auto second = sample_passages(m, 0.7, 0.4, 4000, BrownianStream(45, 0), ps);
  const auto a = empirical_laplace(whole.durations, sigma);
  const auto b1 = empirical_laplace(first.durations, sigma);
  const auto b2 = empirical_laplace(second.durations, sigma);
  const double prod = b1.value * b2.value;
  const double se = std::hypot(a.standard_error, std::hypot(b1.standard_error * b2.value, b2.standard_error * b1.value));
  EXPECT_NEAR(a.value, prod, 3.0 * se);
}

TEST(DownCrossing, ScalesLikeInverseLambdaSquared) {
  const auto fam = ScalingFamily::linear_j(0.0, 1.0);
  const auto r = downcross_scaling_check(fam, 1.0, 0.5, {10.0, 20.0, 40.0}, 2000, BrownianStream(46, 0));
  EXPECT_NEAR(r.slope, -2.0, 0.2);
  ASSERT_EQ(r.means.size(), 3u);
  EXPECT_THROW(downcross_scaling_check(fam, 0.5, 1.0, {10.0, 20.0}, 10, BrownianStream(46, 0)), DomainError);
}

TEST(ExitEstimate, MatchesQuadrature) {
  const auto m = SdeModel::linear(1.0, 30.0, 1e-3);
  PassageSampling ps;
  ps.dt = 0.1 / 900.0;
  const auto e = estimate_exit_probability(m, 0.2, 0.5, 1.0, 2000, BrownianStream(47, 0), ps);
  EXPECT_EQ(e.censored, 0u);
  EXPECT_NEAR(e.probability, exit_probability(m, 0.2, 0.5, 1.0), 3.0 * e.standard_error);
}

TEST(Mixture, FitOnSyntheticMixture) {
  std::mt19937_64 gen(48);
  std::bernoulli_distribution atom(0.4);
  std::exponential_distribution<double> ex(0.5), fast(900.0);
  std::vector<double> d;
  for (int i = 0; i < 20000; ++i) d.push_back(atom(gen) ? fast(gen) : ex(gen));
  const auto f = fit_passage_mixture(d, 30.0, 0.5);
  EXPECT_NEAR(f.atom_fraction, 0.4 + 0.6 * (1.0 - std::exp(-0.5 * f.threshold)), 0.015);
  EXPECT_NEAR(f.tail_rate, 0.5, 4.0 * f.tail_rate_se);
  EXPECT_GT(f.tail_ks.p_value, 0.01);
  EXPECT_LE(f.atom_fraction_low, f.atom_fraction);
  EXPECT_GE(f.atom_fraction_high, f.atom_fraction);
  EXPECT_LT(fit_passage_mixture(d, 30.0, 1.0).tail_ks.p_value, 1e-6);
}
