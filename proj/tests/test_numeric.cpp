#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "strongnoise/quadrature.hpp"
#include "strongnoise/rng.hpp"
#include "strongnoise/stats.hpp"

using namespace strongnoise;

TEST(Quadrature, EndpointSingularity) {
  EXPECT_NEAR(numeric::integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0), 2.0, 1e-9);
}

TEST(Quadrature, HalfLineWithAlgebraicTail) {
  EXPECT_NEAR(numeric::integrate([](double x) { return std::pow(1.0 + x, -1.5); }, 0.0, numeric::kInf), 2.0,
              1e-9);
}

TEST(Quadrature, LogIntegrateNarrowPeak) {
  // Gaussian of width 1e-3 centred at 5, scaled by e^{800}.
  const double s = 1e-3;
  auto g = [&](double x) { return 800.0 - (x - 5.0) * (x - 5.0) / (2.0 * s * s); };
  const double expect = 800.0 + std::log(s * std::sqrt(2.0 * std::numbers::pi));
  EXPECT_NEAR(numeric::log_integrate(g, 0.0, numeric::kInf), expect, 1e-8);
}

TEST(Quadrature, DivergentIntegralReported) {
  EXPECT_THROW(numeric::integrate([](double x) { return 1.0 / x; }, 0.0, 1.0), NumericError);
}

TEST(RootFinding, Cubic) {
  EXPECT_NEAR(numeric::find_root([](double x) { return x * x * x - 2.0; }, 0.0, 2.0), std::cbrt(2.0), 1e-13);
  EXPECT_THROW(numeric::find_root([](double x) { return x * x + 1.0; }, 0.0, 2.0), NumericError);
}

TEST(Stats, KolmogorovCriticalValues) {
  // Tabulated asymptotic critical values.
  EXPECT_NEAR(stats::kolmogorov_survival(1.3581), 0.05, 2e-4);
  EXPECT_NEAR(stats::kolmogorov_survival(1.6276), 0.01, 1e-4);
}

TEST(Stats, KsOneSampleStatistic) {
  // Sample {0.1, 0.5, 0.9} against U(0,1): largest gap is 1/3 - 0.1 = 0.9 - 2/3 = 7/30.
  const auto r = stats::ks_one_sample({0.9, 0.1, 0.5}, [](double x) { return x; });
  EXPECT_NEAR(r.statistic, 7.0 / 30.0, 1e-12);
}

TEST(Stats, KsDetectsShift) {
  const BrownianStream s(5, 0);
  std::vector<double> a, b;
  for (int i = 0; i < 2000; ++i) {
    a.push_back(s.normal(i));
    b.push_back(s.normal(i + 100000) + 0.3);
  }
  EXPECT_LT(stats::ks_two_sample(a, b).p_value, 1e-6);
  std::vector<double> c;
  for (int i = 0; i < 2000; ++i) c.push_back(s.normal(i + 200000));
  EXPECT_GT(stats::ks_two_sample(a, c).p_value, 0.01);
}

TEST(Stats, LeastSquaresExactLine) {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  const auto f = stats::least_squares(x, y);
  EXPECT_DOUBLE_EQ(f.slope, 2.0);
  EXPECT_DOUBLE_EQ(f.intercept, 1.0);
}

TEST(Stats, DispersionOfPoissonCounts) {
  // Counts of a unit-rate Poisson process in windows of length 10, built
  // from exponential gaps.
  const BrownianStream s(9, 0);
  std::vector<double> counts(200, 0.0);
  double t = 0.0;
  std::uint64_t k = 0;
  while (true) {
    t += -std::log(s.uniform(k++, Lane::Auxiliary));
    if (t >= 2000.0) break;
    counts[static_cast<std::size_t>(t / 10.0)] += 1.0;
  }
  EXPECT_GT(stats::dispersion_test(counts).p_value, 0.01);
  std::vector<double> clumped(200);
  for (int i = 0; i < 200; ++i) clumped[i] = (i % 2) ? 0.0 : 20.0;
  EXPECT_LT(stats::dispersion_test(clumped).p_value, 1e-6);
}

TEST(Stats, Autocorrelation) {
  std::vector<double> alt;
  for (int i = 0; i < 100; ++i) alt.push_back(i % 2 ? 1.0 : -1.0);
  EXPECT_NEAR(stats::lag1_autocorrelation(alt), -0.99, 1e-12);
}
