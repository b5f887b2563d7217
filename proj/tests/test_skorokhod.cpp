#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "strongnoise/rng.hpp"
#include "strongnoise/skorokhod.hpp"

using namespace strongnoise;

namespace {

DiscretePath sample(double t_end, std::size_t n, double (*fn)(double)) {
  DiscretePath f;
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = t_end * static_cast<double>(i) / static_cast<double>(n);
    f.times.push_back(t);
    f.values.push_back(fn(t));
  }
  return f;
}

DiscretePath brownian(double f0, double t_end, std::size_t n, std::uint64_t seed, std::uint32_t id = 0) {
  const BrownianStream s(seed, id);
  DiscretePath f;
  const double dt = t_end / static_cast<double>(n);
  double w = f0;
  f.times.push_back(0.0);
  f.values.push_back(w);
  for (std::size_t i = 0; i < n; ++i) {
    w += std::sqrt(dt) * s.normal(i);
    f.times.push_back(dt * static_cast<double>(i + 1));
    f.values.push_back(w);
  }
  return f;
}

} // namespace

TEST(Decompose, NonnegativeDriverUntouched) {
  const auto f = sample(2.0, 200, [](double t) { return t; });
  const auto p = skorokhod_decompose(f);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    EXPECT_EQ(p.b_part[i], 0.0);
    EXPECT_EQ(p.y_part[i], f.values[i]);
  }
}

TEST(Decompose, ForcedReflection) {
  const auto f = sample(2.0, 200, [](double t) { return -t; });
  const auto p = skorokhod_decompose(f);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    EXPECT_DOUBLE_EQ(p.b_part[i], f.times[i]);
    EXPECT_EQ(p.y_part[i], 0.0);
  }
}

TEST(Decompose, Sine) {
  const auto f = sample(1.5 * std::numbers::pi, 3000, [](double t) { return std::sin(t); });
  const auto p = skorokhod_decompose(f);
  double running_min = 0.0;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    running_min = std::min(running_min, f.values[i]);
    if (f.times[i] <= std::numbers::pi) {
      EXPECT_NEAR(p.b_part[i], 0.0, 1e-15);
    }
    EXPECT_DOUBLE_EQ(p.b_part[i], -running_min);
  }
  EXPECT_NEAR(p.b_part.back(), 1.0, 1e-12);
  EXPECT_TRUE(verify_admissible(f, p));
  EXPECT_TRUE(verify_reflection_support(f, p, 0.0));
  EXPECT_THROW(skorokhod_decompose(sample(1.0, 10, [](double t) { return t - 0.5; })), DomainError);
}

TEST(Admissible, DetectsViolations) {
  const auto f = brownian(0.3, 1.0, 1000, 1);
  auto p = skorokhod_decompose(f);
  ASSERT_TRUE(verify_admissible(f, p));
  auto dec = p;
  dec.b_part[500] = dec.b_part[499] - 1e-9;
  dec.y_part[500] = dec.b_part[500] + f.values[500];
  const auto r = verify_admissible(f, dec);
  EXPECT_FALSE(r.ok);
  ASSERT_TRUE(r.index.has_value());
  EXPECT_TRUE(*r.index == 500u || *r.index == 501u);
  // Find a point where y is (near) zero and push it below.
  auto neg = p;
  std::size_t k = 0;
  for (std::size_t i = 0; i < neg.y_part.size(); ++i)
    if (neg.y_part[i] < 1e-7) k = i;
  neg.y_part[k] -= 1e-6;
  EXPECT_FALSE(verify_admissible(f, neg).ok);
  DecompositionPair short_pair{{0.0}, {0.3}};
  EXPECT_THROW(verify_admissible(f, short_pair), ValidationError);
}

TEST(Approximate, ExactDecompositionAlwaysApproximate) {
  const auto f = brownian(0.0, 2.0, 4000, 2);
  const auto p = skorokhod_decompose(f);
  for (double beta : {0.0, 0.1, 5.0})
    for (double ups : {1e-6, 0.01, 1.0}) EXPECT_TRUE(verify_approximate(f, p, beta, ups));
}

TEST(Approximate, SlopeViolationDetected) {
  const auto f = sample(1.0, 100, [](double) { return 1.0; });
  DecompositionPair p;
  for (double t : f.times) {
    p.b_part.push_back(t);
    p.y_part.push_back(t + 1.0);
  }
  EXPECT_FALSE(verify_approximate(f, p, 0.5, 0.5).ok);
  EXPECT_TRUE(verify_approximate(f, p, 1.0, 0.5).ok);
}

TEST(EpsEquation, ApproximateForEveryLevel) {
  const double eps = 1e-3, alpha = 2.0;
  const auto f = brownian(0.0, 1.0, 20000, 3);
  const auto p = solve_eps_equation(f, eps, alpha);
  EXPECT_TRUE(verify_admissible(f, p));
  for (double c : {1e-4, 1e-3, 0.01, 0.05, 0.1, 0.5, 1.0})
    EXPECT_TRUE(verify_approximate(f, p, eps * std::pow(c, -alpha), c)) << "C=" << c;
}

TEST(EpsEquation, ConstantDriverClosedForm) {
  const double f0 = 0.5, eps = 0.05, alpha = 2.0, dt = 1e-4;
  const auto f = sample(1.0, static_cast<std::size_t>(1.0 / dt), [](double) { return 0.5; });
  const auto p = solve_eps_equation(f, eps, alpha);
  for (std::size_t i = 0; i < f.values.size(); i += 500) {
    const double exact = std::pow(std::pow(f0, alpha + 1.0) + (alpha + 1.0) * eps * f.times[i], 1.0 / (alpha + 1.0));
    EXPECT_NEAR(p.y_part[i] / exact, 1.0, 1e-4);
  }
}

TEST(EpsEquation, StartsFromZero) {
  const auto f = sample(1.0, 1000, [](double) { return 0.0; });
  const auto p = solve_eps_equation(f, 0.01, 1.5);
  EXPECT_EQ(p.y_part[0], 0.0);
  for (std::size_t i = 1; i < p.y_part.size(); ++i) EXPECT_GT(p.y_part[i], p.y_part[i - 1]);
  // y^{5/2} = (5/2) eps t from rest.
  EXPECT_NEAR(p.y_part.back() / std::pow(2.5 * 0.01, 0.4), 1.0, 2e-3);
}

TEST(EpsEquation, VanishingRepulsion) {
  const auto f = sample(1.0, 1000, [](double t) { return 0.1 + t; });
  const auto p = solve_eps_equation(f, 1e-12, 2.0);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    EXPECT_NEAR(p.y_part[i], f.values[i], 1e-9);
    EXPECT_LT(p.b_part[i], 1e-9);
  }
}

TEST(EpsEquation, ConvergesWithinErrorBound) {
  const double alpha = 2.0, t_end = 1.0;
  const auto f = brownian(0.0, t_end, 100000, 4);
  double prev = 1e300;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const auto p = solve_eps_equation(f, eps, alpha);
    const double bound = eps_equation_bound(eps, alpha, t_end);
    const auto r = bound_check(f, p, 0.0, bound);
    EXPECT_TRUE(r.ok) << "eps=" << eps << " max gap " << r.max_gap << " bound " << bound;
    EXPECT_LT(r.max_gap, prev);
    prev = r.max_gap;
  }
}

TEST(EpsEquation, BoundOnManyDrivers) {
  for (double alpha : {1.5, 2.0, 4.0})
    for (double eps : {1e-2, 1e-3})
      for (std::uint32_t id = 0; id < 10; ++id) {
        const auto f = brownian(0.0, 2.0, 20000, 5, id);
        const auto p = solve_eps_equation(f, eps, alpha);
        for (double c : {0.01, 0.1, std::pow(alpha * eps * 2.0, 1.0 / (1.0 + alpha))}) {
          const auto r = bound_check(f, p, eps * std::pow(c, -alpha), c);
          EXPECT_TRUE(r.ok) << "alpha=" << alpha << " eps=" << eps << " C=" << c;
        }
      }
}

TEST(BoundCheck, ExactDecompositionHasZeroGap) {
  const auto f = brownian(0.2, 1.0, 5000, 6);
  const auto r = bound_check(f, skorokhod_decompose(f), 0.0, 1e-300);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.max_gap, 0.0);
}

TEST(Minimality, AdmissiblePairsDominateSkorokhodTerm) {
  for (std::uint32_t id = 0; id < 100; ++id) {
    const auto f = brownian(0.1, 1.0, 2000, 7, id);
    auto p = skorokhod_decompose(f);
    const BrownianStream s(8, id);
    double extra = 0.0;
    for (std::size_t i = 1; i < p.b_part.size(); ++i) {
      extra += 0.01 * s.uniform(i, Lane::Auxiliary) * (s.uniform(i, Lane::BridgeMax) < 0.05);
      p.b_part[i] += extra;
      p.y_part[i] = p.b_part[i] + f.values[i];
    }
    ASSERT_TRUE(verify_admissible(f, p));
    const auto r = bound_check(f, p, 1e6, 1e6);
    EXPECT_TRUE(r.ok);
    for (double g : r.gap) ASSERT_GE(g, 0.0);
  }
}

TEST(Tanaka, ReflectedBrownianMotionRecovered) {
  // |W~| = L + int sign(W~) dW~ with L the Skorokhod term.
  const std::size_t n = 200000;
  const double t_end = 1.0, dt = t_end / n;
  const auto wt = brownian(0.0, t_end, n, 9);
  DiscretePath f;
  f.times = wt.times;
  f.values.push_back(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double sgn = wt.values[i] > 0.0 ? 1.0 : (wt.values[i] < 0.0 ? -1.0 : 1.0);
    f.values.push_back(f.values.back() + sgn * (wt.values[i + 1] - wt.values[i]));
  }
  const auto p = skorokhod_decompose(f);
  double err = 0.0;
  for (std::size_t i = 0; i <= n; ++i) err = std::max(err, std::abs(p.y_part[i] - std::abs(wt.values[i])));
  EXPECT_LT(err, 4.0 * std::sqrt(dt * std::log(static_cast<double>(n))));
}
