#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "strongnoise/errors.hpp"
#include "strongnoise/models.hpp"
#include "strongnoise/quadrature.hpp"
#include "strongnoise/rng.hpp"
#include "strongnoise/simulate.hpp"
#include "strongnoise/stats.hpp"

namespace strongnoise {

/// U(x) = depth (x^2 - 1)^2, barrier height depth between the minima +-1.
inline double double_well_potential(double x, double depth = 0.25) { return depth * (x * x - 1.0) * (x * x - 1.0); }

/// e^{2 Delta U / nu^2}.
inline double kramers_time(double nu, double barrier) {
  if (!(nu > 0.0)) throw DomainError("kramers_time: nu must be > 0");
  return std::exp(2.0 * barrier / (nu * nu));
}

namespace detail {

inline const DoubleWellParams& well_params(const SdeModel& m, const char* op) {
  if (m.family() != Family::DoubleWell) throw UnsupportedFamily(std::string(op) + " needs the double-well model");
  return m.params_as<DoubleWellParams>();
}

} // namespace detail

/// Mean first passage time of dX = -U'(X) dt + nu dB from x up to z > x,
/// with X reflected at `reflect_at` (-inf for none):
/// (2/nu^2) int_x^z e^{2U(y)/nu^2} int_r^y e^{-2U(u)/nu^2} du dy, evaluated
/// by cumulative Simpson sums on a uniform grid of `nodes` intervals.
inline double mean_first_passage(const SdeModel& m, double x, double z, double reflect_at = -numeric::kInf,
                                 std::size_t nodes = 20000) {
  const double depth = detail::well_params(m, "mean_first_passage").depth;
  const double nu = m.lambda();
  if (!(nu > 0.0)) throw DomainError("mean_first_passage: nu must be > 0");
  if (!(z > x) || !(x >= reflect_at)) throw DomainError("mean_first_passage: need reflect_at <= x < z");
  const double s = 2.0 / (nu * nu);
  // Below lo the inner integrand is below e^-60 relative to the wells.
  double lo = reflect_at;
  if (std::isinf(lo)) {
    lo = std::min(x, -1.0);
    while (s * double_well_potential(lo, depth) < 60.0) lo -= 0.05;
  }
  const std::size_t n = nodes + (nodes % 2);
  const double h = (z - lo) / static_cast<double>(n);
  auto inner_f = [&](double u) { return std::exp(-s * (double_well_potential(u, depth))); };
  // I(y) on the grid by the trapezoidal rule refined with Simpson pairs.
  std::vector<double> y(n + 1), inner(n + 1);
  for (std::size_t i = 0; i <= n; ++i) y[i] = lo + h * static_cast<double>(i);
  inner[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double mid = inner_f(0.5 * (y[i - 1] + y[i]));
    inner[i] = inner[i - 1] + h / 6.0 * (inner_f(y[i - 1]) + 4.0 * mid + inner_f(y[i]));
  }
  auto outer = [&](std::size_t i) { return std::exp(s * (double_well_potential(y[i], depth))) * inner[i]; };
  const auto i0 = static_cast<std::size_t>(std::ceil((x - lo) / h - 1e-9));
  double total = 0.0;
  // Partial first interval [x, y_i0].
  if (y[i0] > x && i0 > 0) {
    const double w = (x - y[i0 - 1]) / h;
    const double fx = (1.0 - w) * outer(i0 - 1) + w * outer(i0);
    total += 0.5 * (y[i0] - x) * (fx + outer(i0));
  }
  for (std::size_t i = i0; i < n; ++i) total += 0.5 * h * (outer(i) + outer(i + 1));
  return s * total;
}

/// Stationary (Gibbs) density e^{-2U/nu^2} restricted to one well (x < 0 or
/// x > 0) as a CDF tabulated on a grid and linearly interpolated.
class WellGibbsCdf {
public:
  WellGibbsCdf(const SdeModel& m, bool right_well, std::size_t nodes = 4000) : right_(right_well) {
    const double depth = detail::well_params(m, "WellGibbsCdf").depth;
    const double s = 2.0 / (m.lambda() * m.lambda());
    double far = 1.0;
    while (s * double_well_potential(far, depth) < 60.0) far += 0.05;
    const double h = far / static_cast<double>(nodes);
    grid_.resize(nodes + 1);
    cdf_.resize(nodes + 1);
    auto f = [&](double x) { return std::exp(-s * double_well_potential(x, depth)); };
    // Tabulated on |x| in [0, far]; the well is symmetric.
    for (std::size_t i = 0; i <= nodes; ++i) grid_[i] = h * static_cast<double>(i);
    cdf_[0] = 0.0;
    for (std::size_t i = 1; i <= nodes; ++i)
      cdf_[i] = cdf_[i - 1] + h / 6.0 * (f(grid_[i - 1]) + 4.0 * f(grid_[i] - 0.5 * h) + f(grid_[i]));
    const double total = cdf_.back();
    for (double& c : cdf_) c /= total;
  }

  double operator()(double x) const {
    // Mass of the well between 0 and |x|, oriented so the CDF increases in x.
    const double a = std::abs(x);
    double g;
    if (a >= grid_.back()) g = 1.0;
    else {
      const auto k = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), a) - grid_.begin());
      const double w = (a - grid_[k - 1]) / (grid_[k] - grid_[k - 1]);
      g = cdf_[k - 1] + w * (cdf_[k] - cdf_[k - 1]);
    }
    if (right_) return x <= 0.0 ? 0.0 : g;
    return x >= 0.0 ? 1.0 : 1.0 - g;
  }

private:
  bool right_;
  std::vector<double> grid_, cdf_;
};

struct WeakNoiseRun {
  /// Times of the jumps: first hits of the barrier top 0 after a visit to a
  /// minimum.
  std::vector<double> jump_times;
  std::vector<double> inter_jump;
  /// Times between arrivals at opposite minima.
  std::vector<double> well_to_well;
  /// Positions sampled every `thin` time units, split by well.
  std::vector<double> left_samples, right_samples;
  double horizon = 0.0;
};

/// One long double-well path from the left minimum, analysed on the fly.
/// A jump is counted at the first step that reaches 0 (bridge extremum
/// included) after the path has visited -1 or +1.
inline WeakNoiseRun run_weak_noise(const SdeModel& m, double horizon, double dt, double thin,
                                   const BrownianStream& stream) {
  detail::well_params(m, "run_weak_noise");
  if (!(thin > 0.0)) throw DomainError("run_weak_noise: thin must be > 0");
  WeakNoiseRun out;
  out.horizon = horizon;
  bool visited_min = true;
  int last_side = -1;
  double arrival = 0.0;
  double next_sample = thin;
  simulate_stream(m, -1.0, horizon, dt, stream, SimulationOptions{}, [&](const StepView& v) {
    const double hi = v.max_envelope() >= 0.0 ? v.max() : std::max(v.x0, v.x1);
    const double lo = v.min_envelope() <= 0.0 ? v.min() : std::min(v.x0, v.x1);
    if (visited_min && hi >= 0.0 && lo <= 0.0) {
      out.jump_times.push_back(v.t1);
      if (out.jump_times.size() > 1) out.inter_jump.push_back(v.t1 - out.jump_times[out.jump_times.size() - 2]);
      visited_min = false;
    }
    if (v.x1 <= -1.0 || v.x1 >= 1.0) {
      visited_min = true;
      const int side = v.x1 < 0.0 ? -1 : 1;
      if (side != last_side) {
        out.well_to_well.push_back(v.t1 - arrival);
        last_side = side;
        arrival = v.t1;
      }
    }
    while (v.t1 >= next_sample) {
      (v.x1 < 0.0 ? out.left_samples : out.right_samples).push_back(v.x1);
      next_sample += thin;
    }
  });
  return out;
}

struct WeakNoiseSummary {
  double nu = 0.0;
  double mean_inter_jump = 0.0;
  double inter_jump_se = 0.0;
  std::size_t jumps = 0;
  double kramers = 0.0;
  /// Exact mean of the inter-jump time: barrier top to a minimum plus
  /// minimum to barrier top.
  double exact_inter_jump = 0.0;
  double mean_well_to_well = 0.0;
  /// 2 Delta U / nu^2 >= 2: transitions are rare compared with relaxation
  /// inside a well.
  bool wells_separated = false;
  stats::KsResult left_gibbs;
  stats::KsResult right_gibbs;
};

/// Inter-jump statistics against the Kramers time and the exact mean, and
/// KS tests of the within-well occupation against the Gibbs density.
inline WeakNoiseSummary summarize_weak_noise(const SdeModel& m, const WeakNoiseRun& run) {
  const double depth = detail::well_params(m, "summarize_weak_noise").depth;
  WeakNoiseSummary s;
  s.nu = m.lambda();
  if (run.inter_jump.size() < 2) throw InsufficientData("summarize_weak_noise: fewer than three jumps");
  s.jumps = run.jump_times.size();
  s.mean_inter_jump = stats::mean(run.inter_jump);
  s.inter_jump_se = stats::standard_error(run.inter_jump);
  s.kramers = kramers_time(s.nu, depth);
  s.wells_separated = 2.0 * depth / (s.nu * s.nu) >= 2.0;
  // From 0 the first minimum reached is +-1; by symmetry this is the
  // passage 0 -> 1 with reflection at 0.
  s.exact_inter_jump = mean_first_passage(m, 0.0, 1.0, 0.0) + mean_first_passage(m, -1.0, 0.0);
  if (run.well_to_well.size() > 1)
    s.mean_well_to_well = stats::mean(std::span(run.well_to_well).subspan(1));
  if (!run.left_samples.empty()) s.left_gibbs = stats::ks_one_sample(run.left_samples, WellGibbsCdf(m, false));
  if (!run.right_samples.empty()) s.right_gibbs = stats::ks_one_sample(run.right_samples, WellGibbsCdf(m, true));
  return s;
}

} // namespace strongnoise
