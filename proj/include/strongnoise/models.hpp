#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Boost 1.74 pchip calls isnan unqualified.
namespace boost::math::interpolators {
using std::isnan;
}
#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "strongnoise/errors.hpp"
#include "strongnoise/quadrature.hpp"

namespace strongnoise {

enum class Family { Linear, PowerLaw, Homodyne, ThermalQND, RabiQND, DoubleWell, Custom };

inline std::string_view family_name(Family f) {
  switch (f) {
  case Family::Linear: return "linear";
  case Family::PowerLaw: return "power_law";
  case Family::Homodyne: return "homodyne";
  case Family::ThermalQND: return "thermal_qnd";
  case Family::RabiQND: return "rabi_qnd";
  case Family::DoubleWell: return "double_well";
  case Family::Custom: return "custom";
  }
  return "unknown";
}

inline Family family_from_name(std::string_view s) {
  for (Family f : {Family::Linear, Family::PowerLaw, Family::Homodyne, Family::ThermalQND, Family::RabiQND,
                   Family::DoubleWell, Family::Custom})
    if (family_name(f) == s) return f;
  throw ValidationError("unknown model family '" + std::string(s) + "'");
}

/// a = 1, b(x) = b x, c(x) = x.
struct LinearParams {
  double b = 0.0;
};

/// a = x^q, b(x) = b x^n, c(x) = x^k with n = 2k - 1.
struct PowerLawParams {
  double b = 0.0;
  double q = 0.0;
  double n = 1.0;
  double k = 1.0;
};

/// a = 1, b(x) = b x, c(x) = x^2.
struct HomodyneParams {
  double b = 1.0;
};

/// Thermal qubit population under energy monitoring:
/// a = p - x, b = 0, c(x) = x (1 - x); epsilon = 2 eta / lambda^2.
struct ThermalQndParams {
  double p = 0.5;
};

/// Rabi angle under non-demolition monitoring:
/// a = 1, b(x) = sin x cos x, c(x) = sin x.
struct RabiQndParams {};

/// Gradient flow in U(x) = depth (x^2 - 1)^2 with additive noise of
/// strength nu (stored as the model's lambda).
struct DoubleWellParams {
  double depth = 0.25;
};

/// User-supplied coefficients; h0, h1 and q may be given in closed form,
/// otherwise they are tabulated by quadrature at construction.
struct CustomCoefficients {
  std::function<double(double)> a;
  std::function<double(double)> b;
  std::function<double(double)> c;
  std::function<double(double)> c_prime;
  std::function<double(double)> h0;
  std::function<double(double)> h1;
  std::function<double(double)> q;
};

namespace detail {

/// Function tabulated against ln x on a log-spaced grid, interpolated by a
/// monotonicity-preserving cubic and extended linearly in ln x.
class LogTable {
public:
  LogTable() = default;
  LogTable(std::vector<double> lnx, std::vector<double> y)
      : lo_(lnx.front()), hi_(lnx.back()), ylo_(y.front()), yhi_(y.back()) {
    spline_ = std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(std::move(lnx),
                                                                                       std::move(y));
    slo_ = spline_->prime(lo_);
    shi_ = spline_->prime(hi_);
  }
  double operator()(double lnx) const {
    if (lnx <= lo_) return ylo_ + slo_ * (lnx - lo_);
    if (lnx >= hi_) return yhi_ + shi_ * (lnx - hi_);
    return (*spline_)(lnx);
  }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

private:
  std::shared_ptr<boost::math::interpolators::pchip<std::vector<double>>> spline_;
  double lo_ = 0, hi_ = 0, ylo_ = 0, yhi_ = 0, slo_ = 0, shi_ = 0;
};

struct CustomData {
  CustomCoefficients coef;
  LogTable h0;  // h0 against ln x, h0(1) = 0
  LogTable h1;  // h1 against ln x, h1(+inf) = 0
  LogTable lnq; // ln q against ln x
};

} // namespace detail

using FamilyParams = std::variant<LinearParams, PowerLawParams, HomodyneParams, ThermalQndParams, RabiQndParams,
                                  DoubleWellParams, std::shared_ptr<const detail::CustomData>>;

/// One-dimensional SDE dX = (lambda^2/2)(eps a(X) - b(X)) dt + lambda c(X) dB.
/// Immutable; validated at construction.
class SdeModel {
public:
  static SdeModel linear(double b, double lambda, double epsilon) {
    return SdeModel(Family::Linear, LinearParams{b}, lambda, epsilon);
  }
  static SdeModel power_law(PowerLawParams p, double lambda, double epsilon) {
    return SdeModel(Family::PowerLaw, p, lambda, epsilon);
  }
  static SdeModel homodyne(double b, double lambda, double epsilon) {
    return SdeModel(Family::Homodyne, HomodyneParams{b}, lambda, epsilon);
  }
  static SdeModel thermal_qnd(double p, double lambda, double epsilon) {
    return SdeModel(Family::ThermalQND, ThermalQndParams{p}, lambda, epsilon);
  }
  static SdeModel rabi_qnd(double lambda, double epsilon) {
    return SdeModel(Family::RabiQND, RabiQndParams{}, lambda, epsilon);
  }
  static SdeModel double_well(double nu, double depth = 0.25) {
    return SdeModel(Family::DoubleWell, DoubleWellParams{depth}, nu, 0.0);
  }
  static SdeModel custom(CustomCoefficients coef, double lambda, double epsilon);

  Family family() const noexcept { return family_; }
  double lambda() const noexcept { return lambda_; }
  double epsilon() const noexcept { return epsilon_; }
  const FamilyParams& params() const noexcept { return params_; }

  template <class P>
  const P& params_as() const {
    if (const auto* p = std::get_if<P>(&params_)) return *p;
    throw UnsupportedFamily("model parameters requested for the wrong family");
  }

  /// Same family and parameters with different (lambda, epsilon).
  SdeModel with_lambda_epsilon(double lambda, double epsilon) const {
    SdeModel m = *this;
    m.lambda_ = lambda;
    m.epsilon_ = epsilon;
    m.validate_strengths();
    return m;
  }

  /// True for families living on [0, inf) with a fixed point at 0.
  bool positive_state() const noexcept { return family_ != Family::DoubleWell; }

  double a(double x) const {
    switch (family_) {
    case Family::Linear:
    case Family::Homodyne:
    case Family::RabiQND: return 1.0;
    case Family::PowerLaw: return std::pow(x, pl().q);
    case Family::ThermalQND: return std::get<ThermalQndParams>(params_).p - x;
    case Family::DoubleWell: return 0.0;
    case Family::Custom: return custom_data().coef.a(x);
    }
    return 0.0;
  }

  double b(double x) const {
    switch (family_) {
    case Family::Linear: return std::get<LinearParams>(params_).b * x;
    case Family::PowerLaw: return pl().b * std::pow(x, pl().n);
    case Family::Homodyne: return std::get<HomodyneParams>(params_).b * x;
    case Family::ThermalQND: return 0.0;
    case Family::RabiQND: return std::sin(x) * std::cos(x);
    case Family::DoubleWell: return 0.0; // drift comes from potential_gradient
    case Family::Custom: return custom_data().coef.b(x);
    }
    return 0.0;
  }

  double c(double x) const {
    switch (family_) {
    case Family::Linear: return x;
    case Family::PowerLaw: return std::pow(x, pl().k);
    case Family::Homodyne: return x * x;
    case Family::ThermalQND: return x * (1.0 - x);
    case Family::RabiQND: return std::sin(x);
    case Family::DoubleWell: return 1.0;
    case Family::Custom: return custom_data().coef.c(x);
    }
    return 0.0;
  }

  double c_prime(double x) const {
    switch (family_) {
    case Family::Linear: return 1.0;
    case Family::PowerLaw: return pl().k * std::pow(x, pl().k - 1.0);
    case Family::Homodyne: return 2.0 * x;
    case Family::ThermalQND: return 1.0 - 2.0 * x;
    case Family::RabiQND: return std::cos(x);
    case Family::DoubleWell: return 0.0;
    case Family::Custom: {
      const auto& cd = custom_data().coef;
      if (cd.c_prime) return cd.c_prime(x);
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      return (cd.c(x + h) - cd.c(std::max(0.0, x - h))) / (x + h - std::max(0.0, x - h));
    }
    }
    return 0.0;
  }

  /// b(x)/x, finite at 0 for the built-in families.
  double b_over_x(double x) const {
    switch (family_) {
    case Family::Linear: return std::get<LinearParams>(params_).b;
    case Family::PowerLaw: return pl().b * std::pow(x, pl().n - 1.0);
    case Family::Homodyne: return std::get<HomodyneParams>(params_).b;
    case Family::ThermalQND: return 0.0;
    case Family::RabiQND: return x == 0.0 ? 1.0 : std::sin(x) * std::cos(x) / x;
    default: return b(x) / x;
    }
  }

  /// c(x)/x, finite at 0 for the built-in families with k >= 1.
  double c_over_x(double x) const {
    switch (family_) {
    case Family::Linear: return 1.0;
    case Family::PowerLaw: return std::pow(x, pl().k - 1.0);
    case Family::Homodyne: return x;
    case Family::ThermalQND: return 1.0 - x;
    case Family::RabiQND: return x == 0.0 ? 1.0 : std::sin(x) / x;
    default: return c(x) / x;
    }
  }

  /// Potential gradient U'(x) of the double-well family.
  double potential_gradient(double x) const {
    const double d = params_as<DoubleWellParams>().depth;
    return 4.0 * d * x * (x * x - 1.0);
  }

  const detail::CustomData& custom_data() const {
    return **std::get_if<std::shared_ptr<const detail::CustomData>>(&params_);
  }

private:
  SdeModel(Family f, FamilyParams p, double lambda, double epsilon)
      : family_(f), params_(std::move(p)), lambda_(lambda), epsilon_(epsilon) {
    validate_strengths();
    validate_family();
  }

  const PowerLawParams& pl() const { return *std::get_if<PowerLawParams>(&params_); }

  void validate_strengths() const {
    if (!std::isfinite(lambda_) || lambda_ < 0.0 || (lambda_ == 0.0 && family_ != Family::DoubleWell))
      throw ValidationError("lambda must be a finite positive number");
    if (!std::isfinite(epsilon_) || epsilon_ < 0.0) throw ValidationError("epsilon must be finite and >= 0");
  }

  void validate_family() const;

  Family family_;
  FamilyParams params_;
  double lambda_;
  double epsilon_;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

inline std::shared_ptr<const CustomData> build_custom_tables(CustomCoefficients coef);

} // namespace detail

inline void SdeModel::validate_family() const {
  using detail::require;
  switch (family_) {
  case Family::Linear: {
    const double b = std::get<LinearParams>(params_).b;
    require(std::isfinite(b) && b > -1.0, "linear: b must satisfy b > -1");
    break;
  }
  case Family::PowerLaw: {
    const auto& p = pl();
    require(std::isfinite(p.b) && std::isfinite(p.q) && std::isfinite(p.n) && std::isfinite(p.k),
            "power_law: parameters must be finite");
    require(std::abs(p.n - (2.0 * p.k - 1.0)) <= 1e-12 * std::max(1.0, std::abs(p.n)),
            "power_law: n must equal 2k - 1");
    require(p.n > p.q, "power_law: n must exceed q");
    require(p.q >= 0.0, "power_law: q must be >= 0");
    require(p.b > -1.0, "power_law: b must satisfy b > -1");
    require(p.b + p.n > 0.0, "power_law: b + n must be positive");
    break;
  }
  case Family::Homodyne: {
    const double b = std::get<HomodyneParams>(params_).b;
    require(std::isfinite(b) && b >= 0.0, "homodyne: b must be >= 0 (the scale function diverges at 0 otherwise)");
    break;
  }
  case Family::ThermalQND: {
    const double p = std::get<ThermalQndParams>(params_).p;
    require(p > 0.0 && p <= 1.0, "thermal_qnd: p must lie in (0, 1]");
    break;
  }
  case Family::RabiQND: break;
  case Family::DoubleWell: {
    const double d = std::get<DoubleWellParams>(params_).depth;
    require(std::isfinite(d) && d > 0.0, "double_well: depth must be positive");
    break;
  }
  case Family::Custom: {
    const auto& cd = custom_data().coef;
    require(std::abs(cd.c(0.0)) <= 1e-12, "custom: c(0) must vanish");
    require(std::abs(cd.b(0.0)) <= 1e-12, "custom: b(0) must vanish");
    for (int i = 0; i <= 160; ++i) {
      const double x = std::pow(10.0, -8.0 + 0.1 * i);
      if (!(cd.c(x) > 0.0)) {
        std::ostringstream os;
        os << "custom: c(x) must be positive for x > 0 (fails at x=" << x << ")";
        throw ValidationError(os.str());
      }
    }
    for (int i = 0; i <= 50; ++i) {
      const double x = std::pow(10.0, -8.0 + 0.1 * i);
      require(cd.a(x) >= 0.0, "custom: a(x) must be >= 0 near 0");
    }
    break;
  }
  }
}

inline SdeModel SdeModel::custom(CustomCoefficients coef, double lambda, double epsilon) {
  if (!coef.a || !coef.b || !coef.c) throw ValidationError("custom: a, b and c must all be supplied");
  if (std::abs(coef.c(0.0)) > 1e-12) throw ValidationError("custom: c(0) must vanish");
  return SdeModel(Family::Custom, detail::build_custom_tables(std::move(coef)), lambda, epsilon);
}

namespace detail {

inline constexpr double kTableLnLo = -18.420680743952367; // ln 1e-8
inline constexpr double kTableLnHi = 18.420680743952367;
inline constexpr int kTableNodes = 961;

inline std::shared_ptr<const CustomData> build_custom_tables(CustomCoefficients coef) {
  auto data = std::make_shared<CustomData>();
  std::vector<double> lnx(kTableNodes);
  for (int i = 0; i < kTableNodes; ++i) lnx[i] = kTableLnLo + (kTableLnHi - kTableLnLo) * i / (kTableNodes - 1);
  const numeric::QuadratureOptions opt{1e-13, 1e-11, 15};

  // Integrate in u = ln x so each piece has unit-scale length.
  auto piece = [&](const std::function<double(double)>& g, double u0, double u1) {
    return numeric::integrate([&](double u) { return g(std::exp(u)) * std::exp(u); }, u0, u1, opt);
  };

  std::vector<double> h0(kTableNodes), h1(kTableNodes), lnq(kTableNodes);
  if (coef.h0) {
    for (int i = 0; i < kTableNodes; ++i) h0[i] = coef.h0(std::exp(lnx[i]));
  } else {
    std::function<double(double)> dh0 = [&](double x) {
      const double c = coef.c(x);
      return coef.b(x) / (2.0 * c * c);
    };
    const int mid = (kTableNodes - 1) / 2; // ln x = 0
    h0[mid] = 0.0;
    for (int i = mid + 1; i < kTableNodes; ++i) h0[i] = h0[i - 1] + piece(dh0, lnx[i - 1], lnx[i]);
    for (int i = mid - 1; i >= 0; --i) h0[i] = h0[i + 1] - piece(dh0, lnx[i], lnx[i + 1]);
  }
  if (coef.h1) {
    for (int i = 0; i < kTableNodes; ++i) h1[i] = coef.h1(std::exp(lnx[i]));
  } else {
    auto dh1 = [&](double x) {
      const double c = coef.c(x);
      return coef.a(x) / (2.0 * c * c);
    };
    const double xmax = std::exp(lnx.back());
    try {
      h1.back() = numeric::integrate(dh1, xmax, numeric::kInf, opt);
    } catch (const NumericError&) {
      throw ValidationError("custom: h1 has no finite limit at infinity (a / c^2 is not integrable)");
    }
    for (int i = kTableNodes - 2; i >= 0; --i) h1[i] = h1[i + 1] + piece(dh1, lnx[i], lnx[i + 1]);
  }
  LogTable h0t(lnx, h0);
  if (coef.q) {
    for (int i = 0; i < kTableNodes; ++i) lnq[i] = std::log(coef.q(std::exp(lnx[i])));
  } else {
    // Below the grid, e^{2 h0} is extended as the local power law.
    const double x0 = std::exp(lnx.front());
    const double c0 = coef.c(x0);
    const double s = x0 * coef.b(x0) / (c0 * c0);
    if (!(s > -1.0))
      throw ValidationError("custom: scale function q is not integrable at 0 (condition on h0 fails)");
    double acc = x0 * std::exp(2.0 * h0.front()) / (1.0 + s);
    double lnacc = std::log(acc);
    lnq[0] = lnacc;
    for (int i = 1; i < kTableNodes; ++i) {
      // Increment relative to the value at the right node keeps the scale representable.
      const double ref = 2.0 * h0[i];
      const double inc = numeric::integrate(
          [&](double u) { return std::exp(2.0 * h0t(u) - ref + u); }, lnx[i - 1], lnx[i], opt);
      lnacc = numeric::log_add_exp(lnacc, ref + std::log(inc));
      lnq[i] = lnacc;
    }
  }
  data->coef = std::move(coef);
  data->h0 = std::move(h0t);
  data->h1 = LogTable(lnx, h1);
  data->lnq = LogTable(std::move(lnx), std::move(lnq));
  return data;
}

inline void require_scale_family(const SdeModel& m, const char* op) {
  if (m.family() == Family::ThermalQND || m.family() == Family::RabiQND || m.family() == Family::DoubleWell)
    throw UnsupportedFamily(std::string(op) + ": family '" + std::string(family_name(m.family())) +
                            "' is simulation-only (its scale functions are not global on (0, inf))");
}

/// Interpolated custom tables are only C1, which limits attainable accuracy.
inline numeric::QuadratureOptions model_quadrature(const SdeModel& m) {
  if (m.family() == Family::Custom) return {1e-10, 1e-5, 15};
  return {};
}

inline void require_positive(double x, const char* op) {
  if (!(x > 0.0)) throw DomainError(std::string(op) + ": x must be > 0");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Coefficients

inline double drift(const SdeModel& m, double x) {
  if (m.family() == Family::DoubleWell) return -m.potential_gradient(x);
  detail::require_positive(x, "drift");
  const double l2 = m.lambda() * m.lambda();
  return 0.5 * l2 * (m.epsilon() * m.a(x) - m.b(x));
}

inline double diffusion(const SdeModel& m, double x) {
  if (m.family() == Family::DoubleWell) return m.lambda();
  if (x < 0.0) throw DomainError("diffusion: x must be >= 0");
  return m.lambda() * m.c(x);
}

// ---------------------------------------------------------------------------
// Scale functions

/// h0 with dh0/dx = b/(2c^2). Normalization: (b/2) ln x for the scale-invariant
/// families, h0(inf) = 0 for Homodyne, h0(1) = 0 for Custom.
inline double scale_h0(const SdeModel& m, double x) {
  detail::require_scale_family(m, "scale_h0");
  detail::require_positive(x, "scale_h0");
  switch (m.family()) {
  case Family::Linear: return 0.5 * m.params_as<LinearParams>().b * std::log(x);
  case Family::PowerLaw: return 0.5 * m.params_as<PowerLawParams>().b * std::log(x);
  case Family::Homodyne: return -m.params_as<HomodyneParams>().b / (4.0 * x * x);
  case Family::Custom: return m.custom_data().h0(std::log(x));
  default: return 0.0;
  }
}

/// h1 with dh1/dx = -a/(2c^2) and h1(inf) = 0.
inline double scale_h1(const SdeModel& m, double x) {
  detail::require_scale_family(m, "scale_h1");
  detail::require_positive(x, "scale_h1");
  switch (m.family()) {
  case Family::Linear: return 0.5 / x;
  case Family::PowerLaw: {
    const auto& p = m.params_as<PowerLawParams>();
    return std::pow(x, p.q - p.n) / (2.0 * (p.n - p.q));
  }
  case Family::Homodyne: return 1.0 / (6.0 * x * x * x);
  case Family::Custom: return m.custom_data().h1(std::log(x));
  default: return 0.0;
  }
}

/// q'(x) = e^{2 h0(x)}.
inline double scale_q_prime(const SdeModel& m, double x) {
  if (x == 0.0 && m.family() == Family::Homodyne && m.params_as<HomodyneParams>().b > 0.0) return 0.0;
  return std::exp(2.0 * scale_h0(m, x));
}

inline double scale_q(const SdeModel& m, double x) {
  detail::require_scale_family(m, "scale_q");
  if (x < 0.0) throw DomainError("scale_q: x must be >= 0");
  if (x == 0.0) return 0.0;
  switch (m.family()) {
  case Family::Linear: {
    const double b = m.params_as<LinearParams>().b;
    return std::pow(x, b + 1.0) / (b + 1.0);
  }
  case Family::PowerLaw: {
    const double b = m.params_as<PowerLawParams>().b;
    return std::pow(x, b + 1.0) / (b + 1.0);
  }
  case Family::Homodyne: {
    const double b = m.params_as<HomodyneParams>().b;
    if (b == 0.0) return x;
    auto f = [b](double u) { return u > 0.0 ? std::exp(-b / (2.0 * u * u)) : 0.0; };
    return numeric::integrate(f, 0.0, x);
  }
  case Family::Custom: {
    const auto& cd = m.custom_data();
    if (cd.coef.q) return cd.coef.q(x);
    return std::exp(cd.lnq(std::log(x)));
  }
  default: return 0.0;
  }
}

inline double scale_q_inverse(const SdeModel& m, double v) {
  detail::require_scale_family(m, "scale_q_inverse");
  if (v < 0.0) throw DomainError("scale_q_inverse: v must be >= 0");
  if (v == 0.0) return 0.0;
  switch (m.family()) {
  case Family::Linear: {
    const double b = m.params_as<LinearParams>().b;
    return std::pow((b + 1.0) * v, 1.0 / (b + 1.0));
  }
  case Family::PowerLaw: {
    const double b = m.params_as<PowerLawParams>().b;
    return std::pow((b + 1.0) * v, 1.0 / (b + 1.0));
  }
  case Family::Custom:
    if (!m.custom_data().coef.q) {
      // Invert the tabulated ln q directly.
      const auto& t = m.custom_data().lnq;
      const double target = std::log(v);
      double lo = t.lo(), hi = t.hi();
      while (t(lo) > target) lo -= 4.0;
      while (t(hi) < target) hi += 4.0;
      return std::exp(numeric::find_root([&](double u) { return t(u) - target; }, lo, hi, 50));
    }
    [[fallthrough]];
  default: {
    double hi = 1.0;
    while (scale_q(m, hi) < v) hi *= 2.0;
    double lo = hi;
    while (lo > 1e-300 && scale_q(m, lo) > v) lo *= 0.5;
    return numeric::find_root([&](double x) { return scale_q(m, x) - v; }, lo, hi, 50);
  }
  }
}

// ---------------------------------------------------------------------------
// Invariant measure

/// ln of the unnormalized invariant weight c^{-2} e^{-2(h0 + eps h1)}.
inline double log_invariant_weight(const SdeModel& m, double x, double eps) {
  if (!(x > 0.0)) return -numeric::kInf;
  switch (m.family()) {
  case Family::Linear: {
    const double b = m.params_as<LinearParams>().b;
    return -(b + 2.0) * std::log(x) - eps / x;
  }
  case Family::PowerLaw: {
    const auto& p = m.params_as<PowerLawParams>();
    return -(p.b + p.n + 1.0) * std::log(x) - eps * std::pow(x, p.q - p.n) / (p.n - p.q);
  }
  case Family::Homodyne: {
    const double b = m.params_as<HomodyneParams>().b;
    // In 1/x so that x -> 0 gives -inf rather than inf - inf.
    const double ix = 1.0 / x;
    return 4.0 * std::log(ix) + ix * ix * (0.5 * b - eps * ix / 3.0);
  }
  case Family::Custom:
    return -2.0 * std::log(m.c(x)) - 2.0 * scale_h0(m, x) - 2.0 * eps * scale_h1(m, x);
  default: detail::require_scale_family(m, "log_invariant_weight"); return 0.0;
  }
}

/// Normalization factor Z of the power-law family at eps = 1:
/// (n-q)^{(b+q)/(n-q)} Gamma((b+n)/(n-q)).
inline double power_law_normalizer(const PowerLawParams& p) {
  const double r = p.n - p.q;
  return std::pow(r, (p.b + p.q) / r) * std::tgamma((p.b + p.n) / r);
}

inline double log_power_law_normalizer(const PowerLawParams& p) {
  const double r = p.n - p.q;
  return (p.b + p.q) / r * std::log(r) + std::lgamma((p.b + p.n) / r);
}

/// ln Z_eps by quadrature, whatever the family. The substitution x = eps s
/// puts the inner edge of the weight at s = O(1).
inline double log_partition_function_quadrature(const SdeModel& m, double eps) {
  detail::require_scale_family(m, "partition_function");
  if (!(eps > 0.0)) throw DomainError("partition_function: epsilon must be > 0");
  const double le = std::log(eps);
  auto g = [&](double s) { return log_invariant_weight(m, eps * s, eps) + le; };
  try {
    return numeric::log_integrate(g, 0.0, numeric::kInf, detail::model_quadrature(m));
  } catch (const NumericError& e) {
    throw ValidationError(std::string("partition function does not converge (invariant measure not finite): ") +
                          e.what());
  }
}

/// ln Z_eps with Z_eps = int_0^inf c^{-2} e^{-2(h0 + eps h1)} dx.
inline double log_partition_function(const SdeModel& m, double eps) {
  detail::require_scale_family(m, "partition_function");
  if (!(eps > 0.0)) throw DomainError("partition_function: epsilon must be > 0");
  switch (m.family()) {
  case Family::Linear: {
    const double b = m.params_as<LinearParams>().b;
    return std::lgamma(b + 1.0) - (b + 1.0) * std::log(eps);
  }
  case Family::PowerLaw: {
    const auto& p = m.params_as<PowerLawParams>();
    return -(p.b + p.n) / (p.n - p.q) * std::log(eps) + log_power_law_normalizer(p);
  }
  case Family::Homodyne: {
    // x = eps / s: Z = eps^{-3} int s^2 exp((b s^2/2 - s^3/3)/eps^2) ds.
    const double b = m.params_as<HomodyneParams>().b;
    const double e2 = eps * eps;
    auto g = [&](double s) { return 2.0 * std::log(s) + (0.5 * b * s * s - s * s * s / 3.0) / e2; };
    return -3.0 * std::log(eps) + numeric::log_integrate(g, 0.0, numeric::kInf);
  }
  default: return log_partition_function_quadrature(m, eps);
  }
}

/// Saddle-point asymptotic of the homodyne ln Z_eps as eps -> 0:
/// ln(sqrt(2 pi b^3) eps^-2 e^{b^3 / (6 eps^2)}).
inline double homodyne_log_partition_saddle(double b, double eps) {
  if (!(b > 0.0) || !(eps > 0.0)) throw DomainError("homodyne_log_partition_saddle: need b > 0 and eps > 0");
  return 0.5 * std::log(2.0 * std::numbers::pi * b * b * b) - 2.0 * std::log(eps) + b * b * b / (6.0 * eps * eps);
}

inline double partition_function(const SdeModel& m, double eps) {
  const double lz = log_partition_function(m, eps);
  if (lz > 709.0) throw NumericError("partition_function overflows double precision; use log_partition_function");
  return std::exp(lz);
}

inline double invariant_density(const SdeModel& m, double x) {
  detail::require_scale_family(m, "invariant_density");
  detail::require_positive(x, "invariant_density");
  if (m.epsilon() == 0.0) throw DomainError("invariant measure degenerates to a point mass at 0 when epsilon = 0");
  return std::exp(log_invariant_weight(m, x, m.epsilon()) - log_partition_function(m, m.epsilon()));
}

/// ln P_inv(eps, [0, y]). Deep in the lower tail, where the weight rises
/// too steeply for quadrature, the endpoint Laplace approximation
/// g(y) - ln g'(y) of the log-weight g is used.
inline double log_invariant_mass_below(const SdeModel& m, double eps, double y) {
  detail::require_scale_family(m, "invariant_mass_below");
  if (y <= 0.0) return -numeric::kInf;
  const double lz = log_partition_function(m, eps);
  switch (m.family()) {
  case Family::Linear: {
    const double b = m.params_as<LinearParams>().b;
    return std::log(boost::math::gamma_q(b + 1.0, eps / y));
  }
  default: {
    const double le = std::log(eps);
    auto g = [&](double s) { return log_invariant_weight(m, eps * s, eps) + le; };
    const double s = y / eps;
    try {
      return std::min(0.0, numeric::log_integrate(g, 0.0, s, detail::model_quadrature(m)) - lz);
    } catch (const NumericError&) {
      if (g(s) == -numeric::kInf) return -numeric::kInf;
      const double h = 1e-6 * s;
      const double slope = (g(s + h) - g(s - h)) / (2.0 * h);
      if (!(slope > 0.0)) throw;
      return std::min(0.0, g(s) - std::log(slope) - lz);
    }
  }
  }
}

/// P_inv(eps, [0, y]).
inline double invariant_mass_below(const SdeModel& m, double eps, double y) {
  return std::exp(log_invariant_mass_below(m, eps, y));
}

// ---------------------------------------------------------------------------
// Ergodic constants

/// <Y^{b+q}> under the eps = 1 invariant law: 1/Gamma(b+1) or 1/Z.
inline double ergodic_moment(const SdeModel& m) {
  switch (m.family()) {
  case Family::Linear: return 1.0 / std::tgamma(m.params_as<LinearParams>().b + 1.0);
  case Family::PowerLaw: return 1.0 / power_law_normalizer(m.params_as<PowerLawParams>());
  default:
    throw UnsupportedFamily("ergodic_moment is defined for the scale-invariant families only; "
                            "use averaging_identity_check for general models");
  }
}

/// Ratio of <e^{2h0} a>_inv, computed by quadrature, to 1/(eps Z_eps).
/// Equal to 1 exactly; deviations measure quadrature error.
inline double averaging_identity_check(const SdeModel& m, double eps) {
  detail::require_scale_family(m, "averaging_identity_check");
  if (!(eps > 0.0)) throw DomainError("averaging_identity_check: epsilon must be > 0");
  const double le = std::log(eps);
  auto g = [&](double s) {
    const double x = eps * s;
    const double a = m.a(x);
    if (!(a > 0.0)) return -numeric::kInf;
    return 2.0 * scale_h0(m, x) + std::log(a) + log_invariant_weight(m, x, eps) + le;
  };
  const double lnum = numeric::log_integrate(g, 0.0, numeric::kInf, detail::model_quadrature(m));
  const double lz = log_partition_function_quadrature(m, eps);
  const double log_mean = lnum - lz;
  const double log_target = -le - lz;
  return std::exp(log_mean - log_target);
}

struct TransformedExponents {
  double alpha = 0.0;
  double delta = 0.0;
};

/// Exponents of dQ = (l^2/2) e Q^alpha dt + l Q^delta dB for Q = x^{b+1}/(b+1).
inline TransformedExponents transformed_exponents(const PowerLawParams& p) {
  return {(p.b + p.q) / (p.b + 1.0), (p.b + p.k) / (p.b + 1.0)};
}

/// Dimension of the Bessel process X^{1-k}/(k-1) at eps = 0.
inline double bessel_dimension(const PowerLawParams& p) {
  if (p.k == 1.0) throw DomainError("bessel_dimension: undefined for k = 1");
  return 2.0 + (p.b + 1.0) / (p.k - 1.0);
}

/// sup over q(x) > delta of a e^{-2h0}/(2c^2): the slope bound of the
/// bounded-variation part once Q stays above delta.
inline double reflection_constant(const SdeModel& m, double delta) {
  const double x0 = scale_q_inverse(m, delta);
  double best = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double x = x0 * std::pow(10.0, 0.02 * i);
    const double c = m.c(x);
    best = std::max(best, m.a(x) * std::exp(-2.0 * scale_h0(m, x)) / (2.0 * c * c));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Numerical checks of the structural conditions on general coefficients

struct ConditionCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline std::vector<ConditionCheck> check_conditions(const SdeModel& m) {
  detail::require_scale_family(m, "check_conditions");
  std::vector<ConditionCheck> out;
  auto add = [&](std::string name, bool ok, double value) {
    std::ostringstream os;
    os << value;
    out.push_back({std::move(name), ok, os.str()});
  };
  const double xlo = 1e-8, xhi = 1e8;
  auto slope_h0 = [&](double x) {
    const double c = m.c(x);
    return x * m.b(x) / (c * c);
  };
  auto slope_h1 = [&](double x) {
    const double c = m.c(x);
    return x * m.a(x) / (2.0 * c * c);
  };
  // iii: q integrable at 0 and unbounded at infinity.
  add("iii.q_finite_at_0", slope_h0(xlo) > -1.0, slope_h0(xlo));
  add("iii.q_unbounded", slope_h0(xhi) >= -1.0, slope_h0(xhi));
  bool monotone = true;
  double prev = 0.0;
  for (int i = 0; i <= 160; ++i) {
    const double v = scale_q(m, std::pow(10.0, -8.0 + 0.1 * i));
    if (!(v > prev) && i > 0) monotone = false;
    prev = v;
  }
  add("iii.q_increasing", monotone, prev);
  // vi: h1 blows up at 0 and has a finite limit at infinity.
  add("vi.h1_divergent_at_0", slope_h1(xlo) >= 0.5, slope_h1(xlo));
  add("vi.h1_limit_at_inf", slope_h1(xhi) < 1e-2, slope_h1(xhi));
  // vii: finite invariant mass.
  bool finite = true;
  double lz = 0.0;
  try {
    lz = log_partition_function_quadrature(m, 1.0);
    finite = std::isfinite(lz);
  } catch (const Error&) {
    finite = false;
  }
  add("vii.finite_invariant_mass", finite, lz);
  // viii: invariant mass concentrates at 0 as eps -> 0.
  if (finite) {
    double p1 = 0.0, p3 = 0.0;
    try {
      p1 = invariant_mass_below(m, 1e-1, 1.0);
      p3 = invariant_mass_below(m, 1e-3, 1.0);
    } catch (const Error&) {
    }
    add("viii.concentration_at_0", p3 >= p1 && p3 > 0.99, p3);
  } else {
    add("viii.concentration_at_0", false, 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaling families

enum class ScalingRule { PowerLawJ, PartitionJhat };

/// A model template together with the combination held fixed as lambda grows:
/// lambda^2 eps^{(b+n)/(n-q)} = J, or lambda^2 / (2 Z_eps) = Jhat.
class ScalingFamily {
public:
  ScalingFamily(SdeModel base, ScalingRule rule, double invariant)
      : base_(std::move(base)), rule_(rule), value_(invariant) {
    detail::require_scale_family(base_, "ScalingFamily");
    if (!(invariant > 0.0) || !std::isfinite(invariant))
      throw ValidationError("scaling family: the invariant combination must be positive");
    if (rule == ScalingRule::PowerLawJ && base_.family() != Family::Linear && base_.family() != Family::PowerLaw)
      throw ValidationError("scaling family: the J rule needs a scale-invariant family (linear or power_law)");
  }

  static ScalingFamily linear_j(double b, double j) {
    return {SdeModel::linear(b, 1.0, 0.0), ScalingRule::PowerLawJ, j};
  }

  const SdeModel& base() const noexcept { return base_; }
  ScalingRule rule() const noexcept { return rule_; }
  double invariant() const noexcept { return value_; }

  /// Exponent (b+n)/(n-q) of the J rule.
  double j_exponent() const {
    if (base_.family() == Family::Linear) return base_.params_as<LinearParams>().b + 1.0;
    const auto& p = base_.params_as<PowerLawParams>();
    return (p.b + p.n) / (p.n - p.q);
  }

  /// Z at eps = 1 for the scale-invariant families (Gamma(b+1) for Linear).
  double scale_normalizer() const {
    if (base_.family() == Family::Linear) return std::tgamma(base_.params_as<LinearParams>().b + 1.0);
    if (base_.family() == Family::PowerLaw) return power_law_normalizer(base_.params_as<PowerLawParams>());
    throw UnsupportedFamily("scale_normalizer: family is not scale invariant");
  }

  /// The local-time rate Jhat, i.e. L_tau = Jhat t in the limit.
  double j_hat() const {
    if (rule_ == ScalingRule::PartitionJhat) return value_;
    return value_ / (2.0 * scale_normalizer());
  }

  /// J = lambda^2 eps^{(b+n)/(n-q)} for the scale-invariant families.
  double j() const {
    if (rule_ == ScalingRule::PowerLawJ) return value_;
    return 2.0 * scale_normalizer() * value_;
  }

  double epsilon_for_lambda(double lambda) const {
    if (!(lambda > 0.0)) throw DomainError("epsilon_for_lambda: lambda must be > 0");
    if (rule_ == ScalingRule::PowerLawJ) return std::pow(value_ / (lambda * lambda), 1.0 / j_exponent());
    // lambda^2/(2 Z_eps) = Jhat with Z_eps decreasing in eps.
    const double target = std::log(lambda * lambda / (2.0 * value_));
    auto f = [&](double le) { return log_partition_function(base_, std::exp(le)) - target; };
    double lo = std::log(1e-3), hi = std::log(1e3);
    int guard = 0;
    while (f(lo) < 0.0 && guard++ < 40) lo -= 1.0;
    guard = 0;
    while (f(hi) > 0.0 && guard++ < 40) hi += 1.0;
    if (f(lo) < 0.0 || f(hi) > 0.0)
      throw ValidationError("epsilon_for_lambda: no epsilon solves lambda^2/(2 Z_eps) = Jhat in the search bracket");
    return std::exp(numeric::find_root(f, lo, hi, 52));
  }

  SdeModel model_at(double lambda) const { return base_.with_lambda_epsilon(lambda, epsilon_for_lambda(lambda)); }

  double scale_q(double x) const { return strongnoise::scale_q(base_, x); }
  double scale_q_inverse(double v) const { return strongnoise::scale_q_inverse(base_, v); }

private:
  SdeModel base_;
  ScalingRule rule_;
  double value_;
};

} // namespace strongnoise
