#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "strongnoise/acceptance.hpp"
#include "strongnoise/errors.hpp"
#include "strongnoise/model_config.hpp"
#include "strongnoise/models.hpp"
#include "strongnoise/passage.hpp"
#include "strongnoise/path_io.hpp"
#include "strongnoise/rng.hpp"
#include "strongnoise/simulate.hpp"
#include "strongnoise/skorokhod.hpp"
#include "strongnoise/spikes.hpp"
#include "strongnoise/weaknoise.hpp"

namespace strongnoise::experiment {

namespace fs = std::filesystem;

/// Process exit codes of the command-line front end.
enum ExitCode : int { Success = 0, Invalid = 1, NumericFailure = 2, TestFailure = 3, Inconclusive = 4 };

struct SpikeSettings {
  std::vector<double> levels{0.5, 1.0, 2.0};
  double alpha = 0.01;
  std::size_t max_events = 1000;
  std::size_t min_events = 50;
};

struct PassageSettings {
  double y = 1.0;
  double z = 2.0;
  std::vector<double> sigma{0.0, 0.5, 1.0, 2.0, 4.0};
  std::size_t paths = 2000;
};

struct SkorokhodSettings {
  double alpha = 2.0;
  std::vector<double> eps{1e-2, 1e-3, 1e-4};
  double horizon = 1.0;
  std::size_t steps = 10000;
};

struct WeakNoiseSettings {
  std::vector<double> nu{0.35};
  double horizon = 2.0e5;
  double dt = 0.005;
  double depth = 0.25;
  double thin = 5.0;
};

/// A run description loaded from a JSON file. Either `scaling` (a family
/// followed along `lambdas`) or `model` (a single fixed model) describes the
/// dynamics; the optional sections configure the analyses.
struct ExperimentConfig {
  std::optional<ScalingFamily> scaling;
  std::optional<SdeModel> model;
  std::vector<double> lambdas;
  std::size_t paths = 1;
  double horizon = 10.0;
  /// dt = dt_factor * the model's largest admissible step.
  double dt_factor = 1.0;
  /// Absolute step; overrides dt_factor.
  std::optional<double> dt;
  std::optional<double> x0;
  std::uint64_t seed = 1;
  bool write_binary = true;
  bool write_csv = true;
  std::optional<SpikeSettings> spikes;
  std::optional<PassageSettings> passage;
  std::optional<SkorokhodSettings> skorokhod;
  std::optional<WeakNoiseSettings> weaknoise;
  Json source;

  /// The models to run: one per lambda of the family, or the fixed model.
  std::vector<SdeModel> models() const {
    if (model) return {*model};
    if (!scaling) throw ValidationError("config: no 'scaling' or 'model' section");
    std::vector<SdeModel> out;
    for (double l : lambdas) out.push_back(scaling->model_at(l));
    return out;
  }

  double step(const SdeModel& m) const { return dt ? *dt : dt_factor * max_time_step(m); }

  double start_value(const SdeModel& m) const {
    if (x0) return *x0;
    if (m.epsilon() > 0.0) return m.epsilon();
    throw ValidationError("config: 'x0' is required when epsilon = 0");
  }
};

namespace detail {

using strongnoise::detail::number_at;
using strongnoise::detail::number_or;
using strongnoise::detail::reject_unknown_keys;

inline std::vector<double> numbers(const Json& j, const char* key, std::vector<double> fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_array()) throw ValidationError(where + ": key '" + std::string(key) + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ValidationError(where + ": key '" + std::string(key) + "' must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::size_t count_or(const Json& j, const char* key, std::size_t fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ValidationError(where + ": key '" + std::string(key) + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

} // namespace detail

/// Strict parse of an experiment file; unknown keys are validation errors
/// naming the offending field.
inline ExperimentConfig parse_config(const Json& j) {
  using namespace detail;
  reject_unknown_keys(j, {"scaling", "model", "lambdas", "paths", "horizon", "dt_factor", "dt", "x0", "seed", "formats",
                          "spikes", "passage", "skorokhod", "weaknoise"},
                      "config");
  ExperimentConfig c;
  c.source = j;
  if (j.contains("scaling") && j.contains("model")) throw ValidationError("config: give either 'scaling' or 'model'");
  if (j.contains("scaling")) {
    c.scaling = scaling_from_json(j.at("scaling"));
    c.lambdas = numbers(j, "lambdas", {}, "config");
    if (c.lambdas.empty()) throw ValidationError("config: 'lambdas' must list at least one value");
    for (double l : c.lambdas)
      if (!(l > 0.0)) throw ValidationError("config: 'lambdas' must be positive");
  } else if (j.contains("lambdas")) {
    throw ValidationError("config: 'lambdas' needs a 'scaling' section");
  }
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  c.paths = count_or(j, "paths", 1, "config");
  c.horizon = number_or(j, "horizon", 10.0, "config");
  if (!(c.horizon > 0.0)) throw ValidationError("config: 'horizon' must be > 0");
  c.dt_factor = number_or(j, "dt_factor", 1.0, "config");
  if (!(c.dt_factor > 0.0) || c.dt_factor > 1.0) throw ValidationError("config: 'dt_factor' must lie in (0, 1]");
  if (j.contains("dt")) {
    if (j.contains("dt_factor")) throw ValidationError("config: give either 'dt' or 'dt_factor'");
    c.dt = number_at(j, "dt", "config");
    if (!(*c.dt > 0.0)) throw ValidationError("config: 'dt' must be > 0");
  }
  if (j.contains("x0")) c.x0 = number_at(j, "x0", "config");
  if (j.contains("seed")) {
    const Json& v = j.at("seed");
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) throw ValidationError("config: 'seed' must be a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("formats")) {
    if (!j.at("formats").is_array()) throw ValidationError("config: 'formats' must be an array");
    c.write_binary = c.write_csv = false;
    for (const auto& f : j.at("formats")) {
      const std::string s = f.is_string() ? f.get<std::string>() : "";
      if (s == "binary") c.write_binary = true;
      else if (s == "csv") c.write_csv = true;
      else throw ValidationError("config: 'formats' entries must be \"binary\" or \"csv\"");
    }
  }
  if (j.contains("spikes")) {
    const Json& s = j.at("spikes");
    reject_unknown_keys(s, {"levels", "alpha", "max_events", "min_events"}, "spikes");
    SpikeSettings ss;
    ss.levels = numbers(s, "levels", ss.levels, "spikes");
    ss.alpha = number_or(s, "alpha", ss.alpha, "spikes");
    ss.max_events = count_or(s, "max_events", ss.max_events, "spikes");
    ss.min_events = count_or(s, "min_events", ss.min_events, "spikes");
    if (ss.levels.empty()) throw ValidationError("spikes: 'levels' must not be empty");
    for (double z : ss.levels)
      if (!(z > 0.0)) throw ValidationError("spikes: 'levels' must be positive");
    c.spikes = ss;
  }
  if (j.contains("passage")) {
    const Json& s = j.at("passage");
    reject_unknown_keys(s, {"y", "z", "sigma", "paths"}, "passage");
    PassageSettings ps;
    ps.y = number_or(s, "y", ps.y, "passage");
    ps.z = number_or(s, "z", ps.z, "passage");
    ps.sigma = numbers(s, "sigma", ps.sigma, "passage");
    ps.paths = count_or(s, "paths", ps.paths, "passage");
    if (!(ps.y > 0.0) || !(ps.z > ps.y)) throw ValidationError("passage: need 0 < y < z");
    for (double v : ps.sigma)
      if (!(v >= 0.0)) throw ValidationError("passage: 'sigma' values must be >= 0");
    c.passage = ps;
  }
  if (j.contains("skorokhod")) {
    const Json& s = j.at("skorokhod");
    reject_unknown_keys(s, {"alpha", "eps", "horizon", "steps"}, "skorokhod");
    SkorokhodSettings ks;
    ks.alpha = number_or(s, "alpha", ks.alpha, "skorokhod");
    ks.eps = numbers(s, "eps", ks.eps, "skorokhod");
    ks.horizon = number_or(s, "horizon", ks.horizon, "skorokhod");
    ks.steps = count_or(s, "steps", ks.steps, "skorokhod");
    if (!(ks.alpha > 1.0)) throw ValidationError("skorokhod: 'alpha' must be > 1");
    if (!(ks.horizon > 0.0) || ks.steps == 0) throw ValidationError("skorokhod: need horizon > 0 and steps > 0");
    for (double e : ks.eps)
      if (!(e > 0.0)) throw ValidationError("skorokhod: 'eps' values must be > 0");
    c.skorokhod = ks;
  }
  if (j.contains("weaknoise")) {
    const Json& s = j.at("weaknoise");
    reject_unknown_keys(s, {"nu", "horizon", "dt", "depth", "thin"}, "weaknoise");
    WeakNoiseSettings ws;
    ws.nu = numbers(s, "nu", ws.nu, "weaknoise");
    ws.horizon = number_or(s, "horizon", ws.horizon, "weaknoise");
    ws.dt = number_or(s, "dt", ws.dt, "weaknoise");
    ws.depth = number_or(s, "depth", ws.depth, "weaknoise");
    ws.thin = number_or(s, "thin", ws.thin, "weaknoise");
    for (double v : ws.nu)
      if (!(v >= 0.25)) throw ValidationError("weaknoise: 'nu' values must be >= 0.25");
    if (!(ws.horizon > 0.0) || !(ws.dt > 0.0) || !(ws.depth > 0.0) || !(ws.thin > 0.0))
      throw ValidationError("weaknoise: horizon, dt, depth and thin must be > 0");
    c.weaknoise = ws;
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw ValidationError("cannot open config '" + file + "'");
  Json j;
  try {
    j = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ValidationError("config '" + file + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Manifest

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
inline std::string fnv1a_file(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error("cannot read '" + file.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct RunContext {
  ExperimentConfig config;
  fs::path out;
  unsigned workers = 1;
  std::vector<std::string> files;
  std::vector<std::string> messages;

  fs::path file(const std::string& name) {
    files.push_back(name);
    return out / name;
  }
};

/// Writes manifest.json (command, config echo, seed, file hashes). When a
/// manifest for the same command, config and seed already exists, the new
/// hashes must equal the recorded ones; a mismatch is a NumericError.
inline Json write_manifest(RunContext& ctx, const std::string& command) {
  Json files = Json::array();
  for (const auto& f : ctx.files) files.push_back({{"name", f}, {"fnv1a64", fnv1a_file(ctx.out / f)}});
  Json m{{"command", command}, {"config", ctx.config.source}, {"seed", ctx.config.seed}, {"files", files}};
  const fs::path mf = ctx.out / ("manifest-" + command + ".json");
  if (fs::exists(mf)) {
    std::ifstream is(mf);
    Json old;
    try {
      old = Json::parse(is);
    } catch (const Json::parse_error&) {
      old = Json();
    }
    if (old.is_object() && old.value("command", "") == command && old.value("config", Json()) == m["config"] &&
        old.value("seed", Json()) == m["seed"]) {
      if (old.value("files", Json()) != m["files"])
        throw NumericError("rerun of '" + command + "' does not reproduce the hashes recorded in " + mf.string());
      ctx.messages.push_back("manifest: reproduced " + std::to_string(files.size()) + " file hashes");
    }
  }
  std::ofstream os(mf);
  if (!os) throw Error("cannot write '" + mf.string() + "'");
  os << m.dump(2) << '\n';
  return m;
}

namespace detail {

inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

inline std::string tag(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline BrownianStream model_stream(const ExperimentConfig& c, std::size_t model_index) {
  return BrownianStream(c.seed + 7919ULL * model_index, 0);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each writes into ctx.out, records its files and returns an exit
// code; exceptions map to exit codes in the front end.

/// Per-path binary and CSV files plus the manifest.
inline int cmd_simulate(RunContext& ctx) {
  const auto& c = ctx.config;
  const auto models = c.models();
  for (std::size_t l = 0; l < models.size(); ++l) {
    const SdeModel& m = models[l];
    const double dt = c.step(m);
    const double x0 = c.start_value(m);
    const std::string stem = "path_l" + std::to_string(l) + "_";
    std::vector<std::string> names(c.paths);
    parallel_for(c.paths, ctx.workers, [&](std::size_t i) {
      const Path p = simulate_path(m, x0, c.horizon, dt, detail::model_stream(c, l).with_path(static_cast<std::uint32_t>(i)));
      std::ostringstream id;
      id << stem << std::setw(5) << std::setfill('0') << i;
      names[i] = id.str();
      if (c.write_binary) write_path_binary(p, (ctx.out / (names[i] + ".bin")).string());
      if (c.write_csv) write_path_csv(p, (ctx.out / (names[i] + ".csv")).string());
    });
    for (const auto& n : names) {
      if (c.write_binary) ctx.files.push_back(n + ".bin");
      if (c.write_csv) ctx.files.push_back(n + ".csv");
    }
  }
  write_manifest(ctx, "simulate");
  ctx.messages.push_back("simulate: wrote " + std::to_string(ctx.files.size()) + " files");
  return Success;
}

/// Exponent b above which the spike approximation is known to degrade at
/// reachable lambda.
inline constexpr double kLargeExponent = 3.0;

/// Spike tips per lambda and a key: value Poisson report.
inline int cmd_spikes(RunContext& ctx) {
  const auto& c = ctx.config;
  if (!c.scaling) throw ValidationError("spikes: the config needs a 'scaling' section");
  const SpikeSettings ss = c.spikes.value_or(SpikeSettings{});
  const auto& fam = *c.scaling;
  std::ofstream rep(ctx.file("spikes-report.txt"));
  int code = Success;
  const double z_min = *std::min_element(ss.levels.begin(), ss.levels.end());
  double b = 0.0;
  if (fam.base().family() == Family::Linear) b = fam.base().params_as<LinearParams>().b;
  if (fam.base().family() == Family::PowerLaw) b = fam.base().params_as<PowerLawParams>().b;
  if (b > kLargeExponent) rep << "caveat: exponent b = " << b << " is large; spike statistics converge slowly in lambda and the Poisson approximation degrades\n";
  const auto models = c.models();
  for (std::size_t l = 0; l < models.size(); ++l) {
    const SdeModel& m = models[l];
    const auto [dm, dp] = default_thresholds(m.epsilon(), z_min);
    const double dt = c.step(m);
    const auto pps = simulate_spike_processes(m, 0.5 * dm, c.paths, c.horizon, dt, dm, dp, detail::model_stream(c, l), ctx.workers);
    std::ofstream tips(ctx.file("tips_l" + std::to_string(l) + ".csv"));
    tips << "path,time,max,up_time\n";
    std::vector<double> maxima;
    for (std::size_t i = 0; i < pps.size(); ++i)
      for (const auto& e : pps[i].events) {
        tips << i << ',' << detail::num(e.time) << ',' << detail::num(e.max) << ',' << detail::num(e.up_time) << '\n';
        if (e.max >= z_min) maxima.push_back(e.max);
      }
    rep << "lambda: " << m.lambda() << "\nepsilon: " << detail::num(m.epsilon()) << "\ndelta_minus: " << dm
        << "\ndelta_plus: " << dp << "\nevents: " << maxima.size() << "\n";
    try {
      const auto pr = test_poisson(pps, fam, ss.levels, ss.alpha, ss.max_events, ss.min_events);
      for (const auto& lv : pr.levels)
        rep << "level " << lv.level << ": rate " << lv.estimated_rate << " predicted " << lv.predicted_rate
            << " events " << lv.events << " interarrival_p " << lv.interarrival.p_value << " tip_p "
            << lv.tip_tail.p_value << " lag1 " << lv.lag1 << " " << (lv.passed ? "pass" : "fail") << "\n";
      if (maxima.size() >= 10) rep << "tail_exponent: " << tail_rank_regression(maxima, z_min).slope << "\n";
      rep << "poisson: " << (pr.passed ? "pass" : "fail") << "\n";
      if (!pr.passed && code == Success) code = TestFailure;
    } catch (const InsufficientData& e) {
      rep << "poisson: inconclusive (" << e.what() << ")\n";
      if (code == Success) code = Inconclusive;
    }
  }
  rep.close();
  write_manifest(ctx, "spikes");
  return code;
}

/// Table of E[e^{-sigma T_{y->z}}]: Monte Carlo, Riccati ODE and limit.
inline int cmd_passage(RunContext& ctx) {
  const auto& c = ctx.config;
  if (!c.scaling) throw ValidationError("passage: the config needs a 'scaling' section");
  const PassageSettings ps = c.passage.value_or(PassageSettings{});
  const auto models = c.models();
  std::ofstream os(ctx.file("passage.csv"));
  os << "lambda,sigma,empirical,ode,limit,abs_empirical_minus_limit\n";
  for (std::size_t l = 0; l < models.size(); ++l) {
    const SdeModel& m = models[l];
    PassageSampling sampling;
    sampling.dt = c.step(m);
    sampling.workers = ctx.workers;
    const auto s = sample_passages(m, ps.y, ps.z, ps.paths, detail::model_stream(c, l), sampling);
    if (s.censored > 0) ctx.messages.push_back("passage: " + std::to_string(s.censored) + " censored passages dropped");
    for (double sigma : ps.sigma) {
      const double emp = s.durations.size() >= 2 ? empirical_laplace(s.durations, sigma).value : std::nan("");
      const double ode = solve_phi_ode(m, sigma, CrossingKind::Up, {ps.y, ps.z}).transform(0, 1);
      const double lim = limit_laplace_T(*c.scaling, ps.y, ps.z, sigma);
      os << m.lambda() << ',' << sigma << ',' << detail::num(emp) << ',' << detail::num(ode) << ',' << detail::num(lim)
         << ',' << detail::num(std::abs(emp - lim)) << '\n';
    }
  }
  os.close();
  write_manifest(ctx, "passage");
  return Success;
}

/// Convergence of the eps-equation to the Skorokhod term on one driver.
inline int cmd_skorokhod_demo(RunContext& ctx) {
  const auto& c = ctx.config;
  const SkorokhodSettings ks = c.skorokhod.value_or(SkorokhodSettings{});
  const auto f = sample_brownian(ks.horizon, ks.horizon / static_cast<double>(ks.steps), 0.0, BrownianStream(c.seed, 0));
  std::ofstream os(ctx.file("skorokhod.csv"));
  os << "eps,alpha,sup_error,bound,ratio\n";
  bool ok = true;
  for (double eps : ks.eps) {
    const auto p = solve_eps_equation(f, eps, ks.alpha);
    const double bound = eps_equation_bound(eps, ks.alpha, ks.horizon);
    const auto r = bound_check(f, p, 0.0, bound);
    ok = ok && r.ok;
    os << eps << ',' << ks.alpha << ',' << detail::num(r.max_gap) << ',' << detail::num(bound) << ','
       << detail::num(r.max_gap / bound) << '\n';
  }
  os.close();
  write_manifest(ctx, "skorokhod-demo");
  return ok ? Success : TestFailure;
}

/// Inter-jump times against the Kramers law and occupation histograms per
/// noise level; two or more levels add the exponential-scaling slope.
inline int cmd_weaknoise(RunContext& ctx) {
  const auto& c = ctx.config;
  const WeakNoiseSettings ws = c.weaknoise.value_or(WeakNoiseSettings{});
  std::ofstream table(ctx.file("weaknoise.csv"));
  table << "nu,jumps,mean_inter_jump,standard_error,kramers,ratio,exact_mean,left_gibbs_p,right_gibbs_p,wells_separated\n";
  std::vector<double> inv_nu2, log_mean;
  int code = Success;
  for (std::size_t k = 0; k < ws.nu.size(); ++k) {
    const double nu = ws.nu[k];
    const auto m = SdeModel::double_well(nu, ws.depth);
    const auto run = run_weak_noise(m, ws.horizon, ws.dt, ws.thin, BrownianStream(c.seed + k, 0));
    WeakNoiseSummary s;
    try {
      s = summarize_weak_noise(m, run);
    } catch (const InsufficientData&) {
      ctx.messages.push_back("weaknoise: no transitions observed at nu = " + detail::tag(nu));
      code = Inconclusive;
      continue;
    }
    if (!s.wells_separated) ctx.messages.push_back("weaknoise: wells not separated at nu = " + detail::tag(nu));
    table << nu << ',' << s.jumps << ',' << detail::num(s.mean_inter_jump) << ',' << detail::num(s.inter_jump_se) << ','
          << detail::num(s.kramers) << ',' << detail::num(s.mean_inter_jump / s.kramers) << ','
          << detail::num(s.exact_inter_jump) << ',' << s.left_gibbs.p_value << ',' << s.right_gibbs.p_value << ','
          << (s.wells_separated ? "yes" : "no") << '\n';
    inv_nu2.push_back(1.0 / (nu * nu));
    log_mean.push_back(std::log(s.mean_inter_jump));
    // Occupation histogram against the Gibbs density, each well weighted 1/2.
    const WellGibbsCdf left(m, false), right(m, true);
    const double lo = -2.2, hi = 2.2;
    const std::size_t bins = 88;
    const double w = (hi - lo) / static_cast<double>(bins);
    std::vector<double> counts(bins, 0.0);
    const double n = static_cast<double>(run.left_samples.size() + run.right_samples.size());
    for (const auto* v : {&run.left_samples, &run.right_samples})
      for (double x : *v)
        if (x >= lo && x < hi) counts[static_cast<std::size_t>((x - lo) / w)] += 1.0;
    std::ofstream hist(ctx.file("occupation_nu" + detail::tag(nu) + ".csv"));
    hist << "x,empirical_density,gibbs_density\n";
    for (std::size_t i = 0; i < bins; ++i) {
      const double a = lo + w * static_cast<double>(i), bb = a + w;
      const double mass = 0.5 * (left(bb) - left(a)) + 0.5 * (right(bb) - right(a));
      hist << detail::num(a + 0.5 * w) << ',' << detail::num(counts[i] / (n * w)) << ',' << detail::num(mass / w) << '\n';
    }
  }
  table.close();
  if (inv_nu2.size() >= 2) {
    const auto fit = stats::least_squares(inv_nu2, log_mean);
    ctx.messages.push_back("weaknoise: slope of ln(mean inter-jump) in 1/nu^2 = " + detail::tag(fit.slope) +
                           " (Arrhenius 2 Delta U = " + detail::tag(2.0 * ws.depth) + ")");
  }
  write_manifest(ctx, "weaknoise");
  return code;
}

/// Runs the acceptance criteria and writes one line per criterion.
inline int cmd_verify(RunContext& ctx, const std::vector<int>& only = {}) {
  acceptance::Options opt;
  opt.seed = ctx.config.seed;
  opt.workers = ctx.workers;
  std::ofstream os(ctx.file("verify.txt"));
  bool failed = false, inconclusive = false;
  acceptance::run_all(opt, only, [&](const acceptance::CriterionResult& r) {
    const std::string line = acceptance::format_line(r);
    os << line << '\n';
    os.flush();
    ctx.messages.push_back(line);
    failed = failed || r.verdict == acceptance::Verdict::Fail;
    inconclusive = inconclusive || r.verdict == acceptance::Verdict::Inconclusive;
  });
  return failed ? TestFailure : inconclusive ? Inconclusive : Success;
}

} // namespace strongnoise::experiment
