#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "strongnoise/experiment.hpp"

using namespace strongnoise;
using namespace strongnoise::experiment;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  unsigned workers = 1;
  std::optional<std::size_t> paths;
  std::optional<double> horizon;
  std::optional<double> dt;
  std::vector<int> criteria;
};

/// The config file with command-line overrides folded in, so the manifest
/// echoes exactly what was run.
ExperimentConfig resolve_config(const GlobalFlags& g) {
  Json j = Json::object();
  if (!g.config.empty()) {
    std::ifstream is(g.config);
    if (!is) throw ValidationError("cannot open config '" + g.config + "'");
    try {
      j = Json::parse(is);
    } catch (const Json::parse_error& e) {
      throw ValidationError("config '" + g.config + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config '" + g.config + "' must hold a JSON object");
  }
  if (g.seed) j["seed"] = *g.seed;
  if (g.paths) j["paths"] = *g.paths;
  if (g.horizon) j["horizon"] = *g.horizon;
  if (g.dt) {
    j.erase("dt_factor");
    j["dt"] = *g.dt;
  }
  return parse_config(j);
}

int dispatch(const std::string& command, const GlobalFlags& g) {
  RunContext ctx;
  ctx.config = resolve_config(g);
  ctx.out = g.out;
  ctx.workers = g.workers == 0 ? 1 : g.workers;
  std::error_code ec;
  std::filesystem::create_directories(ctx.out, ec);
  if (ec) throw ValidationError("cannot create output directory '" + g.out + "': " + ec.message());
  int code = Success;
  if (command == "simulate") code = cmd_simulate(ctx);
  else if (command == "spikes") code = cmd_spikes(ctx);
  else if (command == "passage") code = cmd_passage(ctx);
  else if (command == "skorokhod-demo") code = cmd_skorokhod_demo(ctx);
  else if (command == "weaknoise") code = cmd_weaknoise(ctx);
  else if (command == "verify") code = cmd_verify(ctx, g.criteria);
  for (const auto& m : ctx.messages) std::cout << m << '\n';
  return code;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strong-noise limits of one-dimensional diffusions: simulation, spikes and passage times"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON experiment file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Overrides the config seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads for path generation")->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "Write sample paths and a manifest");
  sim->add_option("--paths", g.paths, "Overrides the config path count");
  sim->add_option("--horizon", g.horizon, "Overrides the config horizon");
  sim->add_option("--dt", g.dt, "Absolute time step");
  app.add_subcommand("spikes", "Spike tips and Poisson tests along the scaling family");
  app.add_subcommand("passage", "Laplace transform of passage times: Monte Carlo, ODE and limit");
  app.add_subcommand("skorokhod-demo", "Convergence of the penalised equation to the reflection");
  app.add_subcommand("weaknoise", "Double-well transition times against the Kramers law");
  auto* ver = app.add_subcommand("verify", "Run the acceptance criteria");
  ver->add_option("criteria", g.criteria, "Criterion ids (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? Success : Invalid;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, g);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Invalid;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Invalid;
  } catch (const UnsupportedFamily& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Invalid;
  } catch (const InsufficientData& e) {
    std::cerr << "inconclusive: " << e.what() << '\n';
    return Inconclusive;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return NumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return Invalid;
  }
}
