// Command-line front end: emlmc <subcommand> [--config file.json] [flags]

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "emlmc/cli.hpp"

namespace {

using nlohmann::json;

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw emlmc::Error(emlmc::ErrorCode::kIo, "cannot open config file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw emlmc::ConfigError(emlmc::ErrorCode::kConfigParse, path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel Monte Carlo for invariant measures of ergodic SDEs"};
  app.set_version_flag("--version", "emlmc 1.0.0");

  std::string subcommand, config_path, preset, model, estimator, spring, stepping, out;
  std::optional<double> h0, eps, lambda_star, mu_star, T, c_bias;
  std::optional<unsigned> levels, workers, j_max;
  std::optional<std::uint64_t> seed, n_warm, max_paths;
  std::vector<std::uint64_t> paths;
  std::vector<double> T_grid, eps_grid;
  bool paper_scale = false;

  std::string names;
  for (const auto& s : emlmc::cli::subcommands()) names += (names.empty() ? "" : ", ") + s;
  app.add_option("subcommand", subcommand, "One of: " + names);
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--preset", preset, "Experiment preset");
  app.add_option("--model", model, "Model id");
  app.add_option("--estimator", estimator, "mc, mlmc_standard or mlmc_com");
  app.add_option("--spring", spring, "none, const:<S> or adaptive");
  app.add_option("--stepping", stepping, "uniform or adaptive");
  app.add_option("--h0", h0, "Level-0 step (delta0 for adaptive stepping)");
  app.add_option("--eps", eps, "Target accuracy");
  app.add_option("--lambda-star", lambda_star, "Convergence rate to the invariant measure");
  app.add_option("--mu-star", mu_star, "Convergence prefactor (default 1)");
  app.add_option("--T", T, "Horizon");
  app.add_option("--levels", levels, "Finest level (or the level for sweep-T)");
  app.add_option("--paths", paths, "Paths per level (one value or a comma list)")->delimiter(',');
  app.add_option("--T-grid", T_grid, "Horizons for sweep-T / find-h0")->delimiter(',');
  app.add_option("--eps-grid", eps_grid, "Accuracies for sweep-eps")->delimiter(',');
  app.add_option("--j-max", j_max, "Finest h0 = 2^-j_max tried by find-h0");
  app.add_option("--c-bias", c_bias, "Bias constant in h_L <= c_bias * eps");
  app.add_option("--n-warm", n_warm, "Screening paths per level");
  app.add_option("--max-paths", max_paths, "Cap on total paths");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--workers", workers, "Worker threads");
  app.add_option("--out", out, std::string("Output directory (default $") + emlmc::cli::kOutDirEnv + " or " +
                                   emlmc::cli::kDefaultOutDir + ")");
  app.add_flag("--paper-scale", paper_scale, "Use full-scale sample counts for the preset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : emlmc::cli::kUsageExit;
  }

  json flags = json::object();
  auto set = [&](const char* key, const auto& v) {
    if (v) flags[key] = *v;
  };
  if (!subcommand.empty()) flags["subcommand"] = subcommand;
  if (!preset.empty()) flags["preset"] = preset;
  if (!model.empty()) flags["model"] = model;
  if (!estimator.empty()) flags["estimator"] = estimator;
  if (!spring.empty()) flags["spring"] = spring;
  if (!stepping.empty()) flags["stepping"] = stepping;
  if (!out.empty()) flags["out"] = out;
  set("h0", h0);
  set("eps", eps);
  set("lambda_star", lambda_star);
  set("mu_star", mu_star);
  set("T", T);
  set("c_bias", c_bias);
  set("levels", levels);
  set("workers", workers);
  set("j_max", j_max);
  set("seed", seed);
  set("n_warm", n_warm);
  set("max_paths", max_paths);
  if (paths.size() == 1) flags["paths"] = paths[0];
  if (paths.size() > 1) flags["paths"] = paths;
  if (!T_grid.empty()) flags["T_grid"] = T_grid;
  if (!eps_grid.empty()) flags["eps_grid"] = eps_grid;
  if (paper_scale) flags["paper_scale"] = true;

  try {
    const json file = config_path.empty() ? json::object() : read_config_file(config_path);
    const emlmc::cli::RunConfig config = emlmc::cli::parse_config(file, flags);
    return emlmc::cli::run(config);
  } catch (const emlmc::Error& e) {
    std::cerr << "error [" << emlmc::to_string(e.code()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.code());
  }
}
