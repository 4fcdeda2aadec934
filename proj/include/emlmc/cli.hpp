#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "emlmc/diagnostics.hpp"
#include "emlmc/errors.hpp"
#include "emlmc/estimators.hpp"
#include "emlmc/io.hpp"
#include "emlmc/models.hpp"

namespace emlmc::cli {

using nlohmann::json;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "EMLMC_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "emlmc-out";

/// Process exit code for malformed command lines.
inline constexpr int kUsageExit = static_cast<int>(ErrorCode::kUsage);

/// One coupling to run in a sweep. Sweeps with several variants write one
/// file per variant.
struct Variant {
  std::string name;
  EstimatorKind estimator = EstimatorKind::kMlmcCom;
  std::string spring = "none";
};

struct RunConfig {
  std::string subcommand;
  std::optional<std::string> preset;
  std::string model;
  EstimatorKind estimator = EstimatorKind::kMlmcCom;
  std::string spring = "none";
  Stepping stepping = Stepping::kUniform;
  double h0 = 0.0;
  std::optional<double> T;
  std::optional<double> eps;
  std::optional<double> lambda_star;
  std::optional<double> mu_star;
  /// l_max for sweeps, L for explicit estimates, the level for sweep-T.
  std::optional<unsigned> levels;
  std::vector<std::uint64_t> paths;
  std::vector<double> T_grid;
  std::vector<double> eps_grid;
  std::optional<double> window;
  std::optional<double> fit_start;
  double record_every = 1.0 / 32.0;
  unsigned j_max = 16;
  double c_bias = 1.0;
  std::uint64_t n_warm = 100;
  std::uint64_t max_paths = 100'000'000;
  std::uint64_t seed = kDefaultMasterSeed;
  unsigned workers = 1;
  std::string out;
  bool paper_scale = false;
  std::vector<Variant> variants;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"estimate", "levels",     "sweep-T",
                                              "sweep-eps", "fit-lambda", "find-h0"};
  return names;
}

// ---------------------------------------------------------------------------
// Presets

struct Preset {
  json desk;
  /// Applied on top of `desk` under --paper-scale.
  json paper;
};

inline const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table = [] {
    std::map<std::string, Preset> p;
    const json dw_variants = json::array({
        {{"name", "standard"}, {"estimator", "mlmc_standard"}, {"spring", "none"}},
        {{"name", "com_const"}, {"estimator", "mlmc_com"}, {"spring", "const:1"}},
        {{"name", "com_adaptive"}, {"estimator", "mlmc_com"}, {"spring", "adaptive"}},
    });
    const json lorenz_variants = json::array({
        {{"name", "standard"}, {"estimator", "mlmc_standard"}, {"spring", "none"}},
        {{"name", "com"}, {"estimator", "mlmc_com"}, {"spring", "const:10"}},
    });
    p["fig-dw-levels"] = {{{"subcommand", "levels"},
                           {"model", "double_well_abs"},
                           {"stepping", "adaptive"},
                           {"h0", 1.0},
                           {"T", 5.0},
                           {"levels", 6},
                           {"paths", 2000},
                           {"variants", dw_variants}},
                          {{"paths", 10000}}};
    p["fig-lorenz-levels"] = {{{"subcommand", "levels"},
                               {"model", "lorenz"},
                               {"stepping", "adaptive"},
                               {"h0", 1.0},
                               {"T", 5.0},
                               {"levels", 6},
                               {"paths", 2000},
                               {"variants", lorenz_variants}},
                              {{"paths", 10000}, {"levels", 8}}};
    p["fig-var-vs-T"] = {{{"subcommand", "sweep-T"},
                          {"model", "truncated_lorenz"},
                          {"stepping", "uniform"},
                          {"h0", std::ldexp(1.0, -9)},
                          {"levels", 4},
                          {"T_grid", {2.0, 4.0, 6.0, 8.0}},
                          {"paths", 2000},
                          {"variants", lorenz_variants}},
                         {{"paths", 10000},
                          {"levels", 8},
                          {"T_grid", {2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0}}}};
    p["fig-h0-vs-T"] = {{{"subcommand", "find-h0"},
                         {"model", "truncated_lorenz"},
                         {"stepping", "uniform"},
                         {"h0", 1.0},
                         {"T_grid", {4.0, 8.0, 16.0}},
                         {"paths", 1000},
                         {"j_max", 16},
                         {"variants", lorenz_variants}},
                        {{"paths", 10000}}};
    p["fit-lambda-star"] = {{{"subcommand", "fit-lambda"},
                             {"model", "truncated_lorenz"},
                             {"stepping", "uniform"},
                             {"h0", std::ldexp(1.0, -9)},
                             {"T", 20.0},
                             {"paths", 2000}},
                            {{"paths", 10000}}};
    return p;
  }();
  return table;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "subcommand", "preset",   "model",     "estimator",   "spring",       "stepping",
      "h0",         "T",        "eps",       "lambda_star", "mu_star",      "levels",
      "paths",      "T_grid",   "eps_grid",  "window",      "fit_start",    "record_every",
      "j_max",      "c_bias",   "n_warm",    "max_paths",   "seed",         "workers",
      "out",        "paper_scale", "variants"};
  return keys;
}

[[noreturn]] inline void parse_error(const std::string& path, const std::string& what) {
  throw ConfigError(ErrorCode::kConfigParse, path + ": " + what);
}

inline void check_keys(const json& doc, const std::string& where) {
  if (!doc.is_object()) parse_error(where, "expected an object");
  for (const auto& [key, _] : doc.items()) {
    if (!known_keys().count(key)) parse_error(where + "." + key, "unknown key");
  }
}

inline double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) parse_error(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) parse_error(path, "expected a finite number");
  return x;
}

inline double get_positive(const json& v, const std::string& path) {
  const double x = get_number(v, path);
  if (!(x > 0.0)) parse_error(path, "expected a positive number");
  return x;
}

inline std::uint64_t get_count(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    parse_error(path, "expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) parse_error(path, "expected a string");
  return v.get<std::string>();
}

inline bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) parse_error(path, "expected true or false");
  return v.get<bool>();
}

inline std::vector<double> get_grid(const json& v, const std::string& path) {
  std::vector<double> out;
  if (v.is_number()) return {get_positive(v, path)};
  if (!v.is_array()) parse_error(path, "expected a number or an array of numbers");
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(get_positive(v[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline EstimatorKind parse_estimator(const std::string& s, const std::string& path) {
  if (s == "mc") return EstimatorKind::kMc;
  if (s == "mlmc_standard") return EstimatorKind::kMlmcStandard;
  if (s == "mlmc_com") return EstimatorKind::kMlmcCom;
  parse_error(path, "unknown estimator '" + s + "' (mc, mlmc_standard, mlmc_com)");
}

inline std::string check_spring(const std::string& s, const std::string& path) {
  if (s == "none" || s == "adaptive") return s;
  if (s.rfind("const:", 0) == 0) {
    const std::string num = s.substr(6);
    char* end = nullptr;
    const double S = std::strtod(num.c_str(), &end);
    if (!num.empty() && end == num.c_str() + num.size() && std::isfinite(S) && S >= 0.0) return s;
  }
  parse_error(path, "spring must be none, adaptive or const:<S> with S >= 0");
}

inline void merge_into(json& base, const json& overlay) {
  for (const auto& [key, value] : overlay.items()) base[key] = value;
}

}  // namespace detail

/// Builds a SpringPolicy from "none", "const:<S>" or "adaptive".
[[nodiscard]] inline SpringPolicy make_spring(const std::string& spec, const ModelSpec& model) {
  if (spec == "none") return SpringPolicy::none();
  if (spec == "adaptive") return SpringPolicy::adaptive_for(model);
  if (spec.rfind("const:", 0) == 0) return SpringPolicy::constant(std::stod(spec.substr(6)));
  throw InvalidArgument("bad spring spec '" + spec + "'");
}

/// Merges preset, file and flag documents (later wins) and validates the
/// result. Unknown keys are rejected in every layer. T conflicts with any of
/// eps / lambda_star / mu_star.
[[nodiscard]] inline RunConfig parse_config(const json& file, const json& flags = json::object()) {
  detail::check_keys(file, "$config");
  detail::check_keys(flags, "$flags");

  json merged = json::object();
  std::optional<std::string> preset;
  if (flags.contains("preset")) {
    preset = detail::get_string(flags["preset"], "$flags.preset");
  } else if (file.contains("preset")) {
    preset = detail::get_string(file["preset"], "$config.preset");
  }
  bool paper_scale = false;
  if (flags.contains("paper_scale")) {
    paper_scale = detail::get_bool(flags["paper_scale"], "$flags.paper_scale");
  } else if (file.contains("paper_scale")) {
    paper_scale = detail::get_bool(file["paper_scale"], "$config.paper_scale");
  }
  if (preset) {
    const auto it = presets().find(*preset);
    if (it == presets().end()) {
      std::string names;
      for (const auto& [k, _] : presets()) names += (names.empty() ? "" : ", ") + k;
      detail::parse_error("preset", "unknown preset '" + *preset + "' (" + names + ")");
    }
    merged = it->second.desk;
    if (paper_scale) detail::merge_into(merged, it->second.paper);
  }
  // Within one layer, giving T together with eps-driven keys is a conflict;
  // across layers the later layer's choice replaces the earlier one.
  auto horizon_conflict = [](const json& doc, const std::string& where) {
    if (doc.contains("T") &&
        (doc.contains("eps") || doc.contains("lambda_star") || doc.contains("mu_star"))) {
      throw ConfigError(ErrorCode::kConfigConflict,
                        where + ": T cannot be combined with eps, lambda_star or mu_star");
    }
  };
  horizon_conflict(file, "$config");
  horizon_conflict(flags, "$flags");
  auto layer = [&](const json& doc) {
    const bool eps_driven =
        doc.contains("eps") || doc.contains("lambda_star") || doc.contains("mu_star");
    if (doc.contains("T")) {
      merged.erase("eps");
      merged.erase("lambda_star");
      merged.erase("mu_star");
    } else if (eps_driven) {
      merged.erase("T");
    }
    detail::merge_into(merged, doc);
  };
  layer(file);
  layer(flags);

  RunConfig c;
  c.preset = preset;
  c.paper_scale = paper_scale;

  std::vector<std::string> missing;
  for (const char* key : {"subcommand", "model", "h0"}) {
    if (!merged.contains(key)) missing.push_back(key);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& k : missing) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError(ErrorCode::kUsage,
                      "missing required keys: " + list +
                          " (estimate: T + paths or eps + lambda_star; levels: T, levels, paths; "
                          "sweep-T: T_grid, levels, paths; sweep-eps: eps_grid, lambda_star; "
                          "fit-lambda: T, paths; find-h0: T_grid, paths)");
  }

  c.subcommand = detail::get_string(merged["subcommand"], "subcommand");
  if (std::find(subcommands().begin(), subcommands().end(), c.subcommand) == subcommands().end()) {
    detail::parse_error("subcommand", "unknown subcommand '" + c.subcommand + "'");
  }
  c.model = detail::get_string(merged["model"], "model");
  c.h0 = detail::get_positive(merged["h0"], "h0");
  if (merged.contains("estimator")) {
    c.estimator = detail::parse_estimator(detail::get_string(merged["estimator"], "estimator"), "estimator");
  }
  if (merged.contains("spring")) c.spring = detail::check_spring(detail::get_string(merged["spring"], "spring"), "spring");
  if (merged.contains("stepping")) {
    const std::string s = detail::get_string(merged["stepping"], "stepping");
    if (s == "uniform") {
      c.stepping = Stepping::kUniform;
    } else if (s == "adaptive") {
      c.stepping = Stepping::kAdaptive;
    } else {
      detail::parse_error("stepping", "expected uniform or adaptive");
    }
  }
  if (merged.contains("T")) c.T = detail::get_positive(merged["T"], "T");
  if (merged.contains("eps")) c.eps = detail::get_positive(merged["eps"], "eps");
  if (merged.contains("lambda_star")) c.lambda_star = detail::get_positive(merged["lambda_star"], "lambda_star");
  if (merged.contains("mu_star")) c.mu_star = detail::get_positive(merged["mu_star"], "mu_star");
  if (merged.contains("levels")) {
    const auto l = detail::get_count(merged["levels"], "levels");
    if (l > 60) detail::parse_error("levels", "at most 60 levels");
    c.levels = static_cast<unsigned>(l);
  }
  if (merged.contains("paths")) {
    const json& p = merged["paths"];
    if (p.is_array()) {
      for (std::size_t i = 0; i < p.size(); ++i) c.paths.push_back(detail::get_count(p[i], "paths[" + std::to_string(i) + "]"));
    } else {
      c.paths.push_back(detail::get_count(p, "paths"));
    }
  }
  if (merged.contains("T_grid")) c.T_grid = detail::get_grid(merged["T_grid"], "T_grid");
  if (merged.contains("eps_grid")) c.eps_grid = detail::get_grid(merged["eps_grid"], "eps_grid");
  if (merged.contains("window")) c.window = detail::get_positive(merged["window"], "window");
  if (merged.contains("fit_start")) c.fit_start = detail::get_number(merged["fit_start"], "fit_start");
  if (merged.contains("record_every")) c.record_every = detail::get_positive(merged["record_every"], "record_every");
  if (merged.contains("j_max")) c.j_max = static_cast<unsigned>(std::min<std::uint64_t>(60, detail::get_count(merged["j_max"], "j_max")));
  if (merged.contains("c_bias")) c.c_bias = detail::get_positive(merged["c_bias"], "c_bias");
  if (merged.contains("n_warm")) c.n_warm = detail::get_count(merged["n_warm"], "n_warm");
  if (merged.contains("max_paths")) c.max_paths = detail::get_count(merged["max_paths"], "max_paths");
  if (merged.contains("seed")) c.seed = detail::get_count(merged["seed"], "seed");
  if (merged.contains("workers")) c.workers = static_cast<unsigned>(std::max<std::uint64_t>(1, detail::get_count(merged["workers"], "workers")));
  if (merged.contains("out")) {
    c.out = detail::get_string(merged["out"], "out");
  } else if (const char* env = std::getenv(kOutDirEnv); env && *env) {
    c.out = env;
  } else {
    c.out = kDefaultOutDir;
  }
  if (merged.contains("variants")) {
    const json& vs = merged["variants"];
    if (!vs.is_array() || vs.empty()) detail::parse_error("variants", "expected a non-empty array");
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const std::string path = "variants[" + std::to_string(i) + "]";
      const json& v = vs[i];
      if (!v.is_object()) detail::parse_error(path, "expected an object");
      for (const auto& [key, _] : v.items()) {
        if (key != "name" && key != "estimator" && key != "spring") detail::parse_error(path + "." + key, "unknown key");
      }
      Variant var;
      var.estimator = v.contains("estimator")
                          ? detail::parse_estimator(detail::get_string(v["estimator"], path + ".estimator"), path + ".estimator")
                          : c.estimator;
      var.spring = v.contains("spring") ? detail::check_spring(detail::get_string(v["spring"], path + ".spring"), path + ".spring")
                                        : c.spring;
      var.name = v.contains("name") ? detail::get_string(v["name"], path + ".name") : to_string(var.estimator);
      c.variants.push_back(var);
    }
  } else {
    c.variants.push_back({to_string(c.estimator), c.estimator, c.spring});
  }

  // Per-subcommand requirements.
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(ErrorCode::kConfigParse, c.subcommand + " requires " + what);
  };
  if (c.subcommand == "estimate") {
    require(c.T.has_value() || c.eps.has_value(), "either T (explicit plan) or eps");
    if (c.T) {
      require(!c.paths.empty(), "paths for an explicit plan");
    } else {
      require(c.lambda_star.has_value(), "lambda_star when eps-driven");
    }
  } else if (c.subcommand == "levels") {
    require(c.T.has_value(), "T");
    require(c.levels.has_value(), "levels");
    require(c.paths.size() == 1, "a single paths value");
  } else if (c.subcommand == "sweep-T") {
    require(c.T_grid.size() >= 1, "T_grid");
    require(c.levels.has_value(), "levels (the level to sweep)");
    require(c.paths.size() == 1, "a single paths value");
  } else if (c.subcommand == "sweep-eps") {
    require(c.eps_grid.size() >= 1, "eps_grid");
    require(c.lambda_star.has_value(), "lambda_star");
  } else if (c.subcommand == "fit-lambda") {
    require(c.T.has_value(), "T (the simulated horizon)");
    require(c.paths.size() == 1, "a single paths value");
  } else if (c.subcommand == "find-h0") {
    require(!c.T_grid.empty() || c.T.has_value(), "T_grid or T");
    require(c.paths.size() == 1, "a single paths value");
    if (c.T_grid.empty()) c.T_grid = {*c.T};
  }
  (void)find_model(c.model);  // unknown ids fail here, at parse time
  return c;
}

/// The effective configuration as recorded in output files. Worker count
/// and output directory do not affect results and are left out so that
/// outputs are byte-identical across them.
[[nodiscard]] inline json effective_config(const RunConfig& c) {
  json j{{"subcommand", c.subcommand},
         {"model", c.model},
         {"estimator", to_string(c.estimator)},
         {"spring", c.spring},
         {"stepping", to_string(c.stepping)},
         {"h0", c.h0},
         {"seed", c.seed},
         {"c_bias", c.c_bias},
         {"n_warm", c.n_warm},
         {"max_paths", c.max_paths},
         {"j_max", c.j_max},
         {"record_every", c.record_every},
         {"paper_scale", c.paper_scale},
         {"paths", c.paths},
         {"T_grid", c.T_grid},
         {"eps_grid", c.eps_grid}};
  j["preset"] = c.preset ? json(*c.preset) : json(nullptr);
  auto opt = [&](const char* key, const std::optional<double>& v) { j[key] = v ? json(*v) : json(nullptr); };
  opt("T", c.T);
  opt("eps", c.eps);
  opt("lambda_star", c.lambda_star);
  opt("mu_star", c.mu_star);
  opt("window", c.window);
  opt("fit_start", c.fit_start);
  j["levels"] = c.levels ? json(*c.levels) : json(nullptr);
  json vs = json::array();
  for (const auto& v : c.variants) vs.push_back({{"name", v.name}, {"estimator", to_string(v.estimator)}, {"spring", v.spring}});
  j["variants"] = vs;
  return j;
}

// ---------------------------------------------------------------------------
// Running

namespace detail {

inline SchemeConfig make_scheme(const RunConfig& c, const Variant& v) {
  SchemeConfig s;
  s.model = find_model(c.model);
  s.spring = make_spring(v.spring, *s.model);
  s.change_of_measure = v.estimator == EstimatorKind::kMlmcCom;
  s.stepping = c.stepping;
  s.h0 = c.h0;
  s.T = c.T.value_or(1.0);
  s.seed = c.seed;
  s.workers = c.workers;
  return s;
}

inline MlmcConfig make_mlmc(const RunConfig& c, const Variant& v) {
  MlmcConfig m;
  m.scheme = make_scheme(c, v);
  m.kind = v.estimator;
  m.max_paths = c.max_paths;
  if (c.T) {
    ExplicitPlan plan;
    plan.L = c.levels.value_or(0);
    plan.T = *c.T;
    if (v.estimator == EstimatorKind::kMc) {
      plan.N = {c.paths.at(0)};
    } else if (c.paths.size() == 1) {
      plan.N.assign(plan.L + 1, c.paths[0]);
    } else {
      plan.N = c.paths;
    }
    m.target = plan;
  } else {
    EpsilonTarget t;
    t.eps = c.eps.value_or(0.0);
    t.horizon = ConvergenceRate{c.lambda_star.value_or(0.0), c.mu_star.value_or(1.0)};
    t.c_bias = c.c_bias;
    t.n_warm = c.n_warm;
    m.target = t;
  }
  return m;
}

inline void require_coupling(const Variant& v) {
  if (v.estimator == EstimatorKind::kMc) {
    throw InvalidArgument("variant '" + v.name + "': this subcommand needs a coupled scheme (mlmc_standard or mlmc_com)");
  }
}

inline std::vector<std::string> header_lines(const RunConfig& c, const Variant& v) {
  return {"emlmc " + c.subcommand + " variant=" + v.name + " seed=" + std::to_string(c.seed),
          "config " + effective_config(c).dump()};
}

inline json try_fit(const Series& s, FitTransform t) {
  try {
    return io::to_json(fit_rate(s, t));
  } catch (const Error& e) {
    return {{"transform", to_string(t)}, {"error", e.what()}};
  }
}

}  // namespace detail

/// Outcome of a run: files written and a short human-readable summary.
struct RunResult {
  std::vector<std::filesystem::path> files;
  std::string summary;
};

/// Runs the configured subcommand and writes its outputs to c.out.
[[nodiscard]] inline RunResult execute(const RunConfig& c) {
  RunResult result;
  std::ostringstream log;
  const std::filesystem::path dir = c.out;
  const json cfg = effective_config(c);

  auto emit = [&](const std::string& name, const std::string& content) {
    result.files.push_back(io::write_file(dir, name, content));
  };

  if (c.subcommand == "estimate") {
    json runs = json::array();
    for (const auto& v : c.variants) {
      const MlmcReport r = estimate(detail::make_mlmc(c, v));
      json j = io::to_json(r);
      j["variant"] = v.name;
      runs.push_back(j);
      log << v.name << ": estimate " << io::fmt(r.estimate) << " +- " << io::fmt(r.statistical_error)
          << " (T " << io::fmt(r.T) << ", L " << r.L << ", cost " << r.total_cost << ")\n";
    }
    json doc{{"config", cfg}};
    if (runs.size() == 1) {
      doc["report"] = runs[0];
    } else {
      doc["reports"] = runs;
    }
    emit("report.json", doc.dump(2) + "\n");
  } else if (c.subcommand == "levels") {
    json summary{{"config", cfg}, {"variants", json::array()}};
    for (const auto& v : c.variants) {
      detail::require_coupling(v);
      SchemeConfig s = detail::make_scheme(c, v);
      const auto stats = level_sweep(s, *c.levels, c.paths[0]);
      std::ostringstream csv;
      io::write_levels_csv(csv, stats, detail::header_lines(c, v));
      emit("levels_" + v.name + ".csv", csv.str());
      Series var, kurt;
      for (const auto& st : stats) {
        if (st.level == 0) continue;
        var.x.push_back(st.level);
        var.y.push_back(st.variance());
        kurt.x.push_back(st.level);
        kurt.y.push_back(st.kurtosis());
      }
      json levels = json::array();
      for (const auto& st : stats) levels.push_back(io::to_json(st));
      summary["variants"].push_back({{"name", v.name},
                                     {"variance_fit", detail::try_fit(var, FitTransform::kLog2Y)},
                                     {"kurtosis_fit", detail::try_fit(kurt, FitTransform::kLogY)},
                                     {"levels", levels}});
      log << v.name << ": " << stats.size() << " levels\n";
    }
    emit("levels_summary.json", summary.dump(2) + "\n");
  } else if (c.subcommand == "sweep-T") {
    json summary{{"config", cfg}, {"level", *c.levels}, {"variants", json::array()}};
    for (const auto& v : c.variants) {
      detail::require_coupling(v);
      const Series s = variance_vs_T(detail::make_scheme(c, v), *c.levels, c.T_grid, c.paths[0]);
      std::ostringstream csv;
      io::write_columns_csv(csv, {"T", "variance"}, {s.x, s.y}, detail::header_lines(c, v));
      emit("var_vs_T_" + v.name + ".csv", csv.str());
      const auto [lo, hi] = std::minmax_element(s.y.begin(), s.y.end());
      summary["variants"].push_back({{"name", v.name},
                                     {"log_fit", detail::try_fit(s, FitTransform::kLogY)},
                                     {"linear_fit", detail::try_fit(s, FitTransform::kThroughOrigin)},
                                     {"max_to_min", io::number(*lo > 0.0 ? *hi / *lo : INFINITY)}});
      log << v.name << ": " << s.x.size() << " horizons\n";
    }
    emit("var_vs_T_summary.json", summary.dump(2) + "\n");
  } else if (c.subcommand == "sweep-eps") {
    json summary{{"config", cfg}, {"variants", json::array()}};
    for (const auto& v : c.variants) {
      MlmcConfig m = detail::make_mlmc(c, v);
      std::get<EpsilonTarget>(m.target).eps = c.eps_grid.front();
      const CostSweep sweep = cost_vs_epsilon(m, c.eps_grid);
      std::vector<double> eps, cost, est, err, L, T;
      json errors = json::array();
      for (const auto& p : sweep.points) {
        if (!p.report) {
          errors.push_back({{"eps", p.eps}, {"error", p.error}});
          continue;
        }
        eps.push_back(p.eps);
        cost.push_back(static_cast<double>(p.cost));
        est.push_back(p.report->estimate);
        err.push_back(p.report->statistical_error);
        L.push_back(p.report->L);
        T.push_back(p.report->T);
      }
      std::ostringstream csv;
      io::write_columns_csv(csv, {"eps", "total_cost", "estimate", "statistical_error", "L", "T"},
                            {eps, cost, est, err, L, T}, detail::header_lines(c, v));
      emit("cost_vs_eps_" + v.name + ".csv", csv.str());
      summary["variants"].push_back({{"name", v.name},
                                     {"cost_fit", sweep.fit ? io::to_json(*sweep.fit) : json(nullptr)},
                                     {"errors", errors}});
      log << v.name << ": cost exponent "
          << (sweep.fit ? io::fmt(sweep.fit->slope) : std::string("n/a")) << "\n";
    }
    emit("cost_vs_eps_summary.json", summary.dump(2) + "\n");
  } else if (c.subcommand == "fit-lambda") {
    const Variant& v = c.variants.front();
    SchemeConfig s = detail::make_scheme(c, v);
    const LambdaStarEstimate est = estimate_lambda_star(s, *c.T, c.paths[0], c.window, c.fit_start, c.record_every);
    std::ostringstream csv;
    io::write_columns_csv(csv, {"t", "mean_phi"}, {est.mean_path.x, est.mean_path.y}, detail::header_lines(c, v));
    emit("mean_path.csv", csv.str());
    const json doc{{"config", cfg},
                   {"lambda_star", io::number(est.lambda_star)},
                   {"window", io::number(c.window.value_or(*c.T / 5.0))},
                   {"fit_start", io::number(c.fit_start.value_or(*c.T / 4.0))},
                   {"fit", io::to_json(est.envelope.fit)}};
    emit("lambda_star.json", doc.dump(2) + "\n");
    log << "lambda* " << io::fmt(est.lambda_star) << "\n";
  } else if (c.subcommand == "find-h0") {
    json summary{{"config", cfg}, {"variants", json::array()}};
    for (const auto& v : c.variants) {
      detail::require_coupling(v);
      SchemeConfig s = detail::make_scheme(c, v);
      std::vector<double> Tc, jc, h0c, V0c, V1c, validc, selc;
      Series found;
      json per_T = json::array();
      for (double T : c.T_grid) {
        const H0Search r = find_h0(s, T, c.paths[0], c.j_max);
        for (const auto& t : r.trials) {
          Tc.push_back(T);
          jc.push_back(t.j);
          h0c.push_back(t.h0);
          V0c.push_back(t.V0);
          V1c.push_back(t.V1);
          validc.push_back(t.valid ? 1.0 : 0.0);
          selc.push_back(r.h0 && *r.h0 == t.h0 ? 1.0 : 0.0);
        }
        per_T.push_back({{"T", T}, {"h0", r.h0 ? json(*r.h0) : json(nullptr)}});
        if (r.h0) {
          found.x.push_back(T);
          found.y.push_back(*r.h0);
        }
        log << v.name << ": T " << io::fmt(T) << " -> h0 " << (r.h0 ? io::fmt(*r.h0) : std::string("none")) << "\n";
      }
      std::ostringstream csv;
      io::write_columns_csv(csv, {"T", "j", "h0", "V0", "V1", "valid", "selected"},
                            {Tc, jc, h0c, V0c, V1c, validc, selc}, detail::header_lines(c, v));
      emit("h0_" + v.name + ".csv", csv.str());
      summary["variants"].push_back({{"name", v.name},
                                     {"h0", per_T},
                                     {"loglog_fit", detail::try_fit(found, FitTransform::kLogLog)},
                                     {"log_fit", detail::try_fit(found, FitTransform::kLogY)}});
    }
    emit("h0_summary.json", summary.dump(2) + "\n");
  }
  result.summary = log.str();
  return result;
}

/// execute() with errors mapped to exit codes; messages go to `err`.
inline int run(const RunConfig& c, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const RunResult r = execute(c);
    out << r.summary;
    for (const auto& f : r.files) out << "wrote " << f.string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace emlmc::cli
