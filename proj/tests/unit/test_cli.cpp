#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "emlmc/cli.hpp"

namespace emlmc::cli {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("emlmc_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ErrorCode code_of(const json& file, const json& flags = json::object()) {
  try {
    (void)parse_config(file, flags);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "parse_config accepted " << file.dump() << " / " << flags.dump();
  return ErrorCode::kIo;
}

const json kOuEstimate{{"subcommand", "estimate"}, {"model", "ou"},       {"h0", 0.5},
                       {"estimator", "mlmc_com"},  {"spring", "const:1"}, {"eps", 0.02},
                       {"lambda_star", 1.0},       {"mu_star", 1.0}};

TEST(ParseConfig, DwPresetAtDeskScale) {
  const RunConfig c = parse_config(json::object(), {{"preset", "fig-dw-levels"}});
  EXPECT_EQ(c.subcommand, "levels");
  EXPECT_EQ(c.model, "double_well_abs");
  EXPECT_EQ(c.stepping, Stepping::kAdaptive);
  ASSERT_EQ(c.variants.size(), 3u);
  EXPECT_EQ(c.variants[0].estimator, EstimatorKind::kMlmcStandard);
  EXPECT_EQ(c.variants[1].spring, "const:1");
  EXPECT_EQ(c.variants[2].spring, "adaptive");
  EXPECT_EQ(*c.levels, 6u);
  EXPECT_EQ(c.paths, (std::vector<std::uint64_t>{2000}));
  EXPECT_EQ(*c.T, 5.0);
  const RunConfig paper = parse_config({{"preset", "fig-dw-levels"}, {"paper_scale", true}});
  EXPECT_EQ(paper.paths, (std::vector<std::uint64_t>{10000}));
}

TEST(ParseConfig, AllPresetsParse) {
  for (const auto& [name, _] : presets()) {
    EXPECT_NO_THROW((void)parse_config({{"preset", name}})) << name;
    EXPECT_NO_THROW((void)parse_config({{"preset", name}, {"paper_scale", true}})) << name;
  }
  EXPECT_EQ(code_of({{"preset", "nope"}}), ErrorCode::kConfigParse);
}

TEST(ParseConfig, EmptyConfigIsUsageErrorListingKeys) {
  try {
    (void)parse_config(json::object());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUsage);
    const std::string what = e.what();
    for (const char* key : {"subcommand", "model", "h0"}) EXPECT_NE(what.find(key), std::string::npos) << key;
  }
}

TEST(ParseConfig, FlagsOverrideFile) {
  json file = kOuEstimate;
  file["seed"] = 1;
  EXPECT_EQ(parse_config(file, {{"seed", 7}}).seed, 7u);
  EXPECT_EQ(parse_config(file).seed, 1u);
  EXPECT_EQ(parse_config({{"preset", "fig-dw-levels"}}, {{"paths", 64}}).paths[0], 64u);
}

TEST(ParseConfig, UnknownKeysRejectedWithPath) {
  json file = kOuEstimate;
  file["epsilon"] = 0.1;
  try {
    (void)parse_config(file);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigParse);
    EXPECT_NE(std::string(e.what()).find("$config.epsilon"), std::string::npos);
  }
  EXPECT_EQ(code_of(kOuEstimate, {{"bogus", 1}}), ErrorCode::kConfigParse);
  EXPECT_EQ(code_of({{"preset", "fig-dw-levels"}, {"variants", {{{"name", "x"}, {"colour", "red"}}}}}),
            ErrorCode::kConfigParse);
}

TEST(ParseConfig, TypeErrorsNameTheKey) {
  json file = kOuEstimate;
  file["h0"] = "half";
  try {
    (void)parse_config(file);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("h0:", 0), 0u) << e.what();
  }
  file = kOuEstimate;
  file["paths"] = -3;
  EXPECT_EQ(code_of(file), ErrorCode::kConfigParse);
  file = kOuEstimate;
  file["spring"] = "const:-1";
  EXPECT_EQ(code_of(file), ErrorCode::kConfigParse);
  file = kOuEstimate;
  file["estimator"] = "qmc";
  EXPECT_EQ(code_of(file), ErrorCode::kConfigParse);
}

TEST(ParseConfig, HorizonConflicts) {
  json file = kOuEstimate;
  file["T"] = 5.0;
  EXPECT_EQ(code_of(file), ErrorCode::kConfigConflict);
  EXPECT_EQ(code_of(kOuEstimate, {{"T", 5.0}, {"eps", 0.1}}), ErrorCode::kConfigConflict);
  // A T flag replaces the file's eps-driven horizon.
  const RunConfig c = parse_config(kOuEstimate, {{"T", 4.0}, {"paths", 100}});
  EXPECT_EQ(*c.T, 4.0);
  EXPECT_FALSE(c.eps.has_value());
  EXPECT_FALSE(c.lambda_star.has_value());
  // ...and an eps flag replaces a preset's T.
  const RunConfig d = parse_config({{"preset", "fit-lambda-star"}}, {{"subcommand", "estimate"}, {"eps", 0.1}, {"lambda_star", 0.17}});
  EXPECT_FALSE(d.T.has_value());
}

TEST(ParseConfig, SubcommandRequirements) {
  EXPECT_EQ(code_of({{"subcommand", "levels"}, {"model", "ou"}, {"h0", 0.5}}), ErrorCode::kConfigParse);
  EXPECT_EQ(code_of({{"subcommand", "fly"}, {"model", "ou"}, {"h0", 0.5}}), ErrorCode::kConfigParse);
  json file = kOuEstimate;
  file.erase("lambda_star");
  EXPECT_EQ(code_of(file), ErrorCode::kConfigParse);
  file = kOuEstimate;
  file["model"] = "lotka";
  EXPECT_EQ(code_of(file), ErrorCode::kInvalidArgument);
}

TEST(ParseConfig, OutputDirectoryFromEnvironment) {
  ::unsetenv(kOutDirEnv);
  EXPECT_EQ(parse_config(kOuEstimate).out, kDefaultOutDir);
  ::setenv(kOutDirEnv, "/tmp/somewhere", 1);
  EXPECT_EQ(parse_config(kOuEstimate).out, "/tmp/somewhere");
  EXPECT_EQ(parse_config(kOuEstimate, {{"out", "here"}}).out, "here");
  ::unsetenv(kOutDirEnv);
}

TEST(Execute, OuEstimateReport) {
  const fs::path dir = scratch_dir("ou");
  const RunConfig c = parse_config(kOuEstimate, {{"out", dir.string()}});
  const RunResult r = execute(c);
  ASSERT_EQ(r.files.size(), 1u);
  const json doc = json::parse(slurp(dir / "report.json"));
  EXPECT_NEAR(doc["report"]["estimate"].get<double>(), 1.0 / std::sqrt(std::numbers::pi), 0.06);
  EXPECT_EQ(doc["config"]["seed"], c.seed);
  EXPECT_FALSE(doc["config"].contains("workers"));
  fs::remove_all(dir);
}

TEST(Execute, LevelsOnConstantDriftHaveZeroVariance) {
  const fs::path dir = scratch_dir("bm");
  const RunConfig c = parse_config({{"subcommand", "levels"},
                                    {"model", "brownian"},
                                    {"estimator", "mlmc_standard"},
                                    {"h0", 0.5},
                                    {"T", 2.0},
                                    {"levels", 3},
                                    {"paths", 50},
                                    {"out", dir.string()}});
  (void)execute(c);
  std::ifstream in(dir / "levels_mlmc_standard.csv");
  std::string line;
  int rows = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      EXPECT_FALSE(header_seen);
      continue;
    }
    if (!header_seen) {
      EXPECT_EQ(line, "level,h,N,mean,variance,kurtosis,mean_cost,divergence_prob");
      header_seen = true;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) cols.push_back(f);
    ASSERT_EQ(cols.size(), 8u);
    // (y + a) + b against y + (a + b): zero up to round-off.
    if (rows > 0) EXPECT_LT(std::stod(cols[4]), 1e-28) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 4);
  fs::remove_all(dir);
}

TEST(Execute, HeaderCarriesConfigAndSeed) {
  const fs::path dir = scratch_dir("hdr");
  (void)execute(parse_config({{"preset", "fig-dw-levels"}}, {{"paths", 8}, {"levels", 1}, {"seed", 77}, {"out", dir.string()}}));
  const std::string csv = slurp(dir / "levels_com_adaptive.csv");
  EXPECT_EQ(csv.rfind("# emlmc levels variant=com_adaptive seed=77\n# config {", 0), 0u);
  EXPECT_NE(csv.find("\"preset\":\"fig-dw-levels\""), std::string::npos);
  fs::remove_all(dir);
}

TEST(Execute, ByteIdenticalAcrossRunsAndWorkers) {
  const json file{{"subcommand", "levels"}, {"model", "double_well_abs"}, {"stepping", "adaptive"},
                  {"h0", 1.0},              {"T", 5.0},                   {"levels", 3},
                  {"paths", 300},           {"estimator", "mlmc_com"},    {"spring", "adaptive"}};
  const fs::path a = scratch_dir("w1"), b = scratch_dir("w3"), c = scratch_dir("w1b");
  (void)execute(parse_config(file, {{"workers", 1}, {"out", a.string()}}));
  (void)execute(parse_config(file, {{"workers", 3}, {"out", b.string()}}));
  (void)execute(parse_config(file, {{"workers", 1}, {"out", c.string()}}));
  for (const char* f : {"levels_mlmc_com.csv", "levels_summary.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(c / f)) << f;
  }
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(Execute, McVariantRejectedForLevelSweeps) {
  const RunConfig c = parse_config({{"subcommand", "levels"}, {"model", "ou"}, {"estimator", "mc"},
                                    {"h0", 0.5}, {"T", 1.0}, {"levels", 1}, {"paths", 10},
                                    {"out", scratch_dir("mc").string()}});
  std::ostringstream out, err;
  EXPECT_EQ(run(c, out, err), static_cast<int>(ErrorCode::kInvalidArgument));
  EXPECT_NE(err.str().find("invalid_argument"), std::string::npos);
}

// The installed binary.

struct Proc {
  int status = -1;
  std::string out;
};

Proc sh(const std::string& args, const std::string& env = "") {
  const fs::path log = scratch_dir("log") / "out.txt";
  fs::create_directories(log.parent_path());
  const std::string cmd = env + " " + EMLMC_CLI_PATH + std::string(" ") + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  Proc p;
  p.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  p.out = slurp(log);
  return p;
}

TEST(Binary, NoArgumentsIsUsageError) {
  const Proc p = sh("");
  EXPECT_EQ(p.status, kUsageExit);
  EXPECT_NE(p.out.find("missing required keys"), std::string::npos) << p.out;
  EXPECT_NE(p.out.find("subcommand"), std::string::npos);
}

TEST(Binary, HelpAndBadFlags) {
  const Proc help = sh("--help");
  EXPECT_EQ(help.status, 0);
  for (const char* flag : {"--model", "--estimator", "--spring", "--h0", "--eps", "--lambda-star", "--mu-star",
                           "--T", "--levels", "--paths", "--seed", "--workers", "--out", "--paper-scale"}) {
    EXPECT_NE(help.out.find(flag), std::string::npos) << flag;
  }
  EXPECT_EQ(sh("levels --no-such-flag 1").status, kUsageExit);
}

TEST(Binary, ConfigFileErrors) {
  const fs::path dir = scratch_dir("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(sh("--config " + (dir / "bad.json").string()).status, static_cast<int>(ErrorCode::kConfigParse));
  EXPECT_EQ(sh("--config " + (dir / "missing.json").string()).status, static_cast<int>(ErrorCode::kIo));
  std::ofstream(dir / "conflict.json") << R"({"subcommand":"estimate","model":"ou","h0":0.5,"T":3,"eps":0.1})";
  EXPECT_EQ(sh("--config " + (dir / "conflict.json").string()).status, static_cast<int>(ErrorCode::kConfigConflict));
  fs::remove_all(dir);
}

TEST(Binary, FlagsOverConfigAndEnvOutDir) {
  const fs::path dir = scratch_dir("env");
  fs::create_directories(dir);
  std::ofstream(dir / "ou.json") << R"({"subcommand":"estimate","model":"ou","h0":0.5,"T":2,"paths":[40,20],"levels":1,"seed":1})";
  const Proc p = sh("--config " + (dir / "ou.json").string() + " --seed 7", "EMLMC_OUT_DIR=" + (dir / "out").string());
  ASSERT_EQ(p.status, 0) << p.out;
  const json doc = json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_EQ(doc["config"]["seed"], 7);
  EXPECT_EQ(doc["report"]["levels"][1]["N"], 20);
  fs::remove_all(dir);
}

TEST(Binary, ByteIdenticalAcrossWorkerCounts) {
  const fs::path dir = scratch_dir("bin");
  const std::string base = "--preset fig-dw-levels --paths 200 --levels 3 --seed 11";
  ASSERT_EQ(sh(base + " --workers 1 --out " + (dir / "a").string()).status, 0);
  ASSERT_EQ(sh(base + " --workers 4 --out " + (dir / "b").string()).status, 0);
  for (const char* f : {"levels_standard.csv", "levels_com_const.csv", "levels_com_adaptive.csv", "levels_summary.json"}) {
    const std::string x = slurp(dir / "a" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(dir / "b" / f)) << f;
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace emlmc::cli
