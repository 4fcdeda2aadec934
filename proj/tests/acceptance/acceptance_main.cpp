// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "emlmc/cli.hpp"
#include "emlmc/diagnostics.hpp"
#include "emlmc/estimators.hpp"

using namespace emlmc;
namespace fs = std::filesystem;

namespace {

const unsigned kWorkers = std::max(1u, std::thread::hardware_concurrency());

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = pairwise_sum(v) / n;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
  return {m, std::sqrt(pairwise_sum(sq) / (n - 1.0) / n)};
}

double log_gauss(const Vec& x, const Vec& mu, double h) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mu[i];
    s += -0.5 * std::log(2.0 * std::numbers::pi * h) - d * d / (2.0 * h);
  }
  return s;
}

SchemeConfig dw_adaptive(bool com) {
  SchemeConfig s;
  s.model = find_model("double_well_abs");
  s.spring = SpringPolicy::constant(1.0);
  s.change_of_measure = com;
  s.stepping = Stepping::kAdaptive;
  s.h0 = 1.0;
  s.T = 5.0;
  s.seed = 20240611;
  s.workers = kWorkers;
  return s;
}

SchemeConfig truncated_lorenz(bool com) {
  SchemeConfig s;
  s.model = find_model("truncated_lorenz");
  s.spring = SpringPolicy::constant(10.0);
  s.change_of_measure = com;
  s.h0 = std::ldexp(1.0, -9);
  s.T = 5.0;
  s.seed = 20240612;
  s.workers = kWorkers;
  return s;
}

double log2_variance_slope(const std::vector<LevelStats>& stats, unsigned lo, unsigned hi) {
  Series s;
  for (unsigned l = lo; l <= hi; ++l) {
    s.x.push_back(l);
    s.y.push_back(stats[l].variance());
  }
  return fit_rate(s, FitTransform::kLog2Y).slope;
}

// Double-well adaptive sweeps are shared by criteria 4 and 5.
std::vector<LevelStats> dw_com_levels, dw_std_levels;

Outcome c1() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0), lh(-14.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t m = 1 + i % 3;
    const double h = std::exp2(lh(rng));
    Vec dw(m), s(m);
    for (std::size_t k = 0; k < m; ++k) {
      dw[k] = u(rng) * std::sqrt(h);
      s[k] = u(rng) * 10.0;
    }
    // Ratio of the unshifted to the spring-shifted Gaussian density at the
    // realised increment.
    const Vec x = s * h + dw;
    const double oracle = std::exp(log_gauss(x, Vec(m), h) - log_gauss(x, s * h, h));
    const double got = std::exp(rn_log_factor(dw, s, h));
    worst = std::max(worst, std::abs(got - oracle) / oracle);
  }
  return {worst <= 1e-12, "max relative error " + num(worst) + " (limit 1e-12)"};
}

Outcome c2() {
  const auto model = find_model("double_well");
  const std::size_t N = 10000;
  std::vector<double> rf(N), rc(N);
  parallel_for(0, N, kWorkers, [&](std::size_t i) {
    const auto r = simulate_coupled_path(*model, SpringPolicy::constant(1.0), 1.0 / 64, 5.0, StreamKey{77, 6, i, 0});
    rf[i] = r.rf;
    rc[i] = r.rc;
  });
  const MeanSe f = mean_se(rf), c = mean_se(rc);
  const double zf = std::abs(f.mean - 1.0) / f.se, zc = std::abs(c.mean - 1.0) / c.se;
  return {zf <= 3.0 && zc <= 3.0, "mean Rf " + num(f.mean, 6) + " (" + num(zf, 3) + " SE), mean Rc " +
                                      num(c.mean, 6) + " (" + num(zc, 3) + " SE)"};
}

Outcome c3() {
  const auto model = find_model("double_well_abs");
  const std::size_t N = 10000;
  const double h = 1.0 / 64;
  std::vector<double> wc(N), wf(N), plain_c(N), plain_f(N);
  parallel_for(0, N, kWorkers, [&](std::size_t i) {
    const auto r = simulate_coupled_path(*model, SpringPolicy::constant(1.0), h, 5.0, StreamKey{78, 6, i, 0});
    wc[i] = r.phi_c * r.rc;
    wf[i] = r.phi_f * r.rf;
    plain_c[i] = simulate_single_path(*model, 2.0 * h, 5.0, StreamKey{78, 5, i, 1}).phi;
    plain_f[i] = simulate_single_path(*model, h, 5.0, StreamKey{78, 6, i, 1}).phi;
  });
  const MeanSe a = mean_se(wc), b = mean_se(plain_c), af = mean_se(wf), bf = mean_se(plain_f);
  const double z = std::abs(a.mean - b.mean) / std::hypot(a.se, b.se);
  const double zf = std::abs(af.mean - bf.mean) / std::hypot(af.se, bf.se);
  return {z <= 3.0, "coarse: weighted " + num(a.mean, 6) + " vs plain " + num(b.mean, 6) + " (" + num(z, 3) +
                        " combined SE); fine: " + num(af.mean, 6) + " vs " + num(bf.mean, 6) + " (" + num(zf, 3) +
                        " SE)"};
}

Outcome c4() {
  dw_com_levels = level_sweep(dw_adaptive(true), 6, 2000);
  const double dw = log2_variance_slope(dw_com_levels, 2, 6);
  const auto lz_levels = level_sweep(truncated_lorenz(true), 6, 2000);
  const double lz = log2_variance_slope(lz_levels, 2, 6);
  const bool ok = std::abs(dw + 2.0) <= 0.4 && std::abs(lz + 2.0) <= 0.4;
  return {ok, "log2 V slope over levels 2..6: double-well " + num(dw) + ", truncated Lorenz " + num(lz) +
                  " (target -2 +- 0.4)"};
}

Outcome c5() {
  if (dw_com_levels.empty()) dw_com_levels = level_sweep(dw_adaptive(true), 6, 2000);
  dw_std_levels = level_sweep(dw_adaptive(false), 6, 2000);
  const auto& st = dw_std_levels;
  const auto& com = dw_com_levels;
  bool ok = true;
  bool monotone_all = true;
  std::string div_std, div_com;
  for (unsigned l = 1; l <= 6; ++l) {
    const double p = st[l].divergence_probability();
    const bool rises = l > 1 && p > st[l - 1].divergence_probability();
    div_std += (l > 1 ? "," : "") + num(p, 3);
    div_com += (l > 1 ? "," : "") + num(com[l].divergence_probability(), 3);
    // Positive and nonincreasing on the coarse levels; beyond that the
    // counts are a handful of paths out of N.
    if (l <= 3 && (!(p > 0.0) || rises)) ok = false;
    if (rises) monotone_all = false;
    if (com[l].divergence_probability() != 0.0) ok = false;
  }
  Series k;
  for (unsigned l = 1; l <= 6; ++l) {
    k.x.push_back(l);
    k.y.push_back(st[l].kurtosis());
  }
  const double k_slope = fit_rate(k, FitTransform::kLogY).slope;
  double k_max = 0.0;
  for (const auto& s : com) k_max = std::max(k_max, s.kurtosis());
  const double k0 = com[0].kurtosis();
  ok = ok && k_slope > 0.0 && k_max <= 3.0 * k0;
  return {ok, "standard divergence l=1..6 [" + div_std + "] (nonincreasing on 1..3" +
                  (monotone_all ? ", and on 1..6" : "; not on 1..6") + "), CoM [" + div_com +
                  "]; standard ln-kurtosis slope " +
                  num(k_slope, 3) + "; CoM kurtosis max " + num(k_max, 3) + " vs 3 x " + num(k0, 3)};
}

Outcome c6() {
  const std::vector<double> Ts{2.0, 4.0, 6.0, 8.0};
  const Series s = variance_vs_T(truncated_lorenz(false), 4, Ts, 2000);
  const Series c = variance_vs_T(truncated_lorenz(true), 4, Ts, 2000);
  const double slope = fit_rate(s, FitTransform::kLogY).slope;
  const auto [lo, hi] = std::minmax_element(c.y.begin(), c.y.end());
  const double ratio = *hi / *lo;
  std::string vs, vc;
  for (std::size_t i = 0; i < Ts.size(); ++i) {
    vs += (i ? "," : "") + num(s.y[i], 3);
    vc += (i ? "," : "") + num(c.y[i], 3);
  }
  return {slope > 0.5 && ratio < 2.5, "standard V(T)=[" + vs + "] log slope " + num(slope, 3) + " (> 0.5); CoM V(T)=[" +
                                          vc + "] max/min " + num(ratio, 3) + " (< 2.5)"};
}

Outcome c7() {
  MlmcConfig m;
  m.scheme.model = find_model("ou");
  m.scheme.spring = SpringPolicy::constant(1.0);
  m.scheme.h0 = 0.5;
  m.scheme.seed = 7;
  m.scheme.workers = kWorkers;
  m.kind = EstimatorKind::kMlmcCom;
  m.target = EpsilonTarget{0.02, ConvergenceRate{1.0, 1.0}};
  const auto r = estimate(m);
  const double exact = 1.0 / std::sqrt(std::numbers::pi);
  return {std::abs(r.estimate - exact) <= 0.06, "estimate " + num(r.estimate, 6) + " vs " + num(exact, 6) +
                                                    " (stat. error " + num(r.statistical_error, 3) + ", L " +
                                                    std::to_string(r.L) + ", T " + num(r.T, 4) + ")"};
}

Outcome c8() {
  const std::vector<double> grid{0.1, 0.05, 0.025};
  auto sweep = [&](EstimatorKind kind) {
    MlmcConfig m;
    m.scheme = dw_adaptive(kind == EstimatorKind::kMlmcCom);
    m.kind = kind;
    m.target = EpsilonTarget{grid[0], FixedHorizon{5.0}};
    return cost_vs_epsilon(m, grid);
  };
  const CostSweep com = sweep(EstimatorKind::kMlmcCom);
  const CostSweep mc = sweep(EstimatorKind::kMc);
  if (!com.fit || !mc.fit) return {false, "a run in the eps sweep failed"};
  const double a = com.fit->slope, b = mc.fit->slope;
  std::string costs;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    costs += (i ? "; " : "") + num(grid[i], 3) + ": " + std::to_string(com.points[i].cost) + " / " +
             std::to_string(mc.points[i].cost);
  }
  return {a >= 1.7 && a <= 2.5 && b >= 2.5 && b <= 3.5,
          "exponent mlmc_com " + num(a, 3) + " (1.7..2.5), mc " + num(b, 3) + " (2.5..3.5); cost com/mc " + costs};
}

Outcome c9() {
  SchemeConfig s = truncated_lorenz(true);
  Series found;
  std::string picks;
  for (double T : {4.0, 8.0, 16.0}) {
    const H0Search r = find_h0(s, T, 500, 16);
    picks += (picks.empty() ? "" : ", ") + ("T=" + num(T, 3) + ": ");
    if (!r.h0) {
      picks += "none";
      continue;
    }
    const auto& t = r.trials.back();
    picks += "2^-" + std::to_string(t.j) + " (V0 " + num(t.V0, 3) + ", V1 " + num(t.V1, 3) + ")";
    found.x.push_back(T);
    found.y.push_back(*r.h0);
  }
  if (found.x.size() < 3) return {false, "h0 not found for every T: " + picks};
  const double slope = fit_rate(found, FitTransform::kLogLog).slope;
  return {slope >= -0.7 && slope <= -0.3, "log h0 vs log T slope " + num(slope, 3) + " (-0.7..-0.3); " + picks};
}

Outcome c10() {
  const fs::path root = fs::temp_directory_path() / ("emlmc_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  using nlohmann::json;
  const std::vector<json> configs{
      {{"preset", "fig-dw-levels"}, {"paths", 400}, {"levels", 4}},
      {{"preset", "fig-var-vs-T"}, {"paths", 100}, {"levels", 2}},
      {{"preset", "fit-lambda-star"}, {"paths", 64}, {"T", 4.0}},
      {{"preset", "fig-h0-vs-T"}, {"paths", 64}, {"j_max", 6}},
      {{"subcommand", "estimate"}, {"model", "ou"}, {"h0", 0.5}, {"spring", "const:1"}, {"eps", 0.05}, {"lambda_star", 1.0}},
      {{"subcommand", "sweep-eps"}, {"model", "ou"}, {"h0", 0.5}, {"estimator", "mc"}, {"eps_grid", {0.2, 0.1, 0.05}}, {"lambda_star", 1.0}},
  };
  std::size_t files = 0;
  std::string mismatch;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    std::vector<std::vector<std::string>> outputs;
    for (unsigned w : {1u, 2u, 5u}) {
      const fs::path dir = root / (std::to_string(k) + "_w" + std::to_string(w));
      const auto r = cli::execute(cli::parse_config(configs[k], {{"workers", w}, {"out", dir.string()}}));
      std::vector<std::string> contents;
      for (const auto& f : r.files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        contents.push_back(os.str());
      }
      outputs.push_back(contents);
    }
    files += outputs[0].size();
    if (outputs[0] != outputs[1] || outputs[0] != outputs[2]) mismatch += " config " + std::to_string(k);
  }
  fs::remove_all(root);
  return {mismatch.empty(), std::to_string(files) + " files compared across 1, 2 and 5 workers" +
                                (mismatch.empty() ? ": all identical" : ": differences in" + mismatch)};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all{
      {1, "RN exactness", 1.0, c1},        {2, "martingale weights", 30.0, c2},
      {3, "Girsanov reweighting", 60.0, c3}, {4, "CoM variance rate", 300.0, c4},
      {5, "double-well divergence and kurtosis", 300.0, c5},
      {6, "variance growth in T", 600.0, c6}, {7, "OU estimate", 120.0, c7},
      {8, "cost exponents", 900.0, c8},     {9, "h0 scaling with T", 600.0, c9},
      {10, "determinism across workers", 0.0, c10},
  };
  std::printf("workers: %u\n", kWorkers);
  int failed = 0;
  std::size_t ran = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = c.budget_s <= 0.0 || secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    if (!pass) ++failed;
    std::printf("%s criterion %d (%s): %s; %.1f s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget_s > 0.0 ? (in_budget ? " within budget" : " OVER BUDGET") : "");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, ran);
  return failed == 0 ? 0 : 1;
}
