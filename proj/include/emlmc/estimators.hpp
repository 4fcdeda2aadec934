#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "emlmc/coupling.hpp"
#include "emlmc/errors.hpp"
#include "emlmc/models.hpp"
#include "emlmc/parallel.hpp"
#include "emlmc/sampling.hpp"

namespace emlmc {

enum class EstimatorKind { kMc, kMlmcStandard, kMlmcCom };
enum class Stepping { kUniform, kAdaptive };

[[nodiscard]] inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kMc:
      return "mc";
    case EstimatorKind::kMlmcStandard:
      return "mlmc_standard";
    case EstimatorKind::kMlmcCom:
      return "mlmc_com";
  }
  return "unknown";
}

[[nodiscard]] inline const char* to_string(Stepping s) {
  return s == Stepping::kUniform ? "uniform" : "adaptive";
}

/// Everything needed to draw level samples: the model, how the pair is
/// coupled, the level-0 step (h0 for uniform grids, delta0 for adaptive
/// ones), the horizon and the seed.
struct SchemeConfig {
  std::shared_ptr<const ModelSpec> model;
  /// Spring used by the change-of-measure coupling; ignored otherwise.
  SpringPolicy spring;
  /// True for the spring-coupled scheme with Radon-Nikodym weights.
  bool change_of_measure = true;
  Stepping stepping = Stepping::kUniform;
  double h0 = 0.0;
  double T = 1.0;
  std::uint64_t seed = kDefaultMasterSeed;
  std::uint32_t replica_tag = 0;
  unsigned workers = 1;

  /// Fine step (or delta) on level l.
  [[nodiscard]] double step(unsigned level) const { return std::ldexp(h0, -static_cast<int>(level)); }

  void validate() const {
    if (!model) throw InvalidArgument("scheme has no model");
    if (!(h0 > 0.0) || !std::isfinite(h0)) throw InvalidArgument("h0 must be positive");
    if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("T must be positive");
    if (stepping == Stepping::kAdaptive && !model->adaptive_rule) {
      throw UnsupportedOperation("model '" + model->name + "' has no adaptive timestep rule");
    }
  }
};

/// One sample of a level estimator.
struct LevelSample {
  double P = 0.0;
  std::uint64_t cost = 0;
  /// Terminal ||Yf - Yc||; zero on level 0.
  double divergence = 0.0;
  bool diverged = false;
};

/// Plain single-path sample phi(X_T) at level `level` of the scheme.
[[nodiscard]] inline LevelSample single_level_sample(const SchemeConfig& scheme, unsigned level,
                                                     std::uint64_t path_index) {
  const ModelSpec& model = *scheme.model;
  const StreamKey key{scheme.seed, level, path_index, scheme.replica_tag};
  const SinglePathResult r = scheme.stepping == Stepping::kUniform
                                 ? simulate_single_path(model, scheme.step(level), scheme.T, key)
                                 : simulate_adaptive_single_path(model, scheme.step(level), scheme.T, key);
  return {r.phi, r.cost, 0.0, false};
}

/// Raw coupled-pair simulation for level >= 1 of the scheme.
[[nodiscard]] inline PathResult coupled_level_path(const SchemeConfig& scheme, unsigned level,
                                                   std::uint64_t path_index) {
  if (level == 0) throw InvalidArgument("coupled paths exist only on levels >= 1");
  const ModelSpec& model = *scheme.model;
  const StreamKey key{scheme.seed, level, path_index, scheme.replica_tag};
  const double h = scheme.step(level);
  const SpringPolicy none;
  const SpringPolicy& spring = scheme.change_of_measure ? scheme.spring : none;
  if (scheme.stepping == Stepping::kAdaptive) {
    return simulate_adaptive_coupled_path(model, spring, h, scheme.T, key);
  }
  if (scheme.change_of_measure) return simulate_coupled_path(model, spring, h, scheme.T, key);
  return simulate_standard_coupled_path(model, h, scheme.T, key);
}

/// Level-l sample: phi(X_T) with h0 on level 0, otherwise the correction
/// phi(Yf) Rf - phi(Yc) Rc (Rf = Rc = 1 for the standard coupling).
[[nodiscard]] inline LevelSample level_sample(const SchemeConfig& scheme, unsigned level,
                                              std::uint64_t path_index) {
  if (level == 0) return single_level_sample(scheme, 0, path_index);
  const PathResult r = coupled_level_path(scheme, level, path_index);
  const double p = r.correction();
  if (!std::isfinite(p)) throw NumericOverflow(0, r.T);
  return {p, r.cost, r.terminal_divergence,
          r.terminal_divergence > scheme.model->divergence_threshold};
}

/// Power sums of a level's samples plus cost and divergence counters.
struct LevelStats {
  unsigned level = 0;
  double h = 0.0;
  std::uint64_t N = 0;
  double sum1 = 0.0;
  double sum2 = 0.0;
  double sum3 = 0.0;
  double sum4 = 0.0;
  std::uint64_t cost_total = 0;
  std::uint64_t divergence_count = 0;

  [[nodiscard]] double mean() const { return N ? sum1 / static_cast<double>(N) : 0.0; }
  [[nodiscard]] double variance() const {
    if (N == 0) return 0.0;
    const double n = static_cast<double>(N);
    const double mu = sum1 / n;
    return std::max(0.0, sum2 / n - mu * mu);
  }
  /// Standardized fourth central moment; NaN when N < 4 or the variance is 0.
  [[nodiscard]] double kurtosis() const {
    const double var = variance();
    if (N < 4 || !(var > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double n = static_cast<double>(N);
    const double mu = sum1 / n;
    const double m4 = sum4 / n - 4.0 * mu * sum3 / n + 6.0 * mu * mu * sum2 / n - 3.0 * mu * mu * mu * mu;
    return m4 / (var * var);
  }
  [[nodiscard]] double mean_cost() const {
    return N ? static_cast<double>(cost_total) / static_cast<double>(N) : 0.0;
  }
  [[nodiscard]] double divergence_probability() const {
    return N ? static_cast<double>(divergence_count) / static_cast<double>(N) : 0.0;
  }
};

/// Stats of samples stored in path-index order. Sums are pairwise, so the
/// result is independent of how the samples were computed.
[[nodiscard]] inline LevelStats summarize(unsigned level, double h,
                                          const std::vector<LevelSample>& samples) {
  LevelStats s;
  s.level = level;
  s.h = h;
  s.N = samples.size();
  std::vector<double> p1(samples.size()), p2(samples.size()), p3(samples.size()), p4(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double p = samples[i].P;
    p1[i] = p;
    p2[i] = p * p;
    p3[i] = p2[i] * p;
    p4[i] = p2[i] * p2[i];
    s.cost_total += samples[i].cost;
    s.divergence_count += samples[i].diverged ? 1 : 0;
  }
  s.sum1 = pairwise_sum(p1);
  s.sum2 = pairwise_sum(p2);
  s.sum3 = pairwise_sum(p3);
  s.sum4 = pairwise_sum(p4);
  return s;
}

/// Appends samples [samples.size(), target) of one level.
template <class Sampler>
void extend_samples(std::vector<LevelSample>& samples, std::uint64_t target, unsigned workers,
                    Sampler&& sampler) {
  const std::size_t begin = samples.size();
  if (target <= begin) return;
  samples.resize(target);
  parallel_for(begin, static_cast<std::size_t>(target), workers,
               [&](std::size_t i) { samples[i] = sampler(static_cast<std::uint64_t>(i)); });
}

/// Runs N level samples with path indices 0..N-1.
[[nodiscard]] inline std::vector<LevelSample> run_level(const SchemeConfig& scheme, unsigned level,
                                                        std::uint64_t N) {
  std::vector<LevelSample> samples;
  extend_samples(samples, N, scheme.workers,
                 [&](std::uint64_t i) { return level_sample(scheme, level, i); });
  return samples;
}

// ---------------------------------------------------------------------------
// Planning

struct Allocation {
  std::vector<std::uint64_t> N;
  /// All variances were zero; every level gets one sample.
  bool degenerate = false;
};

namespace detail {
inline std::uint64_t ceil_count(double x) {
  // Absorb round-off so exact integers are not bumped up by one.
  const double c = std::ceil(x * (1.0 - 1e-12));
  return static_cast<std::uint64_t>(std::max(1.0, c));
}
}  // namespace detail

/// Optimal sample counts for a variance budget of eps^2 / 3:
/// N_l = ceil(3 eps^-2 sqrt(V_l / C_l) sum_k sqrt(V_k C_k)), at least 1.
[[nodiscard]] inline Allocation allocate_samples(const std::vector<double>& V,
                                                 const std::vector<double>& C, double eps) {
  if (V.size() != C.size() || V.empty()) {
    throw InvalidArgument("allocate_samples: V and C must be non-empty and of equal length");
  }
  if (!(eps > 0.0)) throw InvalidArgument("allocate_samples: eps must be positive");
  double root_sum = 0.0;
  for (std::size_t l = 0; l < V.size(); ++l) {
    if (!(V[l] >= 0.0) || !(C[l] > 0.0)) {
      throw InvalidArgument("allocate_samples: need V >= 0 and C > 0");
    }
    root_sum += std::sqrt(V[l] * C[l]);
  }
  Allocation out;
  if (root_sum == 0.0) {
    out.N.assign(V.size(), 1);
    out.degenerate = true;
    return out;
  }
  for (std::size_t l = 0; l < V.size(); ++l) {
    out.N.push_back(detail::ceil_count(3.0 / (eps * eps) * std::sqrt(V[l] / C[l]) * root_sum));
  }
  return out;
}

/// Horizon that pushes the truncation error mu* exp(-lambda* T) below
/// eps / sqrt(6), floored at `min_T`.
[[nodiscard]] inline double choose_T(double eps, double lambda_star, double mu_star,
                                     double min_T = 0.0) {
  if (!(eps > 0.0) || !(eps < 1.0)) throw InvalidArgument("choose_T: eps must lie in (0, 1)");
  if (!(lambda_star > 0.0) || !(mu_star > 0.0)) {
    throw InvalidArgument("choose_T: lambda* and mu* must be positive");
  }
  const double T = std::log(1.0 / eps) / lambda_star + std::log(std::sqrt(6.0) * mu_star) / lambda_star;
  return std::max(T, min_T);
}

/// Smallest L with 2^-L h0 <= c_bias * eps.
[[nodiscard]] inline unsigned choose_L(double eps, double h0, double c_bias = 1.0) {
  if (!(eps > 0.0) || !(h0 > 0.0) || !(c_bias > 0.0)) {
    throw InvalidArgument("choose_L: eps, h0 and c_bias must be positive");
  }
  unsigned L = 0;
  while (std::ldexp(h0, -static_cast<int>(L)) > c_bias * eps) {
    if (++L > 60) throw InvalidArgument("choose_L: more than 60 levels required");
  }
  return L;
}

// ---------------------------------------------------------------------------
// Estimators

/// Horizon from the exponential convergence rate: T = choose_T(eps, lambda*, mu*).
struct ConvergenceRate {
  double lambda_star = 0.0;
  double mu_star = 1.0;
};
/// Horizon pinned by the caller, as in fixed-T experiments.
struct FixedHorizon {
  double T = 0.0;
};

/// Accuracy-driven mode: T, L and N_l are chosen from eps.
struct EpsilonTarget {
  double eps = 0.0;
  std::variant<ConvergenceRate, FixedHorizon> horizon;
  double c_bias = 1.0;
  std::uint64_t n_warm = 100;
};

/// Fixed-plan mode: run exactly N[l] samples on levels 0..L to horizon T.
/// For the mc estimator N holds a single count used on level L.
struct ExplicitPlan {
  unsigned L = 0;
  std::vector<std::uint64_t> N;
  double T = 0.0;
};

struct MlmcConfig {
  SchemeConfig scheme;
  EstimatorKind kind = EstimatorKind::kMlmcCom;
  std::variant<EpsilonTarget, ExplicitPlan> target;
  std::uint64_t max_paths = 100'000'000;
};

/// How T, L and N_l were chosen.
struct PlanProvenance {
  std::string mode;  // "epsilon" or "explicit"
  std::optional<double> eps;
  std::optional<double> lambda_star;
  std::optional<double> mu_star;
  std::string horizon_rule;  // "convergence_rate", "fixed" or "explicit"
  double c_bias = 1.0;
  std::uint64_t n_warm = 0;
  std::vector<double> screening_variance;
  std::vector<double> screening_cost;
  std::vector<std::uint64_t> target_N;
  bool degenerate_allocation = false;
};

struct MlmcReport {
  EstimatorKind kind = EstimatorKind::kMlmcCom;
  double estimate = 0.0;
  std::vector<LevelStats> levels;
  double T = 0.0;
  unsigned L = 0;
  std::uint64_t total_cost = 0;
  /// sqrt(sum_l V_l / N_l).
  double statistical_error = 0.0;
  /// V_l / N_l per level.
  std::vector<double> variance_contributions;
  PlanProvenance provenance;
  bool complete = true;
  std::vector<std::string> warnings;
};

namespace detail {

inline double realized_horizon(const SchemeConfig& scheme, double T) {
  if (scheme.stepping == Stepping::kAdaptive) return T;
  // Every level's pair step divides h0, so one rounding serves all levels.
  return static_cast<double>(interval_count(T, scheme.h0)) * scheme.h0;
}

inline void finalize(MlmcReport& report) {
  report.estimate = 0.0;
  report.total_cost = 0;
  double var = 0.0;
  report.variance_contributions.clear();
  for (const LevelStats& s : report.levels) {
    report.estimate += s.mean();
    report.total_cost += s.cost_total;
    const double c = s.N ? s.variance() / static_cast<double>(s.N) : 0.0;
    report.variance_contributions.push_back(c);
    var += c;
  }
  report.statistical_error = std::sqrt(var);
}

/// Caps the sum of targets at max_paths. Paths already simulated are kept;
/// whatever budget is left is spread over each level's shortfall.
inline bool apply_cap(std::vector<std::uint64_t>& targets, const std::vector<std::uint64_t>& have,
                      std::uint64_t max_paths) {
  const std::uint64_t total = std::accumulate(targets.begin(), targets.end(), std::uint64_t{0});
  if (total <= max_paths) return true;
  const std::uint64_t done = std::accumulate(have.begin(), have.end(), std::uint64_t{0});
  const std::uint64_t wanted = total - done;
  const double factor = max_paths > done ? static_cast<double>(max_paths - done) / static_cast<double>(wanted) : 0.0;
  for (std::size_t l = 0; l < targets.size(); ++l) {
    const double extra = static_cast<double>(targets[l] - have[l]) * factor;
    targets[l] = have[l] + static_cast<std::uint64_t>(std::floor(extra));
  }
  return false;
}

}  // namespace detail

/// Multilevel estimator (standard or change-of-measure coupling, chosen by
/// config.kind). With an EpsilonTarget: pick T and L, screen n_warm paths per
/// level, allocate N_l and extend each level by path index so screening
/// samples are reused. With an ExplicitPlan: run exactly that plan.
[[nodiscard]] inline MlmcReport mlmc_estimate(const MlmcConfig& config) {
  if (config.kind == EstimatorKind::kMc) {
    throw InvalidArgument("mlmc_estimate called with the mc estimator kind; use mc_estimate");
  }
  SchemeConfig scheme = config.scheme;
  scheme.change_of_measure = config.kind == EstimatorKind::kMlmcCom;

  MlmcReport report;
  report.kind = config.kind;
  if (scheme.change_of_measure && scheme.model) {
    report.warnings = spring_warnings(*scheme.model, scheme.spring);
  }

  std::vector<std::vector<LevelSample>> samples;
  std::vector<std::uint64_t> targets;

  if (const auto* plan = std::get_if<ExplicitPlan>(&config.target)) {
    if (plan->N.size() != plan->L + 1) {
      throw InvalidArgument("explicit plan needs L + 1 sample counts");
    }
    scheme.T = plan->T;
    scheme.validate();
    scheme.T = detail::realized_horizon(scheme, plan->T);
    report.L = plan->L;
    report.provenance.mode = "explicit";
    report.provenance.horizon_rule = "explicit";
    targets = plan->N;
    samples.resize(plan->L + 1);
  } else {
    const auto& target = std::get<EpsilonTarget>(config.target);
    if (!(target.eps > 0.0)) throw InvalidArgument("eps must be positive");
    double T = 0.0;
    if (const auto* rate = std::get_if<ConvergenceRate>(&target.horizon)) {
      T = choose_T(target.eps, rate->lambda_star, rate->mu_star, 2.0 * scheme.h0);
      report.provenance.horizon_rule = "convergence_rate";
      report.provenance.lambda_star = rate->lambda_star;
      report.provenance.mu_star = rate->mu_star;
    } else {
      T = std::get<FixedHorizon>(target.horizon).T;
      report.provenance.horizon_rule = "fixed";
    }
    scheme.T = T;
    scheme.validate();
    scheme.T = detail::realized_horizon(scheme, T);
    report.L = choose_L(target.eps, scheme.h0, target.c_bias);
    report.provenance.mode = "epsilon";
    report.provenance.eps = target.eps;
    report.provenance.c_bias = target.c_bias;
    report.provenance.n_warm = target.n_warm;

    samples.resize(report.L + 1);
    std::vector<double> V, C;
    for (unsigned l = 0; l <= report.L; ++l) {
      extend_samples(samples[l], target.n_warm, scheme.workers,
                     [&](std::uint64_t i) { return level_sample(scheme, l, i); });
      const LevelStats s = summarize(l, scheme.step(l), samples[l]);
      V.push_back(s.variance());
      C.push_back(std::max(1.0, s.mean_cost()));
    }
    const Allocation alloc = allocate_samples(V, C, target.eps);
    report.provenance.screening_variance = V;
    report.provenance.screening_cost = C;
    report.provenance.degenerate_allocation = alloc.degenerate;
    targets = alloc.N;
    for (std::size_t l = 0; l < targets.size(); ++l) {
      targets[l] = std::max<std::uint64_t>(targets[l], samples[l].size());
    }
  }

  std::vector<std::uint64_t> have;
  for (const auto& s : samples) have.push_back(s.size());
  report.complete = detail::apply_cap(targets, have, config.max_paths);
  report.provenance.target_N = targets;

  for (unsigned l = 0; l <= report.L; ++l) {
    extend_samples(samples[l], targets[l], scheme.workers,
                   [&](std::uint64_t i) { return level_sample(scheme, l, i); });
    report.levels.push_back(summarize(l, scheme.step(l), samples[l]));
  }
  report.T = scheme.T;
  detail::finalize(report);
  return report;
}

/// Standard Monte Carlo: plain paths at h_L = 2^-L h0 with
/// N_L = ceil(3 V / eps^2) from a screening estimate of V.
[[nodiscard]] inline MlmcReport mc_estimate(const MlmcConfig& config) {
  SchemeConfig scheme = config.scheme;
  MlmcReport report;
  report.kind = EstimatorKind::kMc;

  std::vector<LevelSample> samples;
  std::uint64_t target = 0;

  if (const auto* plan = std::get_if<ExplicitPlan>(&config.target)) {
    if (plan->N.size() != 1) throw InvalidArgument("mc explicit plan needs exactly one sample count");
    scheme.T = plan->T;
    scheme.validate();
    scheme.T = detail::realized_horizon(scheme, plan->T);
    report.L = plan->L;
    report.provenance.mode = "explicit";
    report.provenance.horizon_rule = "explicit";
    target = plan->N[0];
  } else {
    const auto& eps_target = std::get<EpsilonTarget>(config.target);
    if (!(eps_target.eps > 0.0)) throw InvalidArgument("eps must be positive");
    double T = 0.0;
    if (const auto* rate = std::get_if<ConvergenceRate>(&eps_target.horizon)) {
      T = choose_T(eps_target.eps, rate->lambda_star, rate->mu_star, 2.0 * scheme.h0);
      report.provenance.horizon_rule = "convergence_rate";
      report.provenance.lambda_star = rate->lambda_star;
      report.provenance.mu_star = rate->mu_star;
    } else {
      T = std::get<FixedHorizon>(eps_target.horizon).T;
      report.provenance.horizon_rule = "fixed";
    }
    scheme.T = T;
    scheme.validate();
    scheme.T = detail::realized_horizon(scheme, T);
    report.L = choose_L(eps_target.eps, scheme.h0, eps_target.c_bias);
    report.provenance.mode = "epsilon";
    report.provenance.eps = eps_target.eps;
    report.provenance.c_bias = eps_target.c_bias;
    report.provenance.n_warm = eps_target.n_warm;

    extend_samples(samples, eps_target.n_warm, scheme.workers,
                   [&](std::uint64_t i) { return single_level_sample(scheme, report.L, i); });
    const LevelStats screen = summarize(report.L, scheme.step(report.L), samples);
    const Allocation alloc =
        allocate_samples({screen.variance()}, {std::max(1.0, screen.mean_cost())}, eps_target.eps);
    report.provenance.screening_variance = {screen.variance()};
    report.provenance.screening_cost = {std::max(1.0, screen.mean_cost())};
    report.provenance.degenerate_allocation = alloc.degenerate;
    target = std::max<std::uint64_t>(alloc.N[0], samples.size());
  }

  std::vector<std::uint64_t> targets{target};
  report.complete = detail::apply_cap(targets, {samples.size()}, config.max_paths);
  report.provenance.target_N = targets;
  extend_samples(samples, targets[0], scheme.workers,
                 [&](std::uint64_t i) { return single_level_sample(scheme, report.L, i); });
  report.levels.push_back(summarize(report.L, scheme.step(report.L), samples));
  report.T = scheme.T;
  detail::finalize(report);
  return report;
}

/// Dispatches on config.kind.
[[nodiscard]] inline MlmcReport estimate(const MlmcConfig& config) {
  return config.kind == EstimatorKind::kMc ? mc_estimate(config) : mlmc_estimate(config);
}

}  // namespace emlmc
