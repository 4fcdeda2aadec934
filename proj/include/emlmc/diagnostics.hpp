#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "emlmc/coupling.hpp"
#include "emlmc/errors.hpp"
#include "emlmc/estimators.hpp"
#include "emlmc/parallel.hpp"

namespace emlmc {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
};

enum class FitTransform {
  kLinear,       // y vs x
  kLogY,         // ln y vs x
  kLog2Y,        // log2 y vs x (per-level rates)
  kLogLog,       // ln y vs ln x
  kThroughOrigin // y = slope * x
};

[[nodiscard]] inline const char* to_string(FitTransform t) {
  switch (t) {
    case FitTransform::kLinear:
      return "linear";
    case FitTransform::kLogY:
      return "log-y";
    case FitTransform::kLog2Y:
      return "log2-y";
    case FitTransform::kLogLog:
      return "log-log";
    case FitTransform::kThroughOrigin:
      return "through-origin";
  }
  return "unknown";
}

struct SeriesFit {
  std::vector<double> x;
  std::vector<double> y;
  double slope = 0.0;
  double intercept = 0.0;
  /// ||residual|| in the transformed coordinates.
  double residual_norm = 0.0;
  /// residual_norm / ||transformed y||.
  double relative_residual = 0.0;
  FitTransform transform = FitTransform::kLinear;
};

/// Least-squares line under the given transform.
[[nodiscard]] inline SeriesFit fit_rate(const Series& series, FitTransform transform) {
  if (series.x.size() != series.y.size()) throw InvalidArgument("fit_rate: x and y differ in length");
  const std::size_t n = series.x.size();
  if (n < 3) throw InvalidArgument("fit_rate needs at least 3 points");
  std::vector<double> u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = series.x[i];
    double y = series.y[i];
    const bool log_y = transform == FitTransform::kLogY || transform == FitTransform::kLog2Y ||
                       transform == FitTransform::kLogLog;
    if (log_y) {
      if (!(y > 0.0)) throw InvalidData("fit_rate: nonpositive y under a log transform");
      y = transform == FitTransform::kLog2Y ? std::log2(y) : std::log(y);
    }
    if (transform == FitTransform::kLogLog) {
      if (!(x > 0.0)) throw InvalidData("fit_rate: nonpositive x under a log-log transform");
      x = std::log(x);
    }
    u[i] = x;
    v[i] = y;
  }

  SeriesFit fit;
  fit.x = series.x;
  fit.y = series.y;
  fit.transform = transform;
  if (transform == FitTransform::kThroughOrigin) {
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += u[i] * v[i];
      sxx += u[i] * u[i];
    }
    if (sxx == 0.0) throw InvalidData("fit_rate: all x are zero");
    fit.slope = sxy / sxx;
  } else {
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mu += u[i];
      mv += v[i];
    }
    mu /= static_cast<double>(n);
    mv /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (u[i] - mu) * (v[i] - mv);
      sxx += (u[i] - mu) * (u[i] - mu);
    }
    if (sxx == 0.0) throw InvalidData("fit_rate: x values are all equal");
    fit.slope = sxy / sxx;
    fit.intercept = mv - fit.slope * mu;
  }
  double rss = 0.0, vss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = v[i] - (fit.intercept + fit.slope * u[i]);
    rss += r * r;
    vss += v[i] * v[i];
  }
  fit.residual_norm = std::sqrt(rss);
  fit.relative_residual = vss > 0.0 ? fit.residual_norm / std::sqrt(vss) : 0.0;
  return fit;
}

/// N samples on each level 0..l_max.
[[nodiscard]] inline std::vector<LevelStats> level_sweep(const SchemeConfig& scheme,
                                                         unsigned l_max, std::uint64_t N) {
  if (N < 4) throw InvalidArgument("level_sweep needs N >= 4");
  scheme.validate();
  std::vector<LevelStats> out;
  for (unsigned l = 0; l <= l_max; ++l) {
    out.push_back(summarize(l, scheme.step(l), run_level(scheme, l, N)));
  }
  return out;
}

/// Level-l variance at each horizon in T_grid.
[[nodiscard]] inline Series variance_vs_T(SchemeConfig scheme, unsigned level,
                                          const std::vector<double>& T_grid, std::uint64_t N) {
  Series s;
  double prev = 0.0;
  for (double T : T_grid) {
    if (!(T > prev)) throw InvalidArgument("variance_vs_T: T values must be positive and increasing");
    prev = T;
    scheme.T = T;
    scheme.validate();
    s.x.push_back(T);
    s.y.push_back(summarize(level, scheme.step(level), run_level(scheme, level, N)).variance());
  }
  return s;
}

/// Fraction of N level-l pairs whose terminal ||Yf - Yc|| exceeds
/// `threshold`. Paths that overflow or whose adaptive step collapses count
/// as divergent.
[[nodiscard]] inline double divergence_probability(const SchemeConfig& scheme, unsigned level,
                                                   std::uint64_t N, double threshold) {
  if (!(threshold > 0.0)) throw InvalidArgument("divergence threshold must be positive");
  if (level == 0 || N == 0) return 0.0;
  scheme.validate();
  std::vector<char> diverged(N, 0);
  parallel_for(0, N, scheme.workers, [&](std::size_t i) {
    try {
      const PathResult r = coupled_level_path(scheme, level, i);
      diverged[i] = r.terminal_divergence > threshold ? 1 : 0;
    } catch (const NumericOverflow&) {
      diverged[i] = 1;
    } catch (const AdaptivityFailure&) {
      diverged[i] = 1;
    }
  });
  const auto count = std::count(diverged.begin(), diverged.end(), char{1});
  return static_cast<double>(count) / static_cast<double>(N);
}

struct H0Trial {
  unsigned j = 0;
  double h0 = 0.0;
  double V0 = 0.0;
  double V1 = 0.0;
  /// Sample means of the level-1 weights; both are 1 in expectation.
  double mean_rf = 1.0;
  double mean_rc = 1.0;
  bool overflow = false;
  /// No overflow and weights not degenerate, so V0 and V1 can be compared.
  bool valid = false;
};

struct H0Search {
  /// Empty when no h0 in range achieved V0 > 2 V1.
  std::optional<double> h0;
  std::vector<H0Trial> trials;
};

/// Scans h0 = 2^-j, j = 0..j_max, from the coarsest grid and returns the
/// first (largest) h0 whose level variances satisfy V0 > 2 V1. The scheme's
/// coupling decides whether level 1 uses the spring.
///
/// On grids too coarse for the dynamics the fine and coarse paths decouple
/// and the change-of-measure weights collapse towards 0, which makes V1
/// spuriously tiny. Such trials are skipped: a trial only counts when the
/// sample means of Rf and Rc lie within `weight_tolerance` of 1.
[[nodiscard]] inline H0Search find_h0(SchemeConfig scheme, double T, std::uint64_t N,
                                      unsigned j_max = 16, double weight_tolerance = 0.5) {
  if (!(T > 0.0)) throw InvalidArgument("find_h0 requires T > 0");
  if (N < 2) throw InvalidArgument("find_h0 needs N >= 2");
  scheme.T = T;
  H0Search out;
  for (unsigned j = 0; j <= j_max; ++j) {
    scheme.h0 = std::ldexp(1.0, -static_cast<int>(j));
    scheme.validate();
    H0Trial trial;
    trial.j = j;
    trial.h0 = scheme.h0;
    try {
      trial.V0 = summarize(0, scheme.h0, run_level(scheme, 0, N)).variance();
      std::vector<double> p(N), rf(N), rc(N);
      parallel_for(0, N, scheme.workers, [&](std::size_t i) {
        const PathResult r = coupled_level_path(scheme, 1, i);
        p[i] = r.correction();
        rf[i] = r.rf;
        rc[i] = r.rc;
        if (!std::isfinite(p[i])) throw NumericOverflow(0, r.T);
      });
      const double n = static_cast<double>(N);
      const double m1 = pairwise_sum(p) / n;
      for (double& x : p) x *= x;
      trial.V1 = std::max(0.0, pairwise_sum(p) / n - m1 * m1);
      trial.mean_rf = pairwise_sum(rf) / n;
      trial.mean_rc = pairwise_sum(rc) / n;
      trial.valid = std::abs(trial.mean_rf - 1.0) <= weight_tolerance &&
                    std::abs(trial.mean_rc - 1.0) <= weight_tolerance;
    } catch (const NumericOverflow&) {
      trial.overflow = true;
    } catch (const AdaptivityFailure&) {
      trial.overflow = true;
    }
    if (trial.overflow) trial.V0 = trial.V1 = std::numeric_limits<double>::infinity();
    out.trials.push_back(trial);
    if (trial.valid && trial.V0 > 2.0 * trial.V1) {
      out.h0 = scheme.h0;
      return out;
    }
  }
  return out;
}

/// Exponential decay rate of the envelope gap (trailing-window max minus
/// min) of a signal, fitted on t >= fit_start.
struct EnvelopeFit {
  double lambda_star = 0.0;
  SeriesFit fit;
  Series gap;
};

[[nodiscard]] inline EnvelopeFit envelope_decay_rate(const std::vector<double>& t,
                                                     const std::vector<double>& signal,
                                                     double window, double fit_start) {
  if (t.size() != signal.size() || t.size() < 3) {
    throw InvalidArgument("envelope_decay_rate: need matching time and signal arrays");
  }
  if (!(window > 0.0)) throw InvalidArgument("envelope window must be positive");
  // Monotone deques give the trailing-window max and min in one pass.
  std::deque<std::size_t> hi, lo;
  EnvelopeFit out;
  std::size_t left = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    while (!hi.empty() && signal[hi.back()] <= signal[i]) hi.pop_back();
    hi.push_back(i);
    while (!lo.empty() && signal[lo.back()] >= signal[i]) lo.pop_back();
    lo.push_back(i);
    while (t[i] - t[left] > window + 1e-12) ++left;
    while (hi.front() < left) hi.pop_front();
    while (lo.front() < left) lo.pop_front();
    if (t[i] - t[0] + 1e-12 < window || t[i] + 1e-12 < fit_start) continue;
    const double gap = signal[hi.front()] - signal[lo.front()];
    if (!(gap > 0.0)) throw InvalidData("envelope gap is not positive at t = " + std::to_string(t[i]));
    out.gap.x.push_back(t[i]);
    out.gap.y.push_back(gap);
  }
  if (out.gap.x.size() < 3) throw InvalidData("envelope fit region has fewer than 3 points");
  out.fit = fit_rate(out.gap, FitTransform::kLogY);
  out.lambda_star = -out.fit.slope;
  return out;
}

struct LambdaStarEstimate {
  double lambda_star = 0.0;
  EnvelopeFit envelope;
  /// Sample mean of phi(X_t) on the recording grid.
  Series mean_path;
};

/// Simulates N plain paths on the scheme's uniform grid h0 up to T_max,
/// records E[phi(X_t)] every `record_every` time units and fits the decay of
/// its moving envelope. window defaults to T_max / 5, fit_start to T_max / 4.
[[nodiscard]] inline LambdaStarEstimate estimate_lambda_star(const SchemeConfig& scheme,
                                                             double T_max, std::uint64_t N,
                                                             std::optional<double> window = {},
                                                             std::optional<double> fit_start = {},
                                                             double record_every = 1.0 / 32.0) {
  scheme.validate();
  if (!(T_max > 0.0) || !(record_every > 0.0)) throw InvalidArgument("T_max and record spacing must be positive");
  const ModelSpec& model = *scheme.model;
  const double h = scheme.h0;
  const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(record_every / h)));
  const std::size_t steps = detail::interval_count(T_max, h);
  const std::size_t points = steps / stride + 1;

  std::vector<double> sums(points, 0.0);
  constexpr std::size_t kBlock = 64;
  std::vector<double> block(kBlock * points);
  for (std::size_t b0 = 0; b0 < N; b0 += kBlock) {
    const std::size_t b1 = std::min<std::size_t>(N, b0 + kBlock);
    parallel_for(b0, b1, scheme.workers, [&](std::size_t i) {
      GaussianStream stream(StreamKey{scheme.seed, 0, i, scheme.replica_tag});
      double* row = &block[(i - b0) * points];
      Vec x = model.x0;
      row[0] = model.observable(x);
      for (std::size_t n = 1; n <= steps; ++n) {
        x = detail::checked(x + model.drift(x) * h + stream.next(h, model.dimension), n,
                            static_cast<double>(n) * h);
        if (n % stride == 0) row[n / stride] = model.observable(x);
      }
    });
    for (std::size_t i = b0; i < b1; ++i) {
      const double* row = &block[(i - b0) * points];
      for (std::size_t k = 0; k < points; ++k) sums[k] += row[k];
    }
  }

  LambdaStarEstimate out;
  for (std::size_t k = 0; k < points; ++k) {
    out.mean_path.x.push_back(static_cast<double>(k * stride) * h);
    out.mean_path.y.push_back(sums[k] / static_cast<double>(N));
  }
  out.envelope = envelope_decay_rate(out.mean_path.x, out.mean_path.y, window.value_or(T_max / 5.0),
                                     fit_start.value_or(T_max / 4.0));
  out.lambda_star = out.envelope.lambda_star;
  return out;
}

struct CostPoint {
  double eps = 0.0;
  std::uint64_t cost = 0;
  std::optional<MlmcReport> report;
  std::string error;
};

struct CostSweep {
  std::vector<CostPoint> points;
  /// ln cost vs ln(1/eps); slope is the empirical cost exponent. Present
  /// when at least 3 runs succeeded.
  std::optional<SeriesFit> fit;
};

/// Runs the configured estimator at each eps (the target's eps is
/// replaced) and fits log cost against log(1/eps). Errors are kept per eps.
[[nodiscard]] inline CostSweep cost_vs_epsilon(const MlmcConfig& config,
                                               const std::vector<double>& eps_grid) {
  const auto* base = std::get_if<EpsilonTarget>(&config.target);
  if (!base) throw InvalidArgument("cost_vs_epsilon requires an eps-driven config");
  CostSweep out;
  Series s;
  double prev = 1.0;
  for (double eps : eps_grid) {
    if (!(eps > 0.0) || !(eps < prev)) throw InvalidArgument("eps grid must be decreasing within (0, 1)");
    prev = eps;
    MlmcConfig run = config;
    std::get<EpsilonTarget>(run.target).eps = eps;
    CostPoint p;
    p.eps = eps;
    try {
      p.report = estimate(run);
      p.cost = p.report->total_cost;
      s.x.push_back(1.0 / eps);
      s.y.push_back(static_cast<double>(p.cost));
    } catch (const Error& e) {
      p.error = e.what();
    }
    out.points.push_back(std::move(p));
  }
  if (s.x.size() >= 3) out.fit = fit_rate(s, FitTransform::kLogLog);
  return out;
}

}  // namespace emlmc
