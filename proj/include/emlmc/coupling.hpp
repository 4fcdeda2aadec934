#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>

#include "emlmc/errors.hpp"
#include "emlmc/models.hpp"
#include "emlmc/sampling.hpp"
#include "emlmc/vec.hpp"

namespace emlmc {

/// State of a fine/coarse pair at an even grid time t_{2n}.
struct CoupledPathState {
  double t = 0.0;
  Vec yf;
  Vec yc;
  double log_rf = 0.0;
  double log_rc = 0.0;
  /// Coarse state at the last even time; the coarse drift and spring are
  /// frozen there for both half-updates.
  Vec yc_anchor;
  std::uint64_t cost = 0;
  /// Fine steps taken so far.
  std::size_t step = 0;

  static CoupledPathState start(const Vec& x0) {
    CoupledPathState s;
    s.yf = x0;
    s.yc = x0;
    s.yc_anchor = x0;
    return s;
  }
};

/// Terminal quantities of one coupled fine/coarse simulation.
struct PathResult {
  double phi_f = 0.0;
  double phi_c = 0.0;
  double rf = 1.0;
  double rc = 1.0;
  double log_rf = 0.0;
  double log_rc = 0.0;
  /// Largest ||Yf - Yc|| seen on the coarse grid.
  double max_divergence = 0.0;
  /// ||Yf_T - Yc_T||.
  double terminal_divergence = 0.0;
  /// Drift evaluations on both paths.
  std::uint64_t cost = 0;
  /// Horizon actually simulated after rounding to the grid.
  double T = 0.0;
  Vec yf;
  Vec yc;

  /// Level correction phi(Yf) Rf - phi(Yc) Rc.
  [[nodiscard]] double correction() const noexcept { return phi_f * rf - phi_c * rc; }
};

struct SinglePathResult {
  double phi = 0.0;
  std::uint64_t cost = 0;
  double T = 0.0;
  Vec x;
};

namespace detail {

inline Vec checked(Vec x, std::size_t step, double t) {
  if (!all_finite(x)) throw NumericOverflow(step, t);
  return x;
}

/// Number of grid intervals of length `unit` covering [0, T], at least one.
inline std::size_t interval_count(double T, double unit) {
  if (!(T > 0.0) || !(unit > 0.0) || !std::isfinite(T / unit)) {
    throw InvalidArgument("horizon and step must be positive and finite");
  }
  const double n = std::ceil(T / unit - 1e-9);
  return static_cast<std::size_t>(std::max(1.0, n));
}

}  // namespace detail

/// One Euler-Maruyama step x + f(x) h + dW.
[[nodiscard]] inline Vec em_step(const Vec& x, double h, const Vec& dw, const ModelSpec& model,
                                 std::size_t step_index = 0) {
  if (!(h > 0.0)) throw InvalidArgument("em_step requires h > 0");
  detail::check_dimension(model, x);
  return detail::checked(x + model.drift(x) * h + dw, step_index, h * static_cast<double>(step_index + 1));
}

/// Log of the single-step Radon-Nikodym factor for spring vector s_term:
/// -<dW, S> - ||S||^2 h / 2.
[[nodiscard]] inline double rn_log_factor(const Vec& dw, const Vec& s_term, double h) {
  if (dw.size() != s_term.size()) throw InvalidArgument("rn_log_factor: dimension mismatch");
  if (!(h > 0.0)) throw InvalidArgument("rn_log_factor requires h > 0");
  return -dot(dw, s_term) - squared_norm(s_term) * h / 2.0;
}

/// Advance the spring-coupled pair from t_{2n} to t_{2n+2}.
///
/// The fine path takes two h-steps, re-evaluating its drift and spring at
/// t_{2n+1}. The coarse path keeps the drift and spring frozen at t_{2n} for
/// both halves, so its endpoint is one 2h step on dW_even + dW_odd. Rf gains
/// one factor per fine step and Rc one factor with step 2h.
[[nodiscard]] inline CoupledPathState coupled_pair_step(const CoupledPathState& state, double h,
                                                        const Vec& dw_even, const Vec& dw_odd,
                                                        const ModelSpec& model,
                                                        const SpringPolicy& policy) {
  if (!(h > 0.0)) throw InvalidArgument("coupled_pair_step requires h > 0");
  const double h2 = 2.0 * h;
  CoupledPathState next = state;

  const Vec& yf0 = state.yf;
  const Vec& yc0 = state.yc;
  const double s0 = spring_coefficient(policy, yf0, yc0);
  const Vec spring_f0 = s0 * (yc0 - yf0);
  const Vec spring_c0 = s0 * (yf0 - yc0);
  const Vec coarse_velocity = model.drift(yc0) + spring_c0;

  // t_{2n+1}
  const Vec yc1 = detail::checked(yc0 + coarse_velocity * h + dw_even, state.step + 1, state.t + h);
  const Vec yf1 = detail::checked(yf0 + (model.drift(yf0) + spring_f0) * h + dw_even,
                                  state.step + 1, state.t + h);
  next.log_rf += rn_log_factor(dw_even, spring_f0, h);

  // t_{2n+2}
  const double s1 = spring_coefficient(policy, yf1, yc1);
  const Vec spring_f1 = s1 * (yc1 - yf1);
  next.yf = detail::checked(yf1 + (model.drift(yf1) + spring_f1) * h + dw_odd, state.step + 2,
                            state.t + h2);
  next.log_rf += rn_log_factor(dw_odd, spring_f1, h);

  const Vec dw_coarse = coarse_increment(dw_even, dw_odd);
  next.yc = detail::checked(yc0 + coarse_velocity * h2 + dw_coarse, state.step + 2, state.t + h2);
  next.log_rc += rn_log_factor(dw_coarse, spring_c0, h2);

  next.yc_anchor = next.yc;
  next.t = state.t + h2;
  next.step = state.step + 2;
  next.cost = state.cost + 3;
  return next;
}

namespace detail {
inline PathResult finish(const ModelSpec& model, const Vec& yf, const Vec& yc, double log_rf,
                         double log_rc, double max_div, std::uint64_t cost, double T) {
  PathResult r;
  r.phi_f = model.observable(yf);
  r.phi_c = model.observable(yc);
  r.log_rf = log_rf;
  r.log_rc = log_rc;
  r.rf = std::exp(log_rf);
  r.rc = std::exp(log_rc);
  r.terminal_divergence = norm(yf - yc);
  r.max_divergence = std::max(max_div, r.terminal_divergence);
  r.cost = cost;
  r.T = T;
  r.yf = yf;
  r.yc = yc;
  return r;
}
}  // namespace detail

/// Spring-coupled fine (step h) / coarse (step 2h) simulation to T with
/// exact Radon-Nikodym weights. T is rounded up to a multiple of 2h.
template <IncrementSource Source>
[[nodiscard]] PathResult simulate_coupled_path(const ModelSpec& model, const SpringPolicy& policy,
                                               double h, double T, Source& source) {
  if (!(h > 0.0)) throw InvalidArgument("simulate_coupled_path requires h > 0");
  const std::size_t pairs = detail::interval_count(T, 2.0 * h);
  const std::size_t m = model.dimension;
  CoupledPathState state = CoupledPathState::start(model.x0);
  double max_div = 0.0;
  for (std::size_t n = 0; n < pairs; ++n) {
    const Vec dw_even = source.next(h, m);
    const Vec dw_odd = source.next(h, m);
    state = coupled_pair_step(state, h, dw_even, dw_odd, model, policy);
    max_div = std::max(max_div, norm(state.yf - state.yc));
  }
  return detail::finish(model, state.yf, state.yc, state.log_rf, state.log_rc, max_div, state.cost,
                        static_cast<double>(pairs) * 2.0 * h);
}

[[nodiscard]] inline PathResult simulate_coupled_path(const ModelSpec& model,
                                                      const SpringPolicy& policy, double h,
                                                      double T, const StreamKey& key) {
  GaussianStream stream(key);
  return simulate_coupled_path(model, policy, h, T, stream);
}

/// Standard MLMC coupling: two fine h-steps against one coarse 2h-step on
/// the summed increment, no spring, Rf = Rc = 1.
template <IncrementSource Source>
[[nodiscard]] PathResult simulate_standard_coupled_path(const ModelSpec& model, double h,
                                                        double T, Source& source) {
  if (!(h > 0.0)) throw InvalidArgument("simulate_standard_coupled_path requires h > 0");
  const std::size_t pairs = detail::interval_count(T, 2.0 * h);
  const std::size_t m = model.dimension;
  const double h2 = 2.0 * h;
  Vec yf = model.x0;
  Vec yc = model.x0;
  double max_div = 0.0;
  for (std::size_t n = 0; n < pairs; ++n) {
    const double t = static_cast<double>(n) * h2;
    const Vec dw_even = source.next(h, m);
    const Vec dw_odd = source.next(h, m);
    const Vec fc = model.drift(yc);
    yf = detail::checked(yf + model.drift(yf) * h + dw_even, 2 * n + 1, t + h);
    yf = detail::checked(yf + model.drift(yf) * h + dw_odd, 2 * n + 2, t + h2);
    yc = detail::checked(yc + fc * h2 + coarse_increment(dw_even, dw_odd), 2 * n + 2, t + h2);
    max_div = std::max(max_div, norm(yf - yc));
  }
  return detail::finish(model, yf, yc, 0.0, 0.0, max_div, 3 * pairs,
                        static_cast<double>(pairs) * h2);
}

[[nodiscard]] inline PathResult simulate_standard_coupled_path(const ModelSpec& model, double h,
                                                               double T, const StreamKey& key) {
  GaussianStream stream(key);
  return simulate_standard_coupled_path(model, h, T, stream);
}

/// Plain Euler-Maruyama to T (rounded up to a multiple of h).
template <IncrementSource Source>
[[nodiscard]] SinglePathResult simulate_single_path(const ModelSpec& model, double h, double T,
                                                    Source& source) {
  if (!(h > 0.0)) throw InvalidArgument("simulate_single_path requires h > 0");
  const std::size_t steps = detail::interval_count(T, h);
  Vec x = model.x0;
  for (std::size_t n = 0; n < steps; ++n) {
    const Vec dw = source.next(h, model.dimension);
    x = detail::checked(x + model.drift(x) * h + dw, n + 1, static_cast<double>(n + 1) * h);
  }
  return {model.observable(x), steps, static_cast<double>(steps) * h, x};
}

[[nodiscard]] inline SinglePathResult simulate_single_path(const ModelSpec& model, double h,
                                                           double T, const StreamKey& key) {
  GaussianStream stream(key);
  return simulate_single_path(model, h, T, stream);
}

// ---------------------------------------------------------------------------
// Adaptive timesteps

namespace detail {

inline double adaptive_step(const ModelSpec& model, const Vec& x, const Vec& fx, double delta) {
  const double h = (*model.adaptive_rule)(x, fx, delta);
  if (!std::isfinite(h) || h < 1e-12 * delta) {
    throw AdaptivityFailure("adaptive step " + std::to_string(h) + " underflows for delta " +
                            std::to_string(delta));
  }
  return h;
}

inline void require_rule(const ModelSpec& model, double delta) {
  if (!model.adaptive_rule) {
    throw UnsupportedOperation("model '" + model.name + "' has no adaptive timestep rule");
  }
  if (!(delta > 0.0)) throw InvalidArgument("adaptive simulation requires delta > 0");
}

/// One path of an adaptive pair between its own step times. Between steps
/// the state moves along its frozen velocity plus the accumulated Brownian
/// increment, which is how the partner path sees it.
struct AdaptiveLeg {
  Vec anchor;
  double t_anchor = 0.0;
  double t_next = 0.0;
  Vec velocity;
  Vec spring;
  Vec dw;
  double log_r = 0.0;

  [[nodiscard]] Vec at(double t) const { return anchor + velocity * (t - t_anchor) + dw; }
  [[nodiscard]] Vec end() const { return anchor + velocity * (t_next - t_anchor) + dw; }
};

}  // namespace detail

/// Adaptive-timestep fine/coarse pair. The fine path steps with
/// h = rule(x, delta), the coarse with rule(x, 2 delta). Brownian increments
/// are drawn on the union of both grids and summed per path-step. Each step's
/// spring uses the partner's state at the step start.
template <IncrementSource Source>
[[nodiscard]] PathResult simulate_adaptive_coupled_path(const ModelSpec& model,
                                                        const SpringPolicy& policy, double delta,
                                                        double T, Source& source) {
  detail::require_rule(model, delta);
  if (!(T > 0.0)) throw InvalidArgument("adaptive simulation requires T > 0");
  const std::size_t m = model.dimension;
  const double coarse_delta = 2.0 * delta;

  detail::AdaptiveLeg fine;
  detail::AdaptiveLeg coarse;
  std::uint64_t cost = 0;
  std::size_t fine_steps = 0;
  double max_div = 0.0;

  auto launch = [&](detail::AdaptiveLeg& leg, const Vec& self, const Vec& partner, double t,
                    double d) {
    const Vec fx = model.drift(self);
    const double s = spring_coefficient(policy, self, partner);
    leg.anchor = self;
    leg.t_anchor = t;
    leg.spring = s * (partner - self);
    leg.velocity = fx + leg.spring;
    leg.dw = Vec(m);
    leg.t_next = std::min(t + detail::adaptive_step(model, self, fx, d), T);
    ++cost;
  };

  launch(fine, model.x0, model.x0, 0.0, delta);
  launch(coarse, model.x0, model.x0, 0.0, coarse_delta);

  double t = 0.0;
  while (t < T) {
    const double t_new = std::min(fine.t_next, coarse.t_next);
    const Vec dw = source.next(t_new - t, m);
    fine.dw += dw;
    coarse.dw += dw;
    t = t_new;
    const bool fine_done = t == fine.t_next;
    const bool coarse_done = t == coarse.t_next;

    Vec yf = fine_done ? fine.end() : fine.at(t);
    Vec yc = coarse_done ? coarse.end() : coarse.at(t);
    if (fine_done) {
      ++fine_steps;
      yf = detail::checked(std::move(yf), fine_steps, t);
      fine.log_r += rn_log_factor(fine.dw, fine.spring, t - fine.t_anchor);
    }
    if (coarse_done) {
      yc = detail::checked(std::move(yc), fine_steps, t);
      coarse.log_r += rn_log_factor(coarse.dw, coarse.spring, t - coarse.t_anchor);
      max_div = std::max(max_div, norm(yf - yc));
    }
    if (t >= T) {
      // Both legs end exactly at T.
      return detail::finish(model, yf, yc, fine.log_r, coarse.log_r, max_div, cost, T);
    }
    if (fine_done) launch(fine, yf, yc, t, delta);
    if (coarse_done) launch(coarse, yc, yf, t, coarse_delta);
  }
  throw AdaptivityFailure("adaptive pair failed to reach T");
}

[[nodiscard]] inline PathResult simulate_adaptive_coupled_path(const ModelSpec& model,
                                                               const SpringPolicy& policy,
                                                               double delta, double T,
                                                               const StreamKey& key) {
  GaussianStream stream(key);
  return simulate_adaptive_coupled_path(model, policy, delta, T, stream);
}

/// Plain Euler-Maruyama with adaptive steps rule(x, delta); the last step is
/// shortened to land on T.
template <IncrementSource Source>
[[nodiscard]] SinglePathResult simulate_adaptive_single_path(const ModelSpec& model, double delta,
                                                             double T, Source& source) {
  detail::require_rule(model, delta);
  if (!(T > 0.0)) throw InvalidArgument("adaptive simulation requires T > 0");
  Vec x = model.x0;
  double t = 0.0;
  std::uint64_t steps = 0;
  while (t < T) {
    const Vec fx = model.drift(x);
    const double t_next = std::min(t + detail::adaptive_step(model, x, fx, delta), T);
    const double h = t_next - t;
    x = detail::checked(x + fx * h + source.next(h, model.dimension), steps + 1, t_next);
    t = t_next;
    ++steps;
  }
  return {model.observable(x), steps, T, x};
}

[[nodiscard]] inline SinglePathResult simulate_adaptive_single_path(const ModelSpec& model,
                                                                    double delta, double T,
                                                                    const StreamKey& key) {
  GaussianStream stream(key);
  return simulate_adaptive_single_path(model, delta, T, stream);
}

}  // namespace emlmc
