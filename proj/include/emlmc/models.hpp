#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "emlmc/errors.hpp"
#include "emlmc/vec.hpp"

namespace emlmc {

using DriftFn = std::function<Vec(const Vec&)>;
using ObservableFn = std::function<double(const Vec&)>;
/// Adaptive step rule h(x, delta). Receives f(x) as well so callers that
/// already evaluated the drift do not pay for it twice.
using StepRule = std::function<double(const Vec& x, const Vec& fx, double delta)>;
/// State-dependent spring coefficient S(x) >= 0.
using SpringRule = std::function<double(const Vec&)>;

/// Structural constants of the drift. Empty optionals mean "unknown".
/// These are metadata for validation only; the integrators never read them.
struct DriftConstants {
  std::optional<double> one_sided_lipschitz;  // lambda
  std::optional<double> dissipativity_alpha;
  std::optional<double> dissipativity_beta;
  std::optional<double> lipschitz;  // K
};

/// An SDE dX = f(X) dt + dW with identity diffusion, plus the observable
/// whose invariant-measure expectation is estimated.
struct ModelSpec {
  std::string name;
  std::size_t dimension = 1;
  DriftFn drift;
  ObservableFn observable;
  Vec x0;
  DriftConstants constants;
  std::optional<StepRule> adaptive_rule;
  /// Optional model-specific adaptive spring, e.g. max(0, f'(x)) in 1-d.
  std::optional<SpringRule> adaptive_spring;
  /// Terminal ||Yf - Yc|| above this counts as a divergent sample.
  double divergence_threshold = 1.0;
};

namespace detail {
inline void check_dimension(const ModelSpec& model, const Vec& x) {
  if (x.size() != model.dimension) {
    throw InvalidArgument("state has dimension " + std::to_string(x.size()) + ", model '" +
                          model.name + "' expects " + std::to_string(model.dimension));
  }
}
}  // namespace detail

[[nodiscard]] inline Vec drift_eval(const ModelSpec& model, const Vec& x) {
  detail::check_dimension(model, x);
  return model.drift(x);
}

[[nodiscard]] inline double observable_eval(const ModelSpec& model, const Vec& x) {
  detail::check_dimension(model, x);
  return model.observable(x);
}

[[nodiscard]] inline double adaptive_timestep(const ModelSpec& model, const Vec& x, double delta) {
  if (!model.adaptive_rule) {
    throw UnsupportedOperation("model '" + model.name + "' has no adaptive timestep rule");
  }
  if (!(delta > 0.0)) throw InvalidArgument("adaptive_timestep: delta must be positive");
  detail::check_dimension(model, x);
  return (*model.adaptive_rule)(x, model.drift(x), delta);
}

// ---------------------------------------------------------------------------
// Spring policies

struct NoSpring {};
struct ConstantSpring {
  double S = 0.0;
};
struct AdaptiveSpring {
  SpringRule rule;
  std::string label = "adaptive";
};

class SpringPolicy {
 public:
  SpringPolicy() = default;

  static SpringPolicy none() { return SpringPolicy{}; }
  static SpringPolicy constant(double S) {
    if (!(S >= 0.0) || !std::isfinite(S)) {
      throw InvalidArgument("spring coefficient must be finite and nonnegative");
    }
    SpringPolicy p;
    p.kind_ = ConstantSpring{S};
    return p;
  }
  static SpringPolicy adaptive(SpringRule rule, std::string label = "adaptive") {
    if (!rule) throw InvalidArgument("adaptive spring rule is empty");
    SpringPolicy p;
    p.kind_ = AdaptiveSpring{std::move(rule), std::move(label)};
    return p;
  }
  /// The model's own adaptive spring rule.
  static SpringPolicy adaptive_for(const ModelSpec& model) {
    if (!model.adaptive_spring) {
      throw UnsupportedOperation("model '" + model.name + "' has no adaptive spring rule");
    }
    return adaptive(*model.adaptive_spring);
  }

  [[nodiscard]] bool is_none() const noexcept {
    if (std::holds_alternative<NoSpring>(kind_)) return true;
    const auto* c = std::get_if<ConstantSpring>(&kind_);
    return c != nullptr && c->S == 0.0;
  }
  [[nodiscard]] bool is_adaptive() const noexcept {
    return std::holds_alternative<AdaptiveSpring>(kind_);
  }
  [[nodiscard]] std::optional<double> constant_value() const noexcept {
    if (std::holds_alternative<NoSpring>(kind_)) return 0.0;
    if (const auto* c = std::get_if<ConstantSpring>(&kind_)) return c->S;
    return std::nullopt;
  }

  /// Coefficient at a given evaluation point. Adaptive rules are clamped to
  /// be nonnegative; a non-finite rule value is an error.
  [[nodiscard]] double at(const Vec& point) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, NoSpring>) {
            return 0.0;
          } else if constexpr (std::is_same_v<K, ConstantSpring>) {
            return k.S;
          } else {
            const double s = k.rule(point);
            if (!std::isfinite(s)) throw InvalidData("adaptive spring rule returned non-finite value");
            return std::max(0.0, s);
          }
        },
        kind_);
  }

  /// "none", "const:<S>" or the adaptive label.
  [[nodiscard]] std::string describe() const {
    if (std::holds_alternative<NoSpring>(kind_)) return "none";
    if (const auto* c = std::get_if<ConstantSpring>(&kind_)) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "const:%.17g", c->S);
      return buf;
    }
    return std::get<AdaptiveSpring>(kind_).label;
  }

 private:
  std::variant<NoSpring, ConstantSpring, AdaptiveSpring> kind_{NoSpring{}};
};

/// Spring coefficient for a fine/coarse pair. Adaptive rules are evaluated at
/// the midpoint so both paths see the same coefficient.
[[nodiscard]] inline double spring_coefficient(const SpringPolicy& policy, const Vec& yf,
                                               const Vec& yc) {
  if (yf.size() != yc.size()) throw InvalidArgument("spring_coefficient: dimension mismatch");
  if (!policy.is_adaptive()) return policy.at(yf);
  return policy.at(0.5 * (yf + yc));
}

/// Warnings about whether the spring restores contractivity (S > lambda/2).
[[nodiscard]] inline std::vector<std::string> spring_warnings(const ModelSpec& model,
                                                              const SpringPolicy& policy) {
  std::vector<std::string> out;
  if (policy.is_none()) return out;
  const auto s = policy.constant_value();
  if (!s) return out;  // adaptive rules switch off where the drift is contractive
  if (!model.constants.one_sided_lipschitz) {
    out.push_back("model '" + model.name +
                  "' has no known one-sided Lipschitz constant; S > lambda/2 not checked");
  } else if (!(*s > *model.constants.one_sided_lipschitz / 2.0)) {
    out.push_back("spring S = " + std::to_string(*s) + " does not exceed lambda/2 = " +
                  std::to_string(*model.constants.one_sided_lipschitz / 2.0) + " for model '" +
                  model.name + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in models

/// B(x) = 65 x / max(65, |x|), the clamp of the Lipschitz-truncated Lorenz
/// drift, written without the division.
[[nodiscard]] inline double lorenz_clamp(double x) noexcept {
  return std::abs(x) <= 65.0 ? x : std::copysign(65.0, x);
}

/// dX = -X dt + dW in 1-d. Stationary law N(0, 1/2), so E|X| = 1/sqrt(pi).
inline ModelSpec make_ou_model() {
  ModelSpec m;
  m.name = "ou";
  m.dimension = 1;
  m.drift = [](const Vec& x) { return Vec{-x[0]}; };
  m.observable = [](const Vec& x) { return std::abs(x[0]); };
  m.x0 = Vec{1.0};
  m.constants.one_sided_lipschitz = 0.0;
  m.constants.dissipativity_alpha = 1.0;
  m.constants.dissipativity_beta = 0.0;
  m.constants.lipschitz = 1.0;
  m.adaptive_rule = [](const Vec&, const Vec&, double delta) { return delta; };
  m.divergence_threshold = 1.0;
  return m;
}

/// dX = (2X - X^3/2) dt + dW. Wells at +-2, phi(x) = x.
inline ModelSpec make_double_well_model() {
  ModelSpec m;
  m.name = "double_well";
  m.dimension = 1;
  m.drift = [](const Vec& x) { return Vec{2.0 * x[0] - 0.5 * x[0] * x[0] * x[0]}; };
  m.observable = [](const Vec& x) { return x[0]; };
  m.x0 = Vec{0.0};
  m.constants.one_sided_lipschitz = 2.0;
  m.adaptive_rule = [](const Vec& x, const Vec& fx, double delta) {
    return std::max(1.0, std::abs(x[0])) / (8.0 * std::max(1.0, std::abs(fx[0]))) * delta;
  };
  // max(0, f'(x))
  m.adaptive_spring = [](const Vec& x) { return std::max(0.0, 2.0 - 1.5 * x[0] * x[0]); };
  m.divergence_threshold = 1.0;
  return m;
}

/// Double well observed through phi(x) = |x|, the distance from the barrier.
inline ModelSpec make_double_well_abs_model() {
  ModelSpec m = make_double_well_model();
  m.name = "double_well_abs";
  m.observable = [](const Vec& x) { return std::abs(x[0]); };
  return m;
}

/// Stochastic Lorenz system with x1, x2 passed through lorenz_clamp where
/// they multiply or drive other components, phi(x) = ||x||.
inline ModelSpec make_truncated_lorenz_model() {
  ModelSpec m;
  m.name = "truncated_lorenz";
  m.dimension = 3;
  m.drift = [](const Vec& x) {
    const double b1 = lorenz_clamp(x[0]);
    const double b2 = lorenz_clamp(x[1]);
    return Vec{10.0 * (b2 - x[0]), (28.0 - x[2]) * b1 - x[1], b1 * x[1] - 8.0 / 3.0 * x[2]};
  };
  m.observable = [](const Vec& x) { return norm(x); };
  m.x0 = Vec{0.0, 0.0, 0.0};
  m.divergence_threshold = 10.0;
  return m;
}

inline double lorenz_step_rule(const Vec& x, const Vec& fx, double delta) {
  return std::max(100.0, squared_norm(x)) / (2048.0 * std::max(100.0, squared_norm(fx))) * delta;
}

/// Full stochastic Lorenz system; neither dissipative nor one-sided Lipschitz.
inline ModelSpec make_lorenz_model() {
  ModelSpec m;
  m.name = "lorenz";
  m.dimension = 3;
  m.drift = [](const Vec& x) {
    return Vec{10.0 * (x[1] - x[0]), x[0] * (28.0 - x[2]) - x[1], x[0] * x[1] - 8.0 / 3.0 * x[2]};
  };
  m.observable = [](const Vec& x) { return norm(x); };
  m.x0 = Vec{0.0, 0.0, 0.0};
  m.adaptive_rule = lorenz_step_rule;
  m.divergence_threshold = 10.0;
  return m;
}

/// f(x) = c in 1-d with phi(x) = x. Not ergodic; used as a degenerate test case.
inline ModelSpec make_constant_drift_model(double c, std::string name = "constant_drift") {
  ModelSpec m;
  m.name = std::move(name);
  m.dimension = 1;
  m.drift = [c](const Vec&) { return Vec{c}; };
  m.observable = [](const Vec& x) { return x[0]; };
  m.x0 = Vec{0.0};
  m.constants.one_sided_lipschitz = 0.0;
  m.constants.lipschitz = 0.0;
  m.adaptive_rule = [](const Vec&, const Vec&, double delta) { return delta / 8.0; };
  return m;
}

/// String-keyed model registry. Register custom models before running any
/// concurrent work; lookups return immutable shared instances.
class ModelRegistry {
 public:
  using Factory = std::function<ModelSpec()>;

  ModelRegistry() {
    add("ou", make_ou_model);
    add("double_well", make_double_well_model);
    add("double_well_abs", make_double_well_abs_model);
    add("truncated_lorenz", make_truncated_lorenz_model);
    add("lorenz", make_lorenz_model);
    add("brownian", [] { return make_constant_drift_model(0.0, "brownian"); });
  }

  void add(const std::string& id, Factory factory) {
    std::lock_guard lock(mu_);
    factories_[id] = std::move(factory);
  }

  [[nodiscard]] std::shared_ptr<const ModelSpec> get(std::string_view id) const {
    std::lock_guard lock(mu_);
    auto it = factories_.find(std::string(id));
    if (it == factories_.end()) {
      throw InvalidArgument("unknown model '" + std::string(id) + "'");
    }
    return std::make_shared<const ModelSpec>(it->second());
  }

  [[nodiscard]] std::vector<std::string> ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [k, _] : factories_) out.push_back(k);
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, Factory> factories_;
};

inline ModelRegistry& default_registry() {
  static ModelRegistry registry;
  return registry;
}

inline std::shared_ptr<const ModelSpec> find_model(std::string_view id) {
  return default_registry().get(id);
}

}  // namespace emlmc
