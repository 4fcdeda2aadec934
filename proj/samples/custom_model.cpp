// Registering a model of your own: a 2-d gradient flow with a quartic
// confining potential, observable ||x||^2. The invariant density is
// proportional to exp(-||x||^4 / 2), so E ||X||^2 = sqrt(2 / pi) = 0.7979.

#include <cstdio>

#include "emlmc/estimators.hpp"

int main() {
  using namespace emlmc;
  ModelRegistry registry;
  registry.add("quartic2d", [] {
    ModelSpec m;
    m.name = "quartic2d";
    m.dimension = 2;
    m.x0 = Vec{1.0, -1.0};
    m.drift = [](const Vec& x) {
      const double r2 = squared_norm(x);
      return -(r2 * x);
    };
    m.observable = [](const Vec& x) { return squared_norm(x); };
    m.constants.one_sided_lipschitz = 0.0;
    m.divergence_threshold = 1.0;
    return m;
  });

  MlmcConfig cfg;
  cfg.scheme.model = registry.get("quartic2d");
  cfg.scheme.spring = SpringPolicy::constant(1.0);
  cfg.scheme.h0 = 0.125;
  cfg.target = EpsilonTarget{0.02, FixedHorizon{8.0}};

  const MlmcReport r = estimate(cfg);
  std::printf("E||X||^2 ~ %.4f +- %.4f  (L %u, cost %llu)\n", r.estimate, r.statistical_error, r.L,
              static_cast<unsigned long long>(r.total_cost));
}
