// E|X| under the stationary law of dX = -X dt + dW, which is N(0, 1/2).
// Exact value: 1/sqrt(pi).

#include <cmath>
#include <cstdio>
#include <numbers>

#include "emlmc/estimators.hpp"

int main() {
  using namespace emlmc;
  MlmcConfig cfg;
  cfg.scheme.model = find_model("ou");
  cfg.scheme.spring = SpringPolicy::constant(1.0);
  cfg.scheme.h0 = 0.5;
  cfg.kind = EstimatorKind::kMlmcCom;
  // OU forgets its start at rate 1.
  cfg.target = EpsilonTarget{0.02, ConvergenceRate{1.0, 1.0}};

  const MlmcReport r = estimate(cfg);
  std::printf("estimate %.5f +- %.5f (exact %.5f)\n", r.estimate, r.statistical_error,
              1.0 / std::sqrt(std::numbers::pi));
  std::printf("T %.3f, L %u, cost %llu\n", r.T, r.L, static_cast<unsigned long long>(r.total_cost));
  for (const auto& s : r.levels) {
    std::printf("  level %u  N %-7llu  mean % .3e  var %.3e\n", s.level, static_cast<unsigned long long>(s.N),
                s.mean(), s.variance());
  }
}
