#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

#include "emlmc/errors.hpp"
#include "emlmc/vec.hpp"

namespace emlmc {

/// Seed used when none is supplied on the command line or in a config.
inline constexpr std::uint64_t kDefaultMasterSeed = 20190612;

/// Identifies one path's Brownian stream. A stream is a pure function of the
/// key, so any path can be regenerated without touching its neighbours.
struct StreamKey {
  std::uint64_t master_seed = kDefaultMasterSeed;
  std::uint32_t level = 0;
  std::uint64_t path_index = 0;
  std::uint32_t replica_tag = 0;
};

/// Anything that hands out Brownian increments of a given step length.
template <class S>
concept IncrementSource = requires(S s, double h, std::size_t m) {
  { s.next(h, m) } -> std::same_as<Vec>;
};

/// N(0, h I) increments: ziggurat normals over a 64-bit Mersenne Twister
/// seeded by every field of a StreamKey through std::seed_seq.
class GaussianStream {
 public:
  explicit GaussianStream(const StreamKey& key) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(key.master_seed),
        static_cast<std::uint32_t>(key.master_seed >> 32),
        key.level,
        static_cast<std::uint32_t>(key.path_index),
        static_cast<std::uint32_t>(key.path_index >> 32),
        key.replica_tag,
    };
    engine_.seed(seq);
  }

  /// One Brownian increment over a step of length h.
  [[nodiscard]] Vec next(double h, std::size_t m) {
    if (!(h > 0.0)) throw InvalidArgument("gaussian increment requires h > 0");
    const double sd = std::sqrt(h);
    Vec out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = sd * normal_(engine_);
    return out;
  }

  /// A standard normal draw; the building block for increments over
  /// arbitrary sub-intervals.
  [[nodiscard]] double standard_normal() { return normal_(engine_); }

 private:
  std::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

[[nodiscard]] inline Vec gaussian_increment(GaussianStream& stream, double h, std::size_t m) {
  return stream.next(h, m);
}

/// Increment of the coarse path over a pair of fine steps.
[[nodiscard]] inline Vec coarse_increment(const Vec& dw_even, const Vec& dw_odd) {
  if (dw_even.size() != dw_odd.size()) {
    throw InvalidArgument("coarse_increment: dimension mismatch");
  }
  return dw_even + dw_odd;
}

/// Deterministic all-zero increments.
struct ZeroIncrements {
  [[nodiscard]] Vec next(double h, std::size_t m) const {
    if (!(h > 0.0)) throw InvalidArgument("increment requires h > 0");
    return Vec(m);
  }
};

}  // namespace emlmc
