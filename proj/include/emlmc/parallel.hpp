#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace emlmc {

/// Calls fn(i) for every i in [begin, end) using up to `workers` threads.
/// Work is handed out in fixed index chunks. If several indices throw, the
/// exception from the smallest index is rethrown, so failures do not depend
/// on scheduling.
template <class Fn>
void parallel_for(std::size_t begin, std::size_t end, unsigned workers, Fn&& fn) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  workers = std::max(1u, workers);
  if (workers == 1 || n == 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  constexpr std::size_t kChunk = 16;
  std::atomic<std::size_t> next{begin};
  std::mutex error_mu;
  std::exception_ptr error;
  std::size_t error_index = std::numeric_limits<std::size_t>::max();

  auto body = [&] {
    for (;;) {
      const std::size_t lo = next.fetch_add(kChunk);
      if (lo >= end) return;
      const std::size_t hi = std::min(end, lo + kChunk);
      for (std::size_t i = lo; i < hi; ++i) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (i < error_index) {
            error_index = i;
            error = std::current_exception();
          }
          break;
        }
      }
    }
  };

  const unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(workers, (n + kChunk - 1) / kChunk));
  {
    std::vector<std::jthread> pool;
    pool.reserve(spawn);
    for (unsigned w = 0; w < spawn; ++w) pool.emplace_back(body);
  }
  if (error) std::rethrow_exception(error);
}

/// Pairwise (cascade) summation in index order. The result depends only on
/// the values and their order.
[[nodiscard]] inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kLeaf = 32;
  if (xs.size() <= kLeaf) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace emlmc
