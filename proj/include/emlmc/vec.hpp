#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>

#include "emlmc/errors.hpp"

namespace emlmc {

/// Small fixed-capacity state vector. SDE states here are low dimensional,
/// so values live inline and copies never allocate. Slots past size() are
/// kept at zero, which lets arithmetic run over the full fixed capacity.
class Vec {
 public:
  static constexpr std::size_t kMaxDim = 8;

  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : n_(n) {
    if (n > kMaxDim) {
      throw InvalidArgument("state dimension exceeds Vec::kMaxDim");
    }
    std::fill_n(v_.begin(), n, fill);
  }
  Vec(std::initializer_list<double> values) : Vec(values.size()) {
    std::copy(values.begin(), values.end(), v_.begin());
  }

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  double& operator[](std::size_t i) noexcept { return v_[i]; }
  double operator[](std::size_t i) const noexcept { return v_[i]; }
  [[nodiscard]] const double* begin() const noexcept { return v_.data(); }
  [[nodiscard]] const double* end() const noexcept { return v_.data() + n_; }
  [[nodiscard]] const double* data() const noexcept { return v_.data(); }

  Vec& operator+=(const Vec& o) noexcept {
    for (std::size_t i = 0; i < kMaxDim; ++i) v_[i] += o.v_[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) noexcept {
    for (std::size_t i = 0; i < kMaxDim; ++i) v_[i] -= o.v_[i];
    return *this;
  }
  Vec& operator*=(double a) noexcept {
    for (std::size_t i = 0; i < kMaxDim; ++i) v_[i] *= a;
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) noexcept { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) noexcept { return a -= b; }
  friend Vec operator*(Vec a, double s) noexcept { return a *= s; }
  friend Vec operator*(double s, Vec a) noexcept { return a *= s; }
  friend Vec operator-(Vec a) noexcept { return a *= -1.0; }

  friend bool operator==(const Vec& a, const Vec& b) noexcept {
    return a.n_ == b.n_ && std::equal(a.begin(), a.end(), b.begin());
  }

 private:
  std::array<double, kMaxDim> v_{};
  std::size_t n_ = 0;
};

[[nodiscard]] inline double dot(const Vec& a, const Vec& b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < Vec::kMaxDim; ++i) s += a.data()[i] * b.data()[i];
  return s;
}

[[nodiscard]] inline double squared_norm(const Vec& a) noexcept { return dot(a, a); }

[[nodiscard]] inline double norm(const Vec& a) noexcept { return std::sqrt(dot(a, a)); }

[[nodiscard]] inline bool all_finite(const Vec& a) noexcept {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace emlmc
