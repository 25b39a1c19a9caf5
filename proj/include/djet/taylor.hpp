#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace djet {

/// Truncated univariate Taylor arithmetic: value plus derivatives up to a
/// fixed order, propagated exactly through compositions. Used to evaluate
/// cutoff ramps and their derivatives in closed form.
template <std::size_t K>
struct Taylor {
  // c[k] = f^(k)(t0) / k!
  std::array<double, K + 1> c{};

  static Taylor constant(double v) {
    Taylor t;
    t.c[0] = v;
    return t;
  }
  static Taylor variable(double v) {
    Taylor t;
    t.c[0] = v;
    if constexpr (K >= 1) t.c[1] = 1.0;
    return t;
  }

  double derivative(std::size_t k) const {
    double f = 1.0;
    for (std::size_t j = 2; j <= k; ++j) f *= double(j);
    return c[k] * f;
  }

  friend Taylor operator+(const Taylor& a, const Taylor& b) {
    Taylor r;
    for (std::size_t k = 0; k <= K; ++k) r.c[k] = a.c[k] + b.c[k];
    return r;
  }
  friend Taylor operator-(const Taylor& a, const Taylor& b) {
    Taylor r;
    for (std::size_t k = 0; k <= K; ++k) r.c[k] = a.c[k] - b.c[k];
    return r;
  }
  friend Taylor operator*(const Taylor& a, const Taylor& b) {
    Taylor r;
    for (std::size_t k = 0; k <= K; ++k)
      for (std::size_t j = 0; j <= k; ++j) r.c[k] += a.c[j] * b.c[k - j];
    return r;
  }
  friend Taylor operator*(double s, const Taylor& a) {
    Taylor r;
    for (std::size_t k = 0; k <= K; ++k) r.c[k] = s * a.c[k];
    return r;
  }
  friend Taylor operator-(const Taylor& a) { return -1.0 * a; }

  /// 1/a, requires a.c[0] != 0.
  Taylor reciprocal() const {
    Taylor r;
    r.c[0] = 1.0 / c[0];
    for (std::size_t k = 1; k <= K; ++k) {
      double s = 0.0;
      for (std::size_t j = 1; j <= k; ++j) s += c[j] * r.c[k - j];
      r.c[k] = -s / c[0];
    }
    return r;
  }
  friend Taylor operator/(const Taylor& a, const Taylor& b) {
    return a * b.reciprocal();
  }
};

/// exp(a) via the standard recurrence for Taylor coefficients.
template <std::size_t K>
Taylor<K> texp(const Taylor<K>& a) {
  Taylor<K> r;
  r.c[0] = std::exp(a.c[0]);
  for (std::size_t k = 1; k <= K; ++k) {
    double s = 0.0;
    for (std::size_t j = 1; j <= k; ++j) s += double(j) * a.c[j] * r.c[k - j];
    r.c[k] = s / double(k);
  }
  return r;
}

}  // namespace djet
