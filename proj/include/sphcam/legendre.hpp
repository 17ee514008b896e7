#pragma once

// Associated Legendre functions and Gauss-Legendre quadrature.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sphcam/core.hpp"

namespace sphcam {

namespace detail {

inline void check_legendre_args(int l, int m, double x) {
  if (l < 0 || std::abs(m) > l)
    throw Error(ErrorCategory::domain, "legendre: need 0 <= |m| <= l, got l=" +
                                           std::to_string(l) + " m=" + std::to_string(m));
  if (!(std::abs(x) <= 1.0))
    throw Error(ErrorCategory::domain, "legendre: |x| > 1");
}

}  // namespace detail

/// Associated Legendre function P_l^m(x), Condon-Shortley phase included
/// (P_1^1(x) = -sqrt(1 - x^2)). Negative orders use
/// P_l^{-m} = (-1)^m (l-m)!/(l+m)! P_l^m. Unnormalized values grow like
/// (2m-1)!!, so for large m prefer normalized_legendre.
inline double assoc_legendre(int l, int m, double x) {
  detail::check_legendre_args(l, m, x);
  if (m < 0) {
    const int mm = -m;
    double ratio = 1.0;  // (l-mm)!/(l+mm)!
    for (int k = l - mm + 1; k <= l + mm; ++k) ratio /= k;
    return ((mm & 1) ? -1.0 : 1.0) * ratio * assoc_legendre(l, mm, x);
  }
  double pmm = 1.0;
  if (m > 0) {
    const double s = std::sqrt((1.0 - x) * (1.0 + x));
    double odd = 1.0;
    for (int k = 1; k <= m; ++k) {
      pmm *= -odd * s;
      odd += 2.0;
    }
  }
  if (l == m) return pmm;
  double pm1 = x * (2 * m + 1) * pmm;
  if (l == m + 1) return pm1;
  double pl = 0.0;
  for (int ll = m + 2; ll <= l; ++ll) {
    pl = ((2 * ll - 1) * x * pm1 - (ll + m - 1) * pmm) / (ll - m);
    pmm = pm1;
    pm1 = pl;
  }
  return pl;
}

/// Recurrence tables for the orthonormal functions
///   lambda_lm(x) = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(x),
/// so that Y_lm(theta, phi) = lambda_lm(cos theta) e^{i m phi}. The
/// recurrence runs on normalized values only and does not overflow.
class LegendreRecurrence {
 public:
  explicit LegendreRecurrence(int bandlimit)
      : L_(bandlimit),
        a_(static_cast<std::size_t>(bandlimit) * bandlimit, 0.0),
        b_(static_cast<std::size_t>(bandlimit) * bandlimit, 0.0),
        diag_(static_cast<std::size_t>(bandlimit), 0.0) {
    for (int m = 0; m < L_; ++m) {
      diag_[m] = m == 0 ? 0.0 : -std::sqrt((2.0 * m + 1.0) / (2.0 * m));
      for (int l = m + 1; l < L_; ++l) {
        const double ll = l, mm = m;
        a_[idx(l, m)] = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
        b_[idx(l, m)] = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) /
                                  (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
      }
    }
  }

  int bandlimit() const { return L_; }

  static double first_diagonal() { return 0.5 / std::sqrt(kPi); }

  /// lambda_mm from lambda_{m-1,m-1}.
  double next_diagonal(int m, double sin_theta, double previous) const {
    return diag_[m] * sin_theta * previous;
  }

  /// lambda_mm(cos theta), computed from scratch.
  double diagonal(int m, double sin_theta) const {
    double d = first_diagonal();
    for (int k = 1; k <= m; ++k) d = next_diagonal(k, sin_theta, d);
    return d;
  }

  /// out[l - m] = lambda_lm(x) for l = m .. L-1, starting from lambda_mm.
  void column_from_diagonal(int m, double x, double diag, std::span<double> out) const {
    if (m >= L_) return;
    out[0] = diag;
    if (m + 1 >= L_) return;
    double prev2 = 0.0, prev1 = diag;
    for (int l = m + 1; l < L_; ++l) {
      const double v = a_[idx(l, m)] * (x * prev1 - b_[idx(l, m)] * prev2);
      out[l - m] = v;
      prev2 = prev1;
      prev1 = v;
    }
  }

  void column(int m, double x, double sin_theta, std::span<double> out) const {
    column_from_diagonal(m, x, diagonal(m, sin_theta), out);
  }

 private:
  std::size_t idx(int l, int m) const { return static_cast<std::size_t>(l) * L_ + m; }

  int L_;
  std::vector<double> a_, b_, diag_;
};

/// Orthonormal lambda_lm(x) for a single (l, m); negative m follows
/// lambda_{l,-m} = (-1)^m lambda_lm.
inline double normalized_legendre(int l, int m, double x) {
  detail::check_legendre_args(l, m, x);
  const int mm = std::abs(m);
  const LegendreRecurrence rec(l + 1);
  std::vector<double> col(static_cast<std::size_t>(l - mm + 1));
  rec.column(mm, x, std::sqrt((1.0 - x) * (1.0 + x)), col);
  const double v = col.back();
  return (m < 0 && (mm & 1)) ? -v : v;
}

struct GaussLegendreRule {
  std::vector<double> nodes;    // ascending in (-1, 1)
  std::vector<double> weights;  // sum to 2
};

/// n-point Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree 2n-1.
inline GaussLegendreRule gauss_legendre(int n) {
  if (n < 1) throw Error(ErrorCategory::domain, "gauss_legendre: n must be >= 1");
  GaussLegendreRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0, p1 = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
    }
    dp = n * (z * p0 - p1) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -z;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = z;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

}  // namespace sphcam
