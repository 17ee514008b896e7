#pragma once

// Isotropic convolution of a scene with a zonal response:
//   (f * g)(r) = int f(s) g(angle(r, s)) ds,
// diagonal in the harmonic basis, (f * g)_lm = ghat_l f_lm.

#include <cmath>
#include <span>
#include <vector>

#include "sphcam/grid.hpp"
#include "sphcam/response.hpp"
#include "sphcam/sht.hpp"

namespace sphcam {

/// Per-degree multipliers ghat_l, l < L.
class SpectralOperator {
 public:
  explicit SpectralOperator(std::vector<double> scaling) : g_(std::move(scaling)) {
    if (g_.empty()) throw Error(ErrorCategory::domain, "spectral operator needs L >= 1");
    for (double v : g_)
      if (!std::isfinite(v)) throw Error(ErrorCategory::domain, "spectral operator has a non-finite entry");
  }

  /// The response's scaling coefficients truncated to L.
  SpectralOperator(const AngularResponse& r, int L)
      : SpectralOperator(std::vector<double>(r.scaling_coeffs().begin(),
                                             r.scaling_coeffs().begin() + check_L(r, L))) {}

  static SpectralOperator identity(int L) {
    return SpectralOperator(std::vector<double>(static_cast<std::size_t>(L), 1.0));
  }

  int bandlimit() const { return static_cast<int>(g_.size()); }
  double operator[](int l) const { return g_[static_cast<std::size_t>(l)]; }
  std::span<const double> scaling() const { return g_; }

 private:
  static int check_L(const AngularResponse& r, int L) {
    if (L < 1 || L > r.bandlimit())
      throw Error(ErrorCategory::dimension, "spectral operator: L exceeds response bandlimit");
    return L;
  }

  std::vector<double> g_;
};

inline HarmonicCoeffs convolve_spectral(const HarmonicCoeffs& f, const SpectralOperator& op) {
  if (f.bandlimit() != op.bandlimit())
    throw Error(ErrorCategory::dimension, "convolve_spectral: coefficients have L=" +
                                              std::to_string(f.bandlimit()) + ", operator L=" +
                                              std::to_string(op.bandlimit()));
  HarmonicCoeffs out = f;
  for (int l = 0; l < f.bandlimit(); ++l)
    for (int m = -l; m <= l; ++m) out(l, m) *= op[l];
  return out;
}

/// Full-grid convolution through the harmonic domain.
inline RealSignal convolve_grid(const RealSignal& f, const SpectralOperator& op) {
  return sht_inverse_real(convolve_spectral(sht_forward(f), op), f.grid());
}

namespace detail {

inline void check_unit(std::span<const Vec3> dirs) {
  for (std::size_t i = 0; i < dirs.size(); ++i)
    if (std::abs(norm(dirs[i]) - 1.0) > 1e-9)
      throw Error(ErrorCategory::domain, "orientation " + std::to_string(i) + " is not unit norm");
}

}  // namespace detail

/// Direct quadrature of the convolution integral with the grid weights:
///   out[i] = sum_j w_j g(arccos(r_i . s_j)) f(s_j).
/// Exact when g(angle(r, .)) f is bandlimited on f's grid.
inline std::vector<double> convolve_bruteforce(const RealSignal& f, const AngularResponse& g,
                                               std::span<const Vec3> orientations) {
  detail::check_unit(orientations);
  const auto& grid = f.grid();
  std::vector<Vec3> dirs(grid.size());
  for (std::size_t j = 0; j < dirs.size(); ++j) dirs[j] = grid.direction(j);
  std::vector<double> out(orientations.size());
  parallel_for(0, orientations.size(), [&](std::size_t i) {
    double acc = 0.0;
    for (int t = 0; t < grid.rows(); ++t) {
      double row = 0.0;
      for (int p = 0; p < grid.cols(); ++p) {
        const std::size_t j = grid.index(t, p);
        const double v = f[j];
        if (v == 0.0) continue;
        row += g(angle_between(orientations[i], dirs[j])) * v;
      }
      acc += grid.weight(t) * row;
    }
    out[i] = acc;
  });
  return out;
}

}  // namespace sphcam
