#pragma once

// Shared generators for the unit and acceptance tests.

#include <cmath>
#include <complex>
#include <random>

#include "sphcam/grid.hpp"
#include "sphcam/sht.hpp"

namespace sphcam::testing {

/// Seeded coefficients of a real signal (conjugate symmetric), entries ~ N(0, 1).
inline HarmonicCoeffs random_real_coeffs(int L, std::uint64_t seed) {
  CounterRng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  HarmonicCoeffs c(L);
  for (int l = 0; l < L; ++l) {
    c(l, 0) = {n(rng), 0.0};
    for (int m = 1; m <= l; ++m) {
      c(l, m) = {n(rng), n(rng)};
      c(l, -m) = ((m & 1) ? -1.0 : 1.0) * std::conj(c(l, m));
    }
  }
  return c;
}

/// Seeded coefficients with no symmetry (complex signal).
inline HarmonicCoeffs random_complex_coeffs(int L, std::uint64_t seed) {
  CounterRng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  HarmonicCoeffs c(L);
  for (auto& v : c.values()) v = {n(rng), n(rng)};
  return c;
}

/// Coefficients of bandlimit `inner` zero-padded to bandlimit `outer`.
inline HarmonicCoeffs pad(const HarmonicCoeffs& c, int outer) {
  HarmonicCoeffs out(outer);
  for (int l = 0; l < c.bandlimit() && l < outer; ++l)
    for (int m = -l; m <= l; ++m) out(l, m) = c(l, m);
  return out;
}

inline double max_abs_diff(const HarmonicCoeffs& a, const HarmonicCoeffs& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

/// Direct double sum f(theta, phi) = sum_lm c_lm Y_lm(theta, phi).
inline std::complex<double> brute_synthesis(const HarmonicCoeffs& c, double theta, double phi) {
  std::complex<double> acc{};
  for (int l = 0; l < c.bandlimit(); ++l)
    for (int m = -l; m <= l; ++m) acc += c(l, m) * ylm_eval(l, m, theta, phi);
  return acc;
}

}  // namespace sphcam::testing
