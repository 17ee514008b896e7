#pragma once

// Spherical harmonic analysis and synthesis on the equiangular grid.
//
// Convention: Y_lm(theta, phi) = lambda_lm(cos theta) e^{i m phi} with the
// Condon-Shortley phase; analysis uses the conjugated kernel, so
// f_lm = integral of f conj(Y_lm).
//
// Analysis is the least-squares inverse of synthesis: per azimuthal order
// the sampled basis has full column rank on the grid, so
//   sht_forward = G^{-1} S^H,    G = S^H S (block diagonal in m),
// which reproduces the coefficients of any bandlimit-L signal exactly and
// makes sht_inverse o sht_forward the orthogonal projection onto the
// bandlimited subspace of grid samples.

#include <complex>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "sphcam/grid.hpp"
#include "sphcam/legendre.hpp"

namespace sphcam {

/// Y_lm(theta, phi), orthonormal over the sphere.
inline cdouble ylm_eval(int l, int m, double theta, double phi) {
  if (!(theta >= 0.0 && theta <= kPi))
    throw Error(ErrorCategory::domain, "ylm_eval: theta outside [0, pi]");
  const double lam = normalized_legendre(l, m, std::cos(theta));
  return lam * std::polar(1.0, m * phi);
}

namespace detail {

inline void check_fits(const HarmonicCoeffs& c, const SphericalGrid& grid) {
  if (c.bandlimit() > grid.bandlimit())
    throw Error(ErrorCategory::dimension,
                "coefficients with bandlimit " + std::to_string(c.bandlimit()) +
                    " do not fit grid with bandlimit " + std::to_string(grid.bandlimit()));
}

inline double sign_of_negative_order(int m) { return (m & 1) ? -1.0 : 1.0; }

/// For each row t and order m in [-(L-1), L-1]:
///   H_m(t) = sum_l c_lm lambda_{l,m}(theta_t)
/// stored at out[t * N + (m mod N)]. When real_input, only m >= 0 is filled.
inline void legendre_synthesis(const HarmonicCoeffs& c, const SphericalGrid& grid,
                               bool conj_symmetric, std::vector<cdouble>& out) {
  const auto& tab = grid.sht_tables();
  const int L = grid.bandlimit(), N = grid.cols(), Lc = c.bandlimit();
  out.assign(static_cast<std::size_t>(L) * N, cdouble{});
  parallel_for(0, static_cast<std::size_t>(L), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    std::vector<double> col(static_cast<std::size_t>(L));
    for (int m = 0; m < Lc; ++m) {
      tab.recurrence.column_from_diagonal(m, tab.cos_theta[t], tab.diagonal(t, m), col);
      cdouble pos{}, neg{};
      for (int l = m; l < Lc; ++l) {
        pos += c(l, m) * col[l - m];
        if (!conj_symmetric && m > 0) neg += c(l, -m) * col[l - m];
      }
      out[static_cast<std::size_t>(t) * N + m] = pos;
      if (!conj_symmetric && m > 0)
        out[static_cast<std::size_t>(t) * N + (N - m)] = sign_of_negative_order(m) * neg;
    }
  });
}

}  // namespace detail

/// Pointwise synthesis f(theta_t, phi_p) = sum_{l<L} sum_m f_lm Y_lm at every
/// grid sample. Coefficients with a smaller bandlimit are zero-padded.
inline ComplexSignal sht_inverse(const HarmonicCoeffs& c, const SphericalGrid& grid) {
  detail::check_fits(c, grid);
  const auto& tab = grid.sht_tables();
  const int L = grid.bandlimit(), N = grid.cols(), Lc = c.bandlimit();
  std::vector<cdouble> H;
  detail::legendre_synthesis(c, grid, false, H);
  ComplexSignal out(grid);
  parallel_for(0, static_cast<std::size_t>(L), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    const cdouble* h = &H[static_cast<std::size_t>(t) * N];
    for (int p = 0; p < N; ++p) {
      cdouble acc = h[0];
      for (int m = 1; m < Lc; ++m) {
        const std::size_t k = static_cast<std::size_t>(m) * p % N;
        // e^{+i m phi_p} = conj(twiddle[k]), e^{-i m phi_p} = twiddle[k]
        acc += h[m] * std::conj(tab.twiddle[k]) + h[N - m] * tab.twiddle[k];
      }
      out(t, p) = acc;
    }
  });
  return out;
}

/// Synthesis for coefficient sets of real signals (conjugate symmetric);
/// only m >= 0 is read.
inline RealSignal sht_inverse_real(const HarmonicCoeffs& c, const SphericalGrid& grid) {
  detail::check_fits(c, grid);
  const auto& tab = grid.sht_tables();
  const int L = grid.bandlimit(), N = grid.cols(), Lc = c.bandlimit();
  std::vector<cdouble> H;
  detail::legendre_synthesis(c, grid, true, H);
  RealSignal out(grid);
  parallel_for(0, static_cast<std::size_t>(L), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    const cdouble* h = &H[static_cast<std::size_t>(t) * N];
    for (int p = 0; p < N; ++p) {
      double acc = h[0].real();
      for (int m = 1; m < Lc; ++m) {
        const std::size_t k = static_cast<std::size_t>(m) * p % N;
        acc += 2.0 * (h[m] * std::conj(tab.twiddle[k])).real();
      }
      out(t, p) = acc;
    }
  });
  return out;
}

/// Adjoint of synthesis: d_lm = sum over samples of x_j conj(Y_lm(s_j)),
/// with no quadrature weighting.
template <class T>
HarmonicCoeffs sht_synthesis_adjoint(const SphericalSignal<T>& x) {
  constexpr bool real_input = std::is_same_v<T, double>;
  const SphericalGrid& grid = x.grid();
  const auto& tab = grid.sht_tables();
  const int L = grid.bandlimit(), N = grid.cols();

  // F[t][m mod N] = sum_p x_tp e^{-i m phi_p}
  std::vector<cdouble> F(static_cast<std::size_t>(L) * N);
  parallel_for(0, static_cast<std::size_t>(L), [&](std::size_t ti) {
    const int t = static_cast<int>(ti);
    cdouble* f = &F[static_cast<std::size_t>(t) * N];
    const int mmax = real_input ? L - 1 : N - 1;
    for (int m = 0; m <= mmax; ++m) {
      cdouble acc{};
      for (int p = 0; p < N; ++p)
        acc += x(t, p) * tab.twiddle[static_cast<std::size_t>(m) * p % N];
      f[m] = acc;
    }
  });

  HarmonicCoeffs out(L);
  parallel_for(0, static_cast<std::size_t>(L), [&](std::size_t mi) {
    const int m = static_cast<int>(mi);
    std::vector<double> col(static_cast<std::size_t>(L - m));
    std::vector<cdouble> pos(static_cast<std::size_t>(L - m)), neg(pos.size());
    for (int t = 0; t < L; ++t) {
      tab.recurrence.column_from_diagonal(m, tab.cos_theta[t], tab.diagonal(t, m), col);
      const cdouble fp = F[static_cast<std::size_t>(t) * N + m];
      const cdouble fn = m > 0 && !real_input ? F[static_cast<std::size_t>(t) * N + (N - m)]
                                              : cdouble{};
      for (int l = m; l < L; ++l) {
        pos[l - m] += col[l - m] * fp;
        if (m > 0 && !real_input) neg[l - m] += col[l - m] * fn;
      }
    }
    const double s = detail::sign_of_negative_order(m);
    for (int l = m; l < L; ++l) {
      out(l, m) = pos[l - m];
      if (m > 0) out(l, -m) = real_input ? s * std::conj(pos[l - m]) : s * neg[l - m];
    }
  });
  return out;
}

/// In-place solve G_m c_m = c_m for every order (the Gram matrices of the
/// sampled basis on the grid with bandlimit c.bandlimit()).
inline void sht_gram_solve(HarmonicCoeffs& c, const SphericalGrid& grid) {
  if (c.bandlimit() != grid.bandlimit())
    throw Error(ErrorCategory::dimension, "gram solve: bandlimit mismatch");
  const auto& tab = grid.sht_tables();
  const int L = grid.bandlimit();
  parallel_for(0, static_cast<std::size_t>(L), [&](std::size_t mi) {
    const int m = static_cast<int>(mi);
    const int k = L - m;
    for (int sgn : {1, -1}) {
      if (m == 0 && sgn < 0) break;
      Eigen::VectorXd re(k), im(k);
      for (int l = m; l < L; ++l) {
        re(l - m) = c(l, sgn * m).real();
        im(l - m) = c(l, sgn * m).imag();
      }
      re = tab.gram[m].solve(re);
      im = tab.gram[m].solve(im);
      for (int l = m; l < L; ++l) c(l, sgn * m) = {re(l - m), im(l - m)};
    }
  });
}

/// Harmonic coefficients of the bandlimited signal through the samples.
template <class T>
HarmonicCoeffs sht_forward(const SphericalSignal<T>& x) {
  HarmonicCoeffs c = sht_synthesis_adjoint(x);
  sht_gram_solve(c, x.grid());
  return c;
}

/// Adjoint of sht_forward restricted to real signals: S G^{-1} d.
inline RealSignal sht_forward_adjoint(const HarmonicCoeffs& d, const SphericalGrid& grid) {
  HarmonicCoeffs c = d;
  if (c.bandlimit() != grid.bandlimit())
    throw Error(ErrorCategory::dimension, "sht_forward_adjoint: bandlimit mismatch");
  sht_gram_solve(c, grid);
  return sht_inverse_real(c, grid);
}

/// Orthogonal projection of grid samples onto bandlimited signals.
inline RealSignal bandlimit_projection(const RealSignal& x) {
  return sht_inverse_real(sht_forward(x), x.grid());
}

/// Synthesis at arbitrary unit directions.
inline std::vector<double> evaluate_real(const HarmonicCoeffs& c, std::span<const Vec3> dirs) {
  const int L = c.bandlimit();
  const LegendreRecurrence rec(L);
  std::vector<double> out(dirs.size());
  parallel_for(0, dirs.size(), [&](std::size_t i) {
    const auto [theta, phi] = to_spherical(dirs[i]);
    const double x = std::cos(theta), s = std::sin(theta);
    std::vector<double> col(static_cast<std::size_t>(L));
    double diag = LegendreRecurrence::first_diagonal();
    double acc = 0.0;
    for (int m = 0; m < L; ++m) {
      if (m > 0) diag = rec.next_diagonal(m, s, diag);
      rec.column_from_diagonal(m, x, diag, col);
      cdouble h{};
      for (int l = m; l < L; ++l) h += c(l, m) * col[l - m];
      const cdouble e = std::polar(1.0, m * phi);
      acc += (m == 0 ? 1.0 : 2.0) * (h * e).real();
    }
    out[i] = acc;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Coefficient text files: header "L=<int>", then "l,m,re,im" per line.

inline void write_coeffs(std::ostream& os, const HarmonicCoeffs& c) {
  os << "L=" << c.bandlimit() << '\n' << std::setprecision(17);
  for (int l = 0; l < c.bandlimit(); ++l)
    for (int m = -l; m <= l; ++m)
      os << l << ',' << m << ',' << c(l, m).real() << ',' << c(l, m).imag() << '\n';
}

inline HarmonicCoeffs read_coeffs(std::istream& is) {
  std::string line;
  int L = -1;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("L=", 0) != 0) throw Error(ErrorCategory::io, "coefficient file: missing L= header");
    L = std::stoi(line.substr(2));
    break;
  }
  if (L < 1) throw Error(ErrorCategory::io, "coefficient file: bad or missing header");
  HarmonicCoeffs c(L);
  std::vector<bool> seen(c.size(), false);
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& s : f)
      if (!std::getline(ss, s, ','))
        throw Error(ErrorCategory::io, "coefficient file: malformed line '" + line + "'");
    const int l = std::stoi(f[0]), m = std::stoi(f[1]);
    if (l < 0 || l >= L || std::abs(m) > l)
      throw Error(ErrorCategory::io, "coefficient file: index out of range in '" + line + "'");
    c(l, m) = {std::stod(f[2]), std::stod(f[3])};
    seen[HarmonicCoeffs::index(l, m)] = true;
  }
  for (bool s : seen)
    if (!s) throw Error(ErrorCategory::io, "coefficient file: missing coefficients");
  return c;
}

inline void save_coeffs(const std::string& path, const HarmonicCoeffs& c) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCategory::io, "cannot write " + path);
  write_coeffs(os, c);
}

inline HarmonicCoeffs load_coeffs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCategory::io, "cannot read " + path);
  return read_coeffs(is);
}

}  // namespace sphcam
