#pragma once

// Azimuthally symmetric pixel responses g(theta), the binary ring masks that
// shape them, and the spectral figures of merit used to compare them.
//
// A response is a base sensitivity profile multiplied by a piecewise
// constant transmittance over colatitude. Its order-0 coefficients are
//   g_l0 = 2 pi int_0^pi g(theta) lambda_l0(cos theta) sin theta dtheta
// and the convolution scaling is ghat_l = sqrt(4 pi/(2l+1)) g_l0.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sphcam/core.hpp"
#include "sphcam/legendre.hpp"

namespace sphcam {

/// Sensitivity of the bare pixel as a function of incidence angle.
class BaseProfile {
 public:
  enum class Kind { cosine, uniform, tabulated, function };

  /// cos(theta) up to pi/2, zero beyond. The default base.
  static BaseProfile cosine() { return BaseProfile(Kind::cosine); }

  /// g = 1 everywhere.
  static BaseProfile uniform() { return BaseProfile(Kind::uniform); }

  /// Piecewise linear through (theta[k], g[k]), theta nondecreasing in
  /// [0, pi]. A repeated theta is a jump. Zero outside the table.
  static BaseProfile tabulated(std::vector<double> theta, std::vector<double> g) {
    if (theta.size() != g.size() || theta.size() < 2)
      throw Error(ErrorCategory::dimension, "tabulated profile needs >= 2 matching (theta, g) pairs");
    for (std::size_t k = 0; k < theta.size(); ++k) {
      if (!(theta[k] >= 0.0 && theta[k] <= kPi + 1e-12))
        throw Error(ErrorCategory::domain, "tabulated profile: theta outside [0, pi]");
      if (k > 0 && theta[k] < theta[k - 1])
        throw Error(ErrorCategory::domain, "tabulated profile: theta must be nondecreasing");
      if (!(g[k] >= 0.0) || !std::isfinite(g[k]))
        throw Error(ErrorCategory::domain, "tabulated profile: negative or non-finite value");
    }
    BaseProfile b(Kind::tabulated);
    b.table_ = std::make_shared<Table>(Table{std::move(theta), std::move(g)});
    return b;
  }

  /// Arbitrary smooth g(theta) >= 0. Quadrature treats it as smooth between
  /// the optional breakpoints.
  static BaseProfile function(std::function<double(double)> f, std::vector<double> breakpoints = {}) {
    BaseProfile b(Kind::function);
    for (int k = 0; k <= 1024; ++k) {
      const double v = f(kPi * k / 1024.0);
      if (!(v >= 0.0) || !std::isfinite(v))
        throw Error(ErrorCategory::domain, "base profile takes a negative or non-finite value");
    }
    std::sort(breakpoints.begin(), breakpoints.end());
    b.fn_ = std::make_shared<Function>(Function{std::move(f), std::move(breakpoints)});
    return b;
  }

  Kind kind() const { return kind_; }

  double operator()(double theta) const {
    switch (kind_) {
      case Kind::cosine: return theta <= kPi / 2 ? std::max(0.0, std::cos(theta)) : 0.0;
      case Kind::uniform: return 1.0;
      case Kind::tabulated: return table_value(theta);
      case Kind::function: return fn_->f(theta);
    }
    return 0.0;
  }

  /// out[l] += 2 pi int_a^b base(theta) lambda_l0(cos theta) sin theta dtheta, l < out.size().
  void add_moments(double a, double b, std::span<double> out) const {
    a = std::max(a, 0.0);
    b = std::min(b, kPi);
    if (!(b > a) || out.empty()) return;
    const LegendreRecurrence rec(static_cast<int>(out.size()));
    switch (kind_) {
      case Kind::cosine:
        b = std::min(b, kPi / 2);
        if (b > a) add_polynomial(a, b, rec, true, out);
        return;
      case Kind::uniform: add_polynomial(a, b, rec, false, out); return;
      case Kind::tabulated: {
        const auto& th = table_->theta;
        for (std::size_t k = 0; k + 1 < th.size(); ++k) {
          const double lo = std::max(a, th[k]), hi = std::min(b, th[k + 1]);
          if (hi > lo) add_smooth(lo, hi, rec, out);
        }
        return;
      }
      case Kind::function: {
        std::vector<double> cuts{a};
        for (double t : fn_->breakpoints)
          if (t > a && t < b) cuts.push_back(t);
        cuts.push_back(b);
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) add_smooth(cuts[k], cuts[k + 1], rec, out);
        return;
      }
    }
  }

  /// Points where the profile may be discontinuous or kinked.
  std::vector<double> breakpoints() const {
    switch (kind_) {
      case Kind::cosine: return {kPi / 2};
      case Kind::uniform: return {};
      case Kind::tabulated: return table_->theta;
      case Kind::function: return fn_->breakpoints;
    }
    return {};
  }

 private:
  struct Table {
    std::vector<double> theta, g;
  };
  struct Function {
    std::function<double(double)> f;
    std::vector<double> breakpoints;
  };

  explicit BaseProfile(Kind k) : kind_(k) {}

  double table_value(double theta) const {
    const auto& th = table_->theta;
    const auto& g = table_->g;
    if (theta < th.front() || theta > th.back()) return 0.0;
    // last k with th[k] <= theta, so at a repeated theta the right value wins
    const auto it = std::upper_bound(th.begin(), th.end(), theta);
    const std::size_t k = static_cast<std::size_t>(it - th.begin()) - 1;
    if (k + 1 >= th.size()) return g.back();
    const double h = th[k + 1] - th[k];
    if (h <= 0.0) return g[k + 1];
    const double u = (theta - th[k]) / h;
    return (1.0 - u) * g[k] + u * g[k + 1];
  }

  // For the cosine and uniform bases the integrand is a polynomial in
  // x = cos theta of degree <= L, so Gauss-Legendre in x is exact.
  static void add_polynomial(double a, double b, const LegendreRecurrence& rec, bool times_x,
                             std::span<double> out) {
    const int L = rec.bandlimit();
    const double x0 = std::cos(b), x1 = std::cos(a);
    const auto rule = gauss_legendre(L / 2 + 2);
    std::vector<double> col(static_cast<std::size_t>(L));
    const double half = 0.5 * (x1 - x0), mid = 0.5 * (x1 + x0);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double x = mid + half * rule.nodes[q];
      rec.column(0, x, 0.0, col);
      const double w = kTwoPi * half * rule.weights[q] * (times_x ? x : 1.0);
      for (int l = 0; l < L; ++l) out[l] += w * col[l];
    }
  }

  // Gauss-Legendre in theta on subintervals short enough that the
  // degree-L trigonometric factor is resolved to rounding.
  void add_smooth(double a, double b, const LegendreRecurrence& rec, std::span<double> out) const {
    const int L = rec.bandlimit();
    const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / 0.125)));
    const double h = (b - a) / pieces;
    const int n = 12 + static_cast<int>(std::ceil(L * h));
    const auto rule = gauss_legendre(n);
    std::vector<double> col(static_cast<std::size_t>(L));
    for (int p = 0; p < pieces; ++p) {
      const double lo = a + p * h;
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double theta = lo + 0.5 * h * (rule.nodes[q] + 1.0);
        const double g = (*this)(theta);
        if (g == 0.0) continue;
        rec.column(0, std::cos(theta), 0.0, col);
        const double w = kTwoPi * 0.5 * h * rule.weights[q] * g * std::sin(theta);
        for (int l = 0; l < L; ++l) out[l] += w * col[l];
      }
    }
  }

  Kind kind_;
  std::shared_ptr<const Table> table_;
  std::shared_ptr<const Function> fn_;
};

/// N-bit annular code over a cone of half-angle alpha. bits[0] is the
/// innermost ring and the most significant bit of code().
struct BinaryMask {
  std::vector<int> bits;
  double half_aperture_deg = 10.0;

  BinaryMask() = default;
  BinaryMask(std::vector<int> b, double alpha_deg) : bits(std::move(b)), half_aperture_deg(alpha_deg) {
    validate();
  }

  static BinaryMask from_code(std::uint64_t code, int n_bits, double alpha_deg) {
    if (n_bits < 1 || n_bits > 64)
      throw Error(ErrorCategory::domain, "mask bit count must be in [1, 64]");
    std::vector<int> b(static_cast<std::size_t>(n_bits));
    for (int i = 0; i < n_bits; ++i) b[i] = static_cast<int>((code >> (n_bits - 1 - i)) & 1u);
    return BinaryMask(std::move(b), alpha_deg);
  }

  void validate() const {
    if (bits.empty()) throw Error(ErrorCategory::domain, "mask has no bits");
    if (bits.size() > 64) throw Error(ErrorCategory::domain, "mask has more than 64 bits");
    for (int b : bits)
      if (b != 0 && b != 1) throw Error(ErrorCategory::domain, "mask bits must be 0 or 1");
    if (!(half_aperture_deg > 0.0 && half_aperture_deg <= 90.0))
      throw Error(ErrorCategory::domain, "mask half-aperture must be in (0, 90] degrees");
  }

  int size() const { return static_cast<int>(bits.size()); }

  std::uint64_t code() const {
    std::uint64_t c = 0;
    for (int b : bits) c = (c << 1) | static_cast<std::uint64_t>(b);
    return c;
  }

  std::string to_string() const {
    std::string s;
    for (int b : bits) s += b ? '1' : '0';
    return s;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Constant-transmittance stretch of a response: g = scale * base on [lo, hi).
struct ResponsePiece {
  double lo, hi, scale;
};

/// g(theta) = piece scale * base(theta), plus its coefficients for l < L.
class AngularResponse {
 public:
  AngularResponse(BaseProfile base, std::vector<ResponsePiece> pieces, int bandlimit)
      : base_(std::move(base)), pieces_(std::move(pieces)) {
    if (bandlimit < 1) throw Error(ErrorCategory::domain, "response bandlimit must be >= 1");
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      const auto& p = pieces_[k];
      if (!(p.lo >= 0.0 && p.hi <= kPi + 1e-12 && p.hi >= p.lo))
        throw Error(ErrorCategory::domain, "response piece outside [0, pi]");
      if (!(p.scale >= 0.0)) throw Error(ErrorCategory::domain, "negative response transmittance");
      if (k > 0 && p.lo < pieces_[k - 1].hi)
        throw Error(ErrorCategory::domain, "response pieces overlap");
    }
    compute(bandlimit);
  }

  int bandlimit() const { return static_cast<int>(zonal_.size()); }
  const BaseProfile& base() const { return base_; }
  const std::vector<ResponsePiece>& pieces() const { return pieces_; }

  /// g(theta); theta in [0, pi].
  double operator()(double theta) const {
    // last piece with lo <= theta
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), theta,
                               [](double t, const ResponsePiece& p) { return t < p.lo; });
    if (it == pieces_.begin()) return 0.0;
    --it;
    const bool inside = theta < it->hi || (theta == it->hi && std::next(it) == pieces_.end());
    return inside && it->scale != 0.0 ? it->scale * base_(theta) : 0.0;
  }

  /// Largest colatitude where g can be nonzero.
  double support() const { return pieces_.empty() ? 0.0 : pieces_.back().hi; }

  std::span<const double> zonal_coeffs() const { return zonal_; }
  std::span<const double> scaling_coeffs() const { return scaling_; }
  double scaling(int l) const { return scaling_[static_cast<std::size_t>(l)]; }

  AngularResponse scaled(double c) const {
    if (!(c >= 0.0)) throw Error(ErrorCategory::domain, "response scale must be >= 0");
    auto p = pieces_;
    for (auto& q : p) q.scale *= c;
    return AngularResponse(base_, std::move(p), bandlimit());
  }

  AngularResponse with_bandlimit(int L) const { return AngularResponse(base_, pieces_, L); }

  /// (theta, g) samples over [0, pi] for the response CSV; every
  /// discontinuity appears as a repeated theta (left value, then right).
  std::vector<std::pair<double, double>> tabulate(int samples = 4096) const {
    std::vector<std::pair<double, double>> rows;
    double cursor = 0.0;
    auto emit_span = [&](double lo, double hi, double scale) {
      const int n = std::max(1, static_cast<int>(std::ceil(samples * (hi - lo) / kPi)));
      for (int k = 0; k <= n; ++k) {
        const double t = k == n ? hi : lo + (hi - lo) * k / n;
        rows.emplace_back(t, scale == 0.0 ? 0.0 : scale * base_(t));
      }
    };
    for (const auto& p : pieces_) {
      if (p.lo > cursor) emit_span(cursor, p.lo, 0.0);
      if (p.hi > p.lo) emit_span(p.lo, p.hi, p.scale);
      cursor = p.hi;
    }
    if (cursor < kPi) emit_span(cursor, kPi, 0.0);
    return rows;
  }

 private:
  void compute(int L) {
    zonal_.assign(static_cast<std::size_t>(L), 0.0);
    std::vector<double> tmp(static_cast<std::size_t>(L));
    for (const auto& p : pieces_) {
      if (p.scale == 0.0 || p.hi <= p.lo) continue;
      std::fill(tmp.begin(), tmp.end(), 0.0);
      base_.add_moments(p.lo, p.hi, tmp);
      for (int l = 0; l < L; ++l) zonal_[l] += p.scale * tmp[l];
    }
    scaling_.resize(zonal_.size());
    for (int l = 0; l < L; ++l) scaling_[l] = std::sqrt(kFourPi / (2.0 * l + 1.0)) * zonal_[l];
  }

  BaseProfile base_;
  std::vector<ResponsePiece> pieces_;
  std::vector<double> zonal_, scaling_;
};

/// Ring i covers [alpha i/N, alpha (i+1)/N).
inline std::vector<ResponsePiece> ring_pieces(const BinaryMask& mask) {
  mask.validate();
  const int N = mask.size();
  const double alpha = deg_to_rad(mask.half_aperture_deg);
  std::vector<ResponsePiece> p(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i)
    p[i] = {alpha * i / N, i + 1 == N ? alpha : alpha * (i + 1) / N, static_cast<double>(mask.bits[i])};
  return p;
}

inline AngularResponse mask_to_response(const BinaryMask& mask, int L,
                                        const BaseProfile& base = BaseProfile::cosine()) {
  return AngularResponse(base, ring_pieces(mask), L);
}

/// Unobstructed cone of the given half-angle (may exceed 90 degrees).
inline AngularResponse open_aperture(double half_angle_deg, int L,
                                     const BaseProfile& base = BaseProfile::cosine()) {
  if (!(half_angle_deg > 0.0 && half_angle_deg <= 180.0))
    throw Error(ErrorCategory::domain, "aperture half-angle must be in (0, 180] degrees");
  return AngularResponse(base, {{0.0, deg_to_rad(half_angle_deg), 1.0}}, L);
}

/// The base profile itself over the whole sphere.
inline AngularResponse profile_response(const BaseProfile& base, int L) {
  return AngularResponse(base, {{0.0, kPi, 1.0}}, L);
}

/// moments(i, l): zonal coefficient contribution of ring i at unit
/// transmittance, so g_l0 = sum_i bits[i] moments(i, l).
inline std::vector<std::vector<double>> ring_moments(int n_bits, double half_aperture_deg, int L,
                                                     const BaseProfile& base = BaseProfile::cosine()) {
  const auto pieces = ring_pieces(BinaryMask(std::vector<int>(static_cast<std::size_t>(n_bits), 1),
                                             half_aperture_deg));
  std::vector<std::vector<double>> S(pieces.size(), std::vector<double>(static_cast<std::size_t>(L)));
  for (std::size_t i = 0; i < pieces.size(); ++i) base.add_moments(pieces[i].lo, pieces[i].hi, S[i]);
  return S;
}

// ---------------------------------------------------------------------------
// Figures of merit

/// (sum_l ghat_l^-2)^-1; exactly 0 when some ghat_l vanishes.
inline double robustness(std::span<const double> scaling) {
  double s = 0.0;
  for (double g : scaling) {
    if (g == 0.0) return 0.0;
    s += 1.0 / (g * g);
  }
  return 1.0 / s;
}

inline double robustness(const AngularResponse& r, int L) {
  if (L < 1 || L > r.bandlimit())
    throw Error(ErrorCategory::dimension, "robustness: L=" + std::to_string(L) +
                                              " exceeds response bandlimit " +
                                              std::to_string(r.bandlimit()));
  return robustness(r.scaling_coeffs().first(static_cast<std::size_t>(L)));
}

/// Steradians: sqrt(4 pi) g_00.
inline double light_throughput(const AngularResponse& r) {
  return std::sqrt(kFourPi) * r.zonal_coeffs()[0];
}

/// Expected squared coefficient error of direct inversion under white noise
/// of per-coefficient variance noise_power; +inf when some ghat_l vanishes.
inline double expected_recon_error(std::span<const double> scaling, double noise_power) {
  if (noise_power == 0.0) return 0.0;
  double s = 0.0;
  for (std::size_t l = 0; l < scaling.size(); ++l) {
    const double g = scaling[l];
    if (g == 0.0) return std::numeric_limits<double>::infinity();
    s += (2.0 * static_cast<double>(l) + 1.0) / (g * g);
  }
  return noise_power * s;
}

inline double expected_recon_error(const AngularResponse& r, int L, double noise_power) {
  if (L < 1 || L > r.bandlimit())
    throw Error(ErrorCategory::dimension, "expected_recon_error: L exceeds response bandlimit");
  return expected_recon_error(r.scaling_coeffs().first(static_cast<std::size_t>(L)), noise_power);
}

// ---------------------------------------------------------------------------
// Files

inline void write_mask(std::ostream& os, const BinaryMask& m) {
  os << "alpha_deg=" << std::setprecision(17) << m.half_aperture_deg << "\n";
  for (std::size_t i = 0; i < m.bits.size(); ++i) os << (i ? "," : "") << m.bits[i];
  os << "\n";
}

inline BinaryMask read_mask(std::istream& is) {
  std::string line;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> bits;
  bool have_bits = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("alpha_deg=", 0) == 0) {
      try {
        alpha = std::stod(line.substr(10));
      } catch (const std::exception&) {
        throw Error(ErrorCategory::io, "mask file: bad alpha_deg line");
      }
      continue;
    }
    if (have_bits) throw Error(ErrorCategory::io, "mask file: more than one bit line");
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok == "0" || tok == " 0") bits.push_back(0);
      else if (tok == "1" || tok == " 1") bits.push_back(1);
      else throw Error(ErrorCategory::io, "mask file: bits must be 0 or 1, got '" + tok + "'");
    }
    have_bits = true;
  }
  if (std::isnan(alpha)) throw Error(ErrorCategory::io, "mask file: missing alpha_deg line");
  if (!have_bits) throw Error(ErrorCategory::io, "mask file: missing bit line");
  return BinaryMask(std::move(bits), alpha);
}

inline void write_response_csv(std::ostream& os, const AngularResponse& r, int samples = 4096) {
  os << "theta_rad,g\n" << std::setprecision(17);
  for (const auto& [t, g] : r.tabulate(samples)) os << t << "," << g << "\n";
}

/// Reads "theta_rad,g" rows into a tabulated profile response.
inline AngularResponse read_response_csv(std::istream& is, int L) {
  std::string line;
  std::vector<double> th, g;
  bool header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "theta_rad,g") throw Error(ErrorCategory::io, "response file: expected header theta_rad,g");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCategory::io, "response file: bad row '" + line + "'");
    try {
      th.push_back(std::stod(line.substr(0, comma)));
      g.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw Error(ErrorCategory::io, "response file: bad number in '" + line + "'");
    }
  }
  if (!header) throw Error(ErrorCategory::io, "response file: empty");
  const double lo = th.empty() ? 0.0 : th.front(), hi = th.empty() ? 0.0 : th.back();
  auto base = BaseProfile::tabulated(std::move(th), std::move(g));
  return AngularResponse(base, {{lo, hi, 1.0}}, L);
}

namespace detail {
template <class F>
auto with_file(const std::string& path, std::ios::openmode mode, F&& f) {
  std::fstream fs(path, mode);
  if (!fs) throw Error(ErrorCategory::io, "cannot open " + path);
  return f(fs);
}
}  // namespace detail

inline void save_mask(const std::string& path, const BinaryMask& m) {
  detail::with_file(path, std::ios::out, [&](std::fstream& f) { write_mask(f, m); });
}
inline BinaryMask load_mask(const std::string& path) {
  return detail::with_file(path, std::ios::in, [](std::fstream& f) { return read_mask(f); });
}
inline void save_response_csv(const std::string& path, const AngularResponse& r) {
  detail::with_file(path, std::ios::out, [&](std::fstream& f) { write_response_csv(f, r); });
}
inline AngularResponse load_response_csv(const std::string& path, int L) {
  return detail::with_file(path, std::ios::in, [&](std::fstream& f) { return read_response_csv(f, L); });
}

}  // namespace sphcam
