#pragma once

// Scene recovery: spectral inversion, Wiener filtering, and MFISTA on
//   F(x) = |Phi x - y|^2 + mu |(I - P) x|^2 + lambda TV(x),   x >= 0,
// where x are grid samples and P projects onto bandlimited samples. The mu
// term only pins the non-bandlimited part of x, which the measurements of a
// bandlimited model cannot see; it vanishes on bandlimited images.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sphcam/convolution.hpp"
#include "sphcam/forward_sim.hpp"
#include "sphcam/operators.hpp"
#include "sphcam/sht.hpp"

namespace sphcam {

// ---------------------------------------------------------------------------
// Spectral estimates

/// f_lm = y_lm / ghat_l.
inline HarmonicCoeffs invert_direct(const HarmonicCoeffs& y, const SpectralOperator& op) {
  if (y.bandlimit() != op.bandlimit())
    throw Error(ErrorCategory::dimension, "invert_direct: bandlimit mismatch");
  HarmonicCoeffs f = y;
  for (int l = 0; l < y.bandlimit(); ++l) {
    if (op[l] == 0.0)
      throw Error(ErrorCategory::ill_posed,
                  "scaling coefficient at degree l=" + std::to_string(l) + " is zero; direct inversion undefined");
    for (int m = -l; m <= l; ++m) f(l, m) /= op[l];
  }
  return f;
}

/// f_lm = ghat_l y_lm / (ghat_l^2 + 1/snr_prior).
inline HarmonicCoeffs wiener(const HarmonicCoeffs& y, const SpectralOperator& op, double snr_prior) {
  if (y.bandlimit() != op.bandlimit()) throw Error(ErrorCategory::dimension, "wiener: bandlimit mismatch");
  if (!(snr_prior > 0.0)) throw Error(ErrorCategory::domain, "wiener: snr prior must be > 0");
  HarmonicCoeffs f = y;
  for (int l = 0; l < y.bandlimit(); ++l) {
    const double g = op[l];
    const double k = g / (g * g + 1.0 / snr_prior);
    for (int m = -l; m <= l; ++m) f(l, m) *= k;
  }
  return f;
}

/// Measured harmonic coefficients of a full-grid measurement, in scene
/// units (divided by the calibration gain).
inline HarmonicCoeffs measured_coeffs(const MeasurementSet& m, const SphericalGrid& grid) {
  if (m.layout.kind != LayoutKind::full_grid || m.values.size() != grid.size())
    throw Error(ErrorCategory::dimension, "spectral estimates need a full-grid measurement on the same grid");
  RealSignal y(grid);
  for (std::size_t i = 0; i < grid.size(); ++i) y[i] = m.values[i] / m.gain;
  return sht_forward(y);
}

/// Per-reading noise variance in full-well units: shot noise at the mean
/// reading plus readout. Zero for a noiseless sensor.
inline double reading_noise_variance(const MeasurementSet& m) {
  if (m.sensor.noiseless || m.values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : m.values) mean += v;
  mean /= static_cast<double>(m.values.size());
  const double r = m.sensor.readout_sigma() / m.sensor.full_well;
  return mean / m.sensor.full_well + r * r;
}

/// TV weight for a Gaussian-approximated MAP reading: scale * noise variance.
inline double noise_scaled_lambda(const MeasurementSet& m, double scale) {
  if (!(scale >= 0.0)) throw Error(ErrorCategory::config, "lambda scale must be >= 0");
  return scale * reading_noise_variance(m);
}

// ---------------------------------------------------------------------------
// Quality

/// 10 log10(f'Qf / e'Qe) in dB with Q the quadrature weights; +inf on an exact match.
inline double snr_i(const RealSignal& estimate, const RealSignal& truth) {
  if (!(estimate.grid() == truth.grid())) throw Error(ErrorCategory::dimension, "snr_i: grids differ");
  const auto& g = truth.grid();
  double sig = 0.0, err = 0.0;
  for (int t = 0; t < g.rows(); ++t)
    for (int p = 0; p < g.cols(); ++p) {
      const double f = truth(t, p), e = estimate(t, p) - f;
      sig += g.weight(t) * f * f;
      err += g.weight(t) * e * e;
    }
  if (sig == 0.0) throw Error(ErrorCategory::domain, "snr_i: truth is identically zero");
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / err);
}

// ---------------------------------------------------------------------------
// Total variation

/// sum_t,p w_t sqrt(Dtheta^2 + Dphi^2), forward differences, periodic in
/// phi, Dtheta = 0 on the last row.
inline double tv_isotropic(const RealSignal& f) {
  const auto& g = f.grid();
  const int R = g.rows(), C = g.cols();
  double s = 0.0;
  for (int t = 0; t < R; ++t) {
    double row = 0.0;
    for (int p = 0; p < C; ++p) {
      const double v = f(t, p);
      const double dt = t + 1 < R ? f(t + 1, p) - v : 0.0;
      const double dp = f(t, (p + 1) % C) - v;
      row += std::sqrt(dt * dt + dp * dp);
    }
    s += g.weight(t) * row;
  }
  return s;
}

namespace detail {

/// min_x 1/2 |x - v|^2 + tau TV(x) (+ x >= 0) by accelerated projected
/// gradient on the dual, the dual variables p lying in balls of radius w_t.
/// `p` carries the dual between calls as a warm start.
class TvProx {
 public:
  explicit TvProx(const SphericalGrid& grid)
      : grid_(grid), pt_(grid.size(), 0.0), pp_(grid.size(), 0.0) {}

  void reset() {
    std::fill(pt_.begin(), pt_.end(), 0.0);
    std::fill(pp_.begin(), pp_.end(), 0.0);
  }

  void operator()(std::span<const double> v, double tau, int iters, bool nonneg, std::span<double> x) {
    const std::size_t n = v.size();
    if (tau <= 0.0 || iters <= 0) {
      for (std::size_t i = 0; i < n; ++i) x[i] = nonneg ? std::max(0.0, v[i]) : v[i];
      return;
    }
    std::vector<double> rt = pt_, rp = pp_, prev_t(n), prev_p(n), dt(n), dp(n);
    double t = 1.0;
    // |D|^2 <= 8 for unit-spaced forward differences in two directions
    const double step = 1.0 / (8.0 * tau);
    for (int k = 0; k < iters; ++k) {
      primal(v, tau, rt, rp, nonneg, x);
      grad(x, dt, dp);
      prev_t = pt_;
      prev_p = pp_;
      for (std::size_t i = 0; i < n; ++i) {
        double a = rt[i] + step * dt[i], b = rp[i] + step * dp[i];
        const double r = grid_.weight(static_cast<int>(i / grid_.cols()));
        const double nrm = std::sqrt(a * a + b * b);
        if (nrm > r) {
          a *= r / nrm;
          b *= r / nrm;
        }
        pt_[i] = a;
        pp_[i] = b;
      }
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double mom = (t - 1.0) / tn;
      for (std::size_t i = 0; i < n; ++i) {
        rt[i] = pt_[i] + mom * (pt_[i] - prev_t[i]);
        rp[i] = pp_[i] + mom * (pp_[i] - prev_p[i]);
      }
      t = tn;
    }
    primal(v, tau, pt_, pp_, nonneg, x);
  }

 private:
  // x = P_C(v - tau D^T p)
  void primal(std::span<const double> v, double tau, const std::vector<double>& qt,
              const std::vector<double>& qp, bool nonneg, std::span<double> x) const {
    const int R = grid_.rows(), C = grid_.cols();
    for (int t = 0; t < R; ++t)
      for (int p = 0; p < C; ++p) {
        const std::size_t i = grid_.index(t, p);
        // D^T p at node i: (-p_i + p_{i-1}) in each direction
        double dtp = -qt[i] + (t > 0 ? qt[grid_.index(t - 1, p)] : 0.0);
        if (t + 1 == R) dtp = t > 0 ? qt[grid_.index(t - 1, p)] : 0.0;
        const double dpp = -qp[i] + qp[grid_.index(t, (p + C - 1) % C)];
        const double val = v[i] - tau * (dtp + dpp);
        x[i] = nonneg ? std::max(0.0, val) : val;
      }
  }

  void grad(std::span<const double> x, std::vector<double>& dt, std::vector<double>& dp) const {
    const int R = grid_.rows(), C = grid_.cols();
    for (int t = 0; t < R; ++t)
      for (int p = 0; p < C; ++p) {
        const std::size_t i = grid_.index(t, p);
        dt[i] = t + 1 < R ? x[grid_.index(t + 1, p)] - x[i] : 0.0;
        dp[i] = x[grid_.index(t, (p + 1) % C)] - x[i];
      }
  }

  const SphericalGrid& grid_;
  std::vector<double> pt_, pp_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// MFISTA

struct ReconConfig {
  double lambda_tv = 0.0;
  int max_iters = 500;
  int tv_inner_iters = 30;
  double step = 0.0;              // 0 selects 1 / Lipschitz estimate
  bool nonneg = true;
  double wiener_snr_prior = 1e3;
  double tol = 1e-8;              // relative objective change
  double bandlimit_weight = -1.0; // mu; negative selects the |Phi|^2 estimate
  int power_iters = 20;
  double lipschitz_margin = 1.1;  // power iteration underestimates

  void validate() const {
    if (!(lambda_tv >= 0.0)) throw Error(ErrorCategory::config, "lambda_tv must be >= 0");
    if (max_iters < 1) throw Error(ErrorCategory::config, "max_iters must be >= 1");
    if (tv_inner_iters < 0) throw Error(ErrorCategory::config, "tv_inner_iters must be >= 0");
    if (step < 0.0) throw Error(ErrorCategory::config, "step must be > 0 when fixed");
    if (!(wiener_snr_prior > 0.0)) throw Error(ErrorCategory::config, "wiener_snr_prior must be > 0");
    if (power_iters < 1) throw Error(ErrorCategory::config, "power_iters must be >= 1");
  }
};

struct ReconResult {
  RealSignal estimate;
  std::vector<double> objective;  // F after every iteration, index 0 = initial point
  int iterations = 0;
  bool converged = false;         // stopped on the tolerance rather than max_iters
  double lipschitz = 0.0;
  double bandlimit_weight = 0.0;
};

/// Largest eigenvalue of A (symmetric PSD) by power iteration from a fixed start.
inline double power_iteration(std::size_t n, const std::function<void(std::span<const double>, std::span<double>)>& A,
                              int iters) {
  std::vector<double> v(n), w(n);
  CounterRng rng(0x9e3779b9ULL);
  for (auto& e : v) e = rng.uniform() + 0.5;
  double lam = 0.0;
  for (int k = 0; k < iters; ++k) {
    double nv = 0.0;
    for (double e : v) nv += e * e;
    nv = std::sqrt(nv);
    if (nv == 0.0) return 0.0;
    for (auto& e : v) e /= nv;
    A(v, w);
    lam = 0.0;
    for (std::size_t i = 0; i < n; ++i) lam += v[i] * w[i];
    v.swap(w);
  }
  return lam;
}

/// Smooth part of the objective and its gradient.
class ReconObjective {
 public:
  ReconObjective(const LinearOperator& op, std::span<const double> y, double mu)
      : op_(op), y_(y.begin(), y.end()), mu_(mu) {
    if (y_.size() != op.rows())
      throw Error(ErrorCategory::dimension, "measurement count " + std::to_string(y_.size()) +
                                                " does not match operator rows " + std::to_string(op.rows()));
  }

  double mu() const { return mu_; }

  /// |Phi x - y|^2 + mu |(I - P) x|^2; fills grad if given.
  double value(std::span<const double> x, std::vector<double>* grad = nullptr) const {
    auto r = op_.apply(x);
    double data = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] -= y_[i];
      data += r[i] * r[i];
    }
    std::vector<double> perp;
    double pen = 0.0;
    if (mu_ > 0.0) {
      perp = out_of_band(x);
      for (double e : perp) pen += e * e;
    }
    if (grad) {
      *grad = op_.adjoint(r);
      for (auto& g : *grad) g *= 2.0;
      if (mu_ > 0.0)
        for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += 2.0 * mu_ * perp[i];
    }
    return data + mu_ * pen;
  }

  /// Hessian / 2 applied to v: Phi^T Phi v + mu (I - P) v.
  void half_hessian(std::span<const double> v, std::span<double> out) const {
    const auto t = op_.adjoint(op_.apply(v));
    std::copy(t.begin(), t.end(), out.begin());
    if (mu_ > 0.0) {
      const auto perp = out_of_band(v);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += mu_ * perp[i];
    }
  }

 private:
  std::vector<double> out_of_band(std::span<const double> x) const {
    RealSignal s(op_.grid(), std::vector<double>(x.begin(), x.end()));
    const auto p = bandlimit_projection(s);
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] - p[i];
    return d;
  }

  const LinearOperator& op_;
  std::vector<double> y_;
  double mu_;
};

/// Monotone FISTA (Beck and Teboulle) with the TV proximal step solved by
/// the dual iteration above. The momentum restarts whenever a proximal
/// step is rejected.
inline ReconResult mfista_tv(const LinearOperator& op, std::span<const double> y, const ReconConfig& cfg,
                             const std::vector<double>* initial = nullptr) {
  cfg.validate();
  const auto& grid = op.grid();
  const std::size_t n = grid.size();

  double mu = cfg.bandlimit_weight;
  if (mu < 0.0)
    mu = power_iteration(n, [&](std::span<const double> v, std::span<double> w) {
      const auto t = op.adjoint(op.apply(v));
      std::copy(t.begin(), t.end(), w.begin());
    }, cfg.power_iters);
  const ReconObjective smooth(op, y, mu);

  double lip = 0.0;
  double step = cfg.step;
  if (step == 0.0) {
    lip = 2.0 * cfg.lipschitz_margin *
          power_iteration(n, [&](std::span<const double> v, std::span<double> w) { smooth.half_hessian(v, w); },
                          cfg.power_iters);
    if (!(lip > 0.0)) throw Error(ErrorCategory::ill_posed, "operator is zero; nothing to reconstruct");
    step = 1.0 / lip;
  } else {
    lip = 1.0 / step;
  }

  detail::TvProx prox(grid);
  auto total = [&](std::span<const double> x, std::vector<double>* g) {
    RealSignal s(grid, std::vector<double>(x.begin(), x.end()));
    const double tv = cfg.lambda_tv > 0.0 ? cfg.lambda_tv * tv_isotropic(s) : 0.0;
    return smooth.value(x, g) + tv;
  };

  std::vector<double> x(n, 0.0);
  if (initial) {
    if (initial->size() != n) throw Error(ErrorCategory::dimension, "initial estimate has the wrong size");
    x = *initial;
    if (cfg.nonneg)
      for (auto& v : x) v = std::max(0.0, v);
  }
  std::vector<double> x_prev = x, yk = x, z(n), v(n), grad;
  double t = 1.0;
  double fx = total(x, nullptr);
  ReconResult res{RealSignal(grid), {fx}, 0, false, lip, mu};

  for (int k = 1; k <= cfg.max_iters; ++k) {
    smooth.value(yk, &grad);
    for (std::size_t i = 0; i < n; ++i) v[i] = yk[i] - step * grad[i];
    prox(v, cfg.lambda_tv * step, cfg.tv_inner_iters, cfg.nonneg, z);
    const double fz = total(z, nullptr);
    if (!std::isfinite(fz)) throw Error(ErrorCategory::divergence, "objective became non-finite at iteration " + std::to_string(k));

    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    x_prev = x;
    const double f_old = fx;
    const bool accepted = fz <= fx;
    if (accepted) {
      x = z;
      fx = fz;
      for (std::size_t i = 0; i < n; ++i)
        yk[i] = x[i] + ((t - 1.0) / tn) * (x[i] - x_prev[i]);
      t = tn;
    } else {
      // keep x; restart the momentum from it
      yk = x;
      t = 1.0;
    }
    if (fx > f_old + 1e-9 * std::max(1.0, std::abs(f_old)))
      throw Error(ErrorCategory::divergence, "objective increased at iteration " + std::to_string(k) + ": " +
                                                 std::to_string(f_old) + " -> " + std::to_string(fx));
    res.objective.push_back(fx);
    res.iterations = k;
    if (accepted && std::abs(f_old - fx) <= cfg.tol * std::max(std::abs(fx), 1e-300)) {
      res.converged = true;
      break;
    }
  }
  res.estimate = RealSignal(grid, std::move(x));
  return res;
}

}  // namespace sphcam
