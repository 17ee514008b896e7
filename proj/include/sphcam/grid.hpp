#pragma once

// Equiangular L x (2L-1) sampling of the sphere, signals sampled on it, and
// harmonic coefficient sets.
//
// Rows sit at theta_t = pi (2t+1)/(2L-1), t = 0..L-1 (the last row is the
// south pole), columns at phi_p = 2 pi p/(2L-1). Every bandlimit-L signal is
// determined by its samples on this grid.

#include <complex>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>

#include "sphcam/core.hpp"
#include "sphcam/legendre.hpp"

namespace sphcam {

using cdouble = std::complex<double>;

namespace detail {

/// Precomputed data for the harmonic transforms on one grid.
struct ShtTables {
  explicit ShtTables(int L, std::span<const double> thetas)
      : recurrence(L), cos_theta(thetas.size()), sin_theta(thetas.size()) {
    const int N = 2 * L - 1;
    for (std::size_t t = 0; t < thetas.size(); ++t) {
      cos_theta[t] = std::cos(thetas[t]);
      sin_theta[t] = std::sin(thetas[t]);
    }
    // The last row is the pole; pin it so the m > 0 columns vanish exactly.
    sin_theta.back() = 0.0;
    cos_theta.back() = L == 1 ? std::cos(thetas.back()) : -1.0;

    twiddle.resize(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) twiddle[k] = std::polar(1.0, -kTwoPi * k / N);

    diagonals.resize(static_cast<std::size_t>(L) * L);
    for (int t = 0; t < L; ++t) {
      double d = LegendreRecurrence::first_diagonal();
      for (int m = 0; m < L; ++m) {
        if (m > 0) d = recurrence.next_diagonal(m, sin_theta[t], d);
        diagonals[static_cast<std::size_t>(t) * L + m] = d;
      }
    }

    // Per-order Gram matrices G_m(l, l') = N sum_t lambda_lm(t) lambda_l'm(t)
    // of the sampled basis; their Cholesky factors give the least-squares
    // analysis, which is exact for bandlimited signals.
    gram.reserve(static_cast<std::size_t>(L));
    std::vector<double> col(static_cast<std::size_t>(L));
    for (int m = 0; m < L; ++m) {
      const int k = L - m;
      Eigen::MatrixXd B(L, k);
      for (int t = 0; t < L; ++t) {
        recurrence.column_from_diagonal(m, cos_theta[t], diagonal(t, m),
                                        std::span<double>(col.data(), k));
        for (int j = 0; j < k; ++j) B(t, j) = col[j];
      }
      Eigen::MatrixXd G = static_cast<double>(N) * (B.transpose() * B);
      gram.emplace_back(G);
      if (gram.back().info() != Eigen::Success)
        throw Error(ErrorCategory::ill_posed,
                    "sampling Gram matrix not positive definite at m=" + std::to_string(m));
    }
  }

  /// lambda_mm(cos theta_t)
  double diagonal(int t, int m) const {
    return diagonals[static_cast<std::size_t>(t) * recurrence.bandlimit() + m];
  }

  LegendreRecurrence recurrence;
  std::vector<double> cos_theta, sin_theta;
  std::vector<double> diagonals;
  std::vector<cdouble> twiddle;  // exp(-2 pi i k / N)
  std::vector<Eigen::LLT<Eigen::MatrixXd>> gram;
};

struct GridData {
  int L = 0;
  std::vector<double> thetas, phis, weights;
  mutable std::once_flag tables_once;
  mutable std::unique_ptr<const ShtTables> tables;
};

}  // namespace detail

/// The L x (2L-1) sampling grid. Cheap to copy; copies share the
/// (immutable, lazily built) transform tables.
class SphericalGrid {
 public:
  explicit SphericalGrid(int bandlimit) {
    if (bandlimit < 1)
      throw Error(ErrorCategory::domain, "grid bandlimit must be >= 1, got " +
                                             std::to_string(bandlimit));
    auto d = std::make_shared<detail::GridData>();
    const int L = bandlimit, N = 2 * L - 1;
    d->L = L;
    d->thetas.resize(static_cast<std::size_t>(L));
    d->phis.resize(static_cast<std::size_t>(N));
    for (int t = 0; t < L; ++t) d->thetas[t] = kPi * (2.0 * t + 1.0) / N;
    for (int p = 0; p < N; ++p) d->phis[p] = kTwoPi * p / N;
    d->weights = solve_weights(L, d->thetas);
    data_ = std::move(d);
  }

  int bandlimit() const { return data_->L; }
  int rows() const { return data_->L; }
  int cols() const { return 2 * data_->L - 1; }
  std::size_t size() const { return static_cast<std::size_t>(rows()) * cols(); }

  std::span<const double> thetas() const { return data_->thetas; }
  std::span<const double> phis() const { return data_->phis; }
  /// Quadrature weight of every sample in each row (steradians per sample).
  std::span<const double> weights() const { return data_->weights; }

  double theta(int t) const { return data_->thetas[t]; }
  double phi(int p) const { return data_->phis[p]; }
  double weight(int t) const { return data_->weights[t]; }

  /// Row-major flat index of sample (t, p).
  std::size_t index(int t, int p) const { return static_cast<std::size_t>(t) * cols() + p; }

  Vec3 direction(int t, int p) const { return sphcam::direction(theta(t), phi(p)); }
  Vec3 direction(std::size_t flat) const {
    return direction(static_cast<int>(flat / cols()), static_cast<int>(flat % cols()));
  }

  /// Per-sample weights in row-major order.
  std::vector<double> sample_weights() const {
    std::vector<double> w(size());
    for (int t = 0; t < rows(); ++t)
      for (int p = 0; p < cols(); ++p) w[index(t, p)] = weight(t);
    return w;
  }

  const detail::ShtTables& sht_tables() const {
    std::call_once(data_->tables_once, [this] {
      data_->tables = std::make_unique<const detail::ShtTables>(data_->L, data_->thetas);
    });
    return *data_->tables;
  }

  friend bool operator==(const SphericalGrid& a, const SphericalGrid& b) {
    return a.bandlimit() == b.bandlimit();
  }

 private:
  // Row weights w_t chosen so the grid integrates every Y_lm with l < L
  // exactly: the phi sums kill m != 0, leaving L zonal conditions
  //   sum_t (2L-1) w_t lambda_l0(cos theta_t) = sqrt(4 pi) [l == 0].
  static std::vector<double> solve_weights(int L, const std::vector<double>& thetas) {
    const int N = 2 * L - 1;
    const LegendreRecurrence rec(L);
    Eigen::MatrixXd A(L, L);
    std::vector<double> col(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) {
      const double x = t == L - 1 && L > 1 ? -1.0 : std::cos(thetas[t]);
      rec.column(0, x, 0.0, col);
      for (int l = 0; l < L; ++l) A(l, t) = N * col[l];
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(L);
    rhs(0) = std::sqrt(kFourPi);
    const Eigen::VectorXd w = A.partialPivLu().solve(rhs);
    return {w.data(), w.data() + L};
  }

  std::shared_ptr<const detail::GridData> data_;
};

inline SphericalGrid make_grid(int bandlimit) { return SphericalGrid(bandlimit); }

/// Samples of a function on a SphericalGrid, row-major (theta rows, phi columns).
template <class T>
class SphericalSignal {
 public:
  using value_type = T;

  explicit SphericalSignal(SphericalGrid grid) : grid_(std::move(grid)), values_(grid_.size()) {}

  SphericalSignal(SphericalGrid grid, std::vector<T> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size())
      throw Error(ErrorCategory::dimension,
                  "signal has " + std::to_string(values_.size()) + " values, grid needs " +
                      std::to_string(grid_.size()));
  }

  const SphericalGrid& grid() const { return grid_; }
  int rows() const { return grid_.rows(); }
  int cols() const { return grid_.cols(); }
  std::size_t size() const { return values_.size(); }

  T& operator()(int t, int p) { return values_[grid_.index(t, p)]; }
  const T& operator()(int t, int p) const { return values_[grid_.index(t, p)]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  const std::vector<T>& vector() const { return values_; }

 private:
  SphericalGrid grid_;
  std::vector<T> values_;
};

using RealSignal = SphericalSignal<double>;
using ComplexSignal = SphericalSignal<cdouble>;

/// Complex harmonic coefficients f_lm, 0 <= l < L, |m| <= l, stored at l^2 + l + m.
class HarmonicCoeffs {
 public:
  explicit HarmonicCoeffs(int bandlimit) : L_(check(bandlimit)), c_(count(L_)) {}

  HarmonicCoeffs(int bandlimit, std::vector<cdouble> values)
      : L_(check(bandlimit)), c_(std::move(values)) {
    if (c_.size() != count(L_))
      throw Error(ErrorCategory::dimension, "coefficient count " + std::to_string(c_.size()) +
                                                " != L^2 = " + std::to_string(count(L_)));
  }

  static std::size_t count(int L) { return static_cast<std::size_t>(L) * L; }
  static std::size_t index(int l, int m) { return static_cast<std::size_t>(l * l + l + m); }

  int bandlimit() const { return L_; }
  std::size_t size() const { return c_.size(); }

  cdouble& operator()(int l, int m) { return c_[index(l, m)]; }
  const cdouble& operator()(int l, int m) const { return c_[index(l, m)]; }

  std::span<cdouble> values() { return c_; }
  std::span<const cdouble> values() const { return c_; }

  /// Largest violation of c(l,-m) = (-1)^m conj(c(l,m)).
  double conjugate_asymmetry() const {
    double worst = 0.0;
    for (int l = 0; l < L_; ++l)
      for (int m = 0; m <= l; ++m) {
        const cdouble expect = ((m & 1) ? -1.0 : 1.0) * std::conj((*this)(l, m));
        worst = std::max(worst, std::abs((*this)(l, -m) - expect));
      }
    return worst;
  }

  double norm() const {
    double s = 0.0;
    for (const auto& v : c_) s += std::norm(v);
    return std::sqrt(s);
  }

 private:
  static int check(int L) {
    if (L < 1) throw Error(ErrorCategory::domain, "bandlimit must be >= 1");
    return L;
  }

  int L_;
  std::vector<cdouble> c_;
};

}  // namespace sphcam
