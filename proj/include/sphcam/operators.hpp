#pragma once

// Measurement operators from grid samples of a scene to pixel readings,
// with their adjoints, as consumed by the iterative solver.

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sphcam/convolution.hpp"
#include "sphcam/grid.hpp"
#include "sphcam/sht.hpp"

namespace sphcam {

/// Linear map from real grid samples x (grid().size()) to rows() readings.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual const SphericalGrid& grid() const = 0;
  virtual std::size_t rows() const = 0;
  std::size_t cols() const { return grid().size(); }
  virtual void apply(std::span<const double> x, std::span<double> y) const = 0;
  virtual void adjoint(std::span<const double> y, std::span<double> x) const = 0;

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(rows());
    apply(x, y);
    return y;
  }
  std::vector<double> adjoint(std::span<const double> y) const {
    std::vector<double> x(cols());
    adjoint(y, x);
    return x;
  }

 protected:
  void check(std::span<const double> x, std::span<const double> y) const {
    if (x.size() != cols() || y.size() != rows())
      throw Error(ErrorCategory::dimension, "operator: got " + std::to_string(x.size()) + " -> " +
                                                std::to_string(y.size()) + ", expected " +
                                                std::to_string(cols()) + " -> " + std::to_string(rows()));
  }
};

/// gain * select(synthesis(ghat * analysis(x))): the full-grid forward model,
/// optionally restricted to a subset of grid samples.
class SpectralConvolutionOperator final : public LinearOperator {
 public:
  using LinearOperator::adjoint;
  using LinearOperator::apply;

  SpectralConvolutionOperator(SphericalGrid grid, SpectralOperator op, double gain = 1.0,
                              std::optional<std::vector<std::size_t>> subset = std::nullopt)
      : grid_(std::move(grid)), op_(std::move(op)), gain_(gain), subset_(std::move(subset)) {
    if (op_.bandlimit() != grid_.bandlimit())
      throw Error(ErrorCategory::dimension, "spectral operator and grid bandlimits differ");
    if (subset_)
      for (std::size_t i : *subset_)
        if (i >= grid_.size()) throw Error(ErrorCategory::dimension, "subset index outside grid");
  }

  const SphericalGrid& grid() const override { return grid_; }
  std::size_t rows() const override { return subset_ ? subset_->size() : grid_.size(); }
  const SpectralOperator& spectral() const { return op_; }
  double gain() const { return gain_; }

  void apply(std::span<const double> x, std::span<double> y) const override {
    check(x, y);
    RealSignal f(grid_, std::vector<double>(x.begin(), x.end()));
    const auto out = convolve_grid(f, op_);
    if (subset_) {
      for (std::size_t k = 0; k < subset_->size(); ++k) y[k] = gain_ * out[(*subset_)[k]];
    } else {
      for (std::size_t k = 0; k < y.size(); ++k) y[k] = gain_ * out[k];
    }
  }

  void adjoint(std::span<const double> y, std::span<double> x) const override {
    check(x, y);
    RealSignal s(grid_);
    if (subset_) {
      for (std::size_t k = 0; k < subset_->size(); ++k) s[(*subset_)[k]] += gain_ * y[k];
    } else {
      for (std::size_t k = 0; k < y.size(); ++k) s[k] = gain_ * y[k];
    }
    auto c = convolve_spectral(sht_synthesis_adjoint(s), op_);
    const auto back = sht_forward_adjoint(c, grid_);
    std::copy(back.values().begin(), back.values().end(), x.begin());
  }

 private:
  SphericalGrid grid_;
  SpectralOperator op_;
  double gain_;
  std::optional<std::vector<std::size_t>> subset_;
};

/// Dense Phi[i, j] = gain * w_j g(arccos(r_i . s_j)) for arbitrary pixel
/// orientations r_i; the operator behind deformed sensor layouts.
class DenseConvolutionOperator final : public LinearOperator {
 public:
  using LinearOperator::adjoint;
  using LinearOperator::apply;

  DenseConvolutionOperator(SphericalGrid grid, const AngularResponse& g, std::span<const Vec3> orientations,
                           double gain = 1.0)
      : grid_(std::move(grid)), phi_(static_cast<Eigen::Index>(orientations.size()),
                                     static_cast<Eigen::Index>(grid_.size())) {
    detail::check_unit(orientations);
    std::vector<Vec3> dirs(grid_.size());
    for (std::size_t j = 0; j < dirs.size(); ++j) dirs[j] = grid_.direction(j);
    const auto w = grid_.sample_weights();
    parallel_for(0, orientations.size(), [&](std::size_t i) {
      for (std::size_t j = 0; j < dirs.size(); ++j)
        phi_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            gain * w[j] * g(angle_between(orientations[i], dirs[j]));
    });
  }

  const SphericalGrid& grid() const override { return grid_; }
  std::size_t rows() const override { return static_cast<std::size_t>(phi_.rows()); }
  const Eigen::MatrixXd& matrix() const { return phi_; }

  void apply(std::span<const double> x, std::span<double> y) const override {
    check(x, y);
    Eigen::Map<Eigen::VectorXd>(y.data(), phi_.rows()) =
        phi_ * Eigen::Map<const Eigen::VectorXd>(x.data(), phi_.cols());
  }

  void adjoint(std::span<const double> y, std::span<double> x) const override {
    check(x, y);
    Eigen::Map<Eigen::VectorXd>(x.data(), phi_.cols()) =
        phi_.transpose() * Eigen::Map<const Eigen::VectorXd>(y.data(), phi_.rows());
  }

 private:
  SphericalGrid grid_;
  Eigen::MatrixXd phi_;
};

}  // namespace sphcam
