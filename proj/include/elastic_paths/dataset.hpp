#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/linalg.hpp"

#include <cmath>
#include <utility>

namespace elastic_paths {

// Column centring/scaling learned on one sample and reusable on another
// (validation and test splits are mapped with the training statistics).
struct Standardizer {
  Vector x_mean;
  Vector x_scale;
  double y_mean = 0.0;

  static Standardizer fit(const Matrix& X, const Vector& y) {
    Standardizer s;
    const double n = static_cast<double>(X.rows());
    s.x_mean = X.colwise().mean().transpose();
    s.x_scale.resize(X.cols());
    for (Index j = 0; j < X.cols(); ++j) {
      // Population variance, consistent with cov = X^T X / n.
      const double var = (X.col(j).array() - s.x_mean[j]).square().sum() / n;
      s.x_scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    s.y_mean = y.size() > 0 ? y.mean() : 0.0;
    return s;
  }

  Matrix apply_x(const Matrix& X) const {
    Matrix Z = X.rowwise() - x_mean.transpose();
    return Z * x_scale.cwiseInverse().asDiagonal();
  }

  Vector apply_y(const Vector& y) const { return y.array() - y_mean; }
};

// Linear least-squares problem with its derived moments. X is expected to
// be standardized (Dataset::standardized) but any design is accepted by
// Dataset::from_design, which the isotropic test constructions rely on.
struct Dataset {
  Matrix X;
  Vector y;
  Index n = 0;
  Index p = 0;
  Matrix cov;     // X^T X / n
  Vector xty;     // X^T y / n
  Vector beta_ols; // minimum-norm OLS solution

  static Dataset from_design(Matrix X, Vector y) {
    if (X.rows() != y.size()) {
      throw DimensionError("design has " + std::to_string(X.rows()) + " rows but response has " +
                           std::to_string(y.size()) + " entries");
    }
    if (X.rows() == 0 || X.cols() == 0) throw DimensionError("empty design matrix");
    if (!X.allFinite() || !y.allFinite()) throw InvalidArgument("design or response is not finite");
    Dataset d;
    d.n = X.rows();
    d.p = X.cols();
    const double inv_n = 1.0 / static_cast<double>(d.n);
    d.cov = inv_n * (X.transpose() * X);
    d.cov = 0.5 * (d.cov + d.cov.transpose());
    d.xty = inv_n * (X.transpose() * y);
    d.beta_ols = linalg::pinv_solve(X, y);
    d.X = std::move(X);
    d.y = std::move(y);
    return d;
  }

  static Dataset standardized(const Matrix& X_raw, const Vector& y_raw) {
    const Standardizer s = Standardizer::fit(X_raw, y_raw);
    return from_design(s.apply_x(X_raw), s.apply_y(y_raw));
  }

  double loss(const Vector& beta) const {
    return (y - X * beta).squaredNorm() / (2.0 * static_cast<double>(n));
  }

  double mse(const Vector& beta) const {
    return (y - X * beta).squaredNorm() / static_cast<double>(n);
  }

  // Smallest penalty at which the lasso solution is zero.
  double lambda_max() const { return xty.cwiseAbs().maxCoeff(); }
};

// Gradient of (1/2n)||y - X beta||^2, computed from the data: X^T(X beta - y)/n.
inline Vector compute_gradient(const Dataset& data, const Vector& beta) {
  if (beta.size() != data.p) throw DimensionError("beta has wrong length");
  const double inv_n = 1.0 / static_cast<double>(data.n);
  return inv_n * (data.X.transpose() * (data.X * beta - data.y));
}

// Same gradient through the moments: -cov (beta_ols - beta).
inline Vector compute_gradient_moments(const Dataset& data, const Vector& beta) {
  if (beta.size() != data.p) throw DimensionError("beta has wrong length");
  return -(data.cov * (data.beta_ols - beta));
}

} // namespace elastic_paths
