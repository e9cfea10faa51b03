#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/dataset.hpp"
#include "elastic_paths/flow.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace elastic_paths {

// Penalty lambda (alpha ||b||_1 + (1 - alpha)/2 ||b||_2^2) added to the
// loss (1/2n)||y - X b||^2.
struct ENConfig {
  double alpha = 0.5;
  double lambda = 0.0;
  double cd_tol = 1e-9;
  std::size_t cd_max_iter = 100'000;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0,1]");
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
    if (!(cd_tol > 0.0)) throw InvalidArgument("cd_tol must be positive");
    if (cd_max_iter == 0) throw InvalidArgument("cd_max_iter must be positive");
  }
};

struct ENResult {
  Vector beta;
  bool converged = false;
  std::size_t sweeps = 0;
};

inline double soft_threshold(double x, double thr) {
  if (x > thr) return x - thr;
  if (x < -thr) return x + thr;
  return 0.0;
}

// Valid for identity covariance only.
inline Vector en_closed_form_isotropic(const Vector& beta_ols, double alpha, double lambda) {
  Vector out(beta_ols.size());
  for (Index d = 0; d < beta_ols.size(); ++d) {
    out[d] = sign(beta_ols[d]) * std::max(0.0, std::abs(beta_ols[d]) - alpha * lambda) /
             (1.0 + (1.0 - alpha) * lambda);
  }
  return out;
}

// Cyclic coordinate descent on the covariance form of the objective,
// starting from beta0. Converged when the largest coordinate change of a
// sweep is below cd_tol.
inline ENResult en_solve_cd(const Dataset& data, const ENConfig& cfg, const Vector& beta0) {
  cfg.validate();
  if (beta0.size() != data.p) throw DimensionError("beta0 has wrong length");
  const Matrix& S = data.cov;
  const double l1 = cfg.lambda * cfg.alpha;
  const double l2 = cfg.lambda * (1.0 - cfg.alpha);
  ENResult r;
  r.beta = beta0;
  // grad = S beta - xty, kept current through rank-one updates.
  Vector grad = S * r.beta - data.xty;
  for (r.sweeps = 1; r.sweeps <= cfg.cd_max_iter; ++r.sweeps) {
    double max_change = 0.0;
    for (Index d = 0; d < data.p; ++d) {
      const double denom = S(d, d) + l2;
      const double old = r.beta[d];
      double nv = 0.0;
      if (denom > 0.0) {
        const double rho = S(d, d) * old - grad[d];
        nv = soft_threshold(rho, l1) / denom;
      }
      const double delta = nv - old;
      if (delta != 0.0) {
        r.beta[d] = nv;
        grad += delta * S.col(d);
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < cfg.cd_tol) {
      r.converged = true;
      return r;
    }
  }
  r.sweeps = cfg.cd_max_iter;
  return r;
}

inline ENResult en_solve_cd(const Dataset& data, const ENConfig& cfg) {
  return en_solve_cd(data, cfg, Vector::Zero(data.p));
}

struct ENPathPoint {
  double lambda = 0.0;
  Vector beta;
  bool converged = false;
};

// Warm-started solutions along a descending lambda grid.
inline std::vector<ENPathPoint> en_path(const Dataset& data, double alpha,
                                        const std::vector<double>& lambdas,
                                        const ENConfig& base = {}) {
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    if (lambdas[i] > lambdas[i - 1]) throw InvalidArgument("lambdas must be sorted descending");
  }
  std::vector<ENPathPoint> out;
  out.reserve(lambdas.size());
  Vector warm = Vector::Zero(data.p);
  ENConfig cfg = base;
  cfg.alpha = alpha;
  for (double lam : lambdas) {
    cfg.lambda = lam;
    ENResult r = en_solve_cd(data, cfg, warm);
    warm = r.beta;
    out.push_back({lam, std::move(r.beta), r.converged});
  }
  return out;
}

// Smallest lambda with an all-zero solution. At alpha = 0 there is none; the
// usual convention of substituting alpha = 1e-3 is used.
inline double en_lambda_max(const Dataset& data, double alpha) {
  return data.lambda_max() / std::max(alpha, 1e-3);
}

// n log-spaced penalties from en_lambda_max down to ratio * en_lambda_max.
inline std::vector<double> lambda_grid(const Dataset& data, double alpha, std::size_t n = 100,
                                       double ratio = 1e-4) {
  if (n < 2) throw InvalidArgument("lambda grid needs at least two points");
  const double top = en_lambda_max(data, alpha);
  std::vector<double> out(n);
  const double step = std::log(ratio) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = top * std::exp(step * static_cast<double>(i));
  out.front() = top;
  return out;
}

struct RidgeForms {
  Vector beta_a;
  Vector beta_b;
};

// (X^T X + n lambda I)^{-1} X^T y and (I - (I + cov / lambda)^{-1}) beta_ols.
inline RidgeForms ridge_two_forms(const Dataset& data, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("ridge lambda must be positive");
  const Index p = data.p;
  const Matrix I = Matrix::Identity(p, p);
  const double n = static_cast<double>(data.n);
  RidgeForms r;
  r.beta_a = (data.X.transpose() * data.X + n * lambda * I).ldlt().solve(data.X.transpose() * data.y);
  r.beta_b = data.beta_ols - (I + data.cov / lambda).ldlt().solve(data.beta_ols);
  return r;
}

inline Vector ridge(const Dataset& data, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("ridge lambda must be non-negative");
  if (lambda == 0.0) return data.beta_ols;
  const Matrix A = data.cov + lambda * Matrix::Identity(data.p, data.p);
  return A.ldlt().solve(data.xty);
}

// Exact maps between flow time and penalty on isotropic data. Each makes
// the flow estimate at t equal the elastic net estimate at the penalty.

// Gradient flow and ridge.
inline double lambda_from_t_ridge(double t) {
  if (!(t > 0.0)) throw DomainError("t must be positive");
  return 1.0 / std::expm1(t);
}

// Coordinate flow and lasso, for one coordinate of the segment starting at t_i.
inline double lambda_from_t_lasso(double ols_abs, double beta_i_abs, double dt, double i_d) {
  return std::max(ols_abs - beta_i_abs - dt * i_d, 0.0);
}

// Elastic gradient flow and the elastic net; i_int is the integral of I_d
// over [t_i, t].
inline double lambda_from_t_elastic(double alpha, double ols_abs, double beta_i_abs,
                                    double i_int) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in [0,1)");
  const double om = 1.0 - alpha;
  const double a = alpha / om;
  const double e = std::exp(-om * i_int) * (a + ols_abs - beta_i_abs);
  const double num = e - a;
  const double den = 2.0 * a + ols_abs - e;
  return std::max(num / den, 0.0) / om;
}

// Per-coordinate penalties for a flow path at time t on isotropic data.
inline Vector lambda_from_t(const AnalyticalPath& path, const Vector& beta_ols, double t) {
  const Index p = beta_ols.size();
  Vector out(p);
  if (path.alpha <= 0.0) {
    out.setConstant(lambda_from_t_ridge(t));
    return out;
  }
  const FlowSegment& seg = path.segment_at(std::min(t, path.t_final));
  const double tt = std::min(t, seg.t_end);
  if (path.alpha >= 1.0) {
    const Vector I = seg.i_diag(tt);
    for (Index d = 0; d < p; ++d) {
      out[d] = lambda_from_t_lasso(std::abs(beta_ols[d]), std::abs(seg.beta_start[d]),
                                   tt - seg.t_start, I[d]);
    }
    return out;
  }
  const Vector ii = seg.i_integral(tt);
  for (Index d = 0; d < p; ++d) {
    out[d] = lambda_from_t_elastic(path.alpha, std::abs(beta_ols[d]), std::abs(seg.beta_start[d]), ii[d]);
  }
  return out;
}

// Approximation for correlated data at alpha = 0.
inline double lambda_from_t_approx(double t) {
  if (!(t > 0.0)) throw DomainError("t must be positive");
  return 1.0 / t;
}

} // namespace elastic_paths
