#pragma once

#include "elastic_paths/core.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace elastic_paths::linalg {

// Minimum-norm least-squares solution of X b = y. Singular values below
// rel_tol * sigma_max are treated as zero (Moore-Penrose pseudoinverse).
inline Vector pinv_solve(const Matrix& X, const Vector& y, double rel_tol = 1e-10) {
  Eigen::BDCSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = s.size() > 0 ? rel_tol * s[0] : 0.0;
  Vector uty = svd.matrixU().transpose() * y;
  for (Index k = 0; k < s.size(); ++k) {
    uty[k] = s[k] > cutoff ? uty[k] / s[k] : 0.0;
  }
  return svd.matrixV() * uty;
}

// Numerical rank of a symmetric positive semidefinite matrix.
inline Index psd_rank(const Matrix& S, double rel_tol = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  return static_cast<Index>((ev.array() > rel_tol * top).count());
}

inline double min_eigenvalue(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

// f(S) for symmetric S through its spectral decomposition.
template <class F>
Matrix symmetric_function(const Matrix& S, F&& f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  const Vector fv = es.eigenvalues().unaryExpr(std::forward<F>(f));
  return es.eigenvectors() * fv.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix symmetric_sqrt(const Matrix& S) {
  return symmetric_function(S, [](double l) { return std::sqrt(std::max(l, 0.0)); });
}

// Spectral decomposition cached for repeated exp(-t S) evaluations.
class SymmetricExp {
public:
  explicit SymmetricExp(const Matrix& S) : es_(S) {}

  Matrix exp_scaled(double t) const {
    const Vector ev = (t * es_.eigenvalues().array()).exp().matrix();
    return es_.eigenvectors() * ev.asDiagonal() * es_.eigenvectors().transpose();
  }

  // exp(t S) v without forming the matrix.
  Vector apply(double t, const Vector& v) const {
    const Vector coeffs = es_.eigenvectors().transpose() * v;
    const Vector scaled = ((t * es_.eigenvalues().array()).exp() * coeffs.array()).matrix();
    return es_.eigenvectors() * scaled;
  }

  // (exp(t S) - I) v, accurate for small |t| and exactly zero at t = 0.
  Vector apply_expm1(double t, const Vector& v) const {
    const Vector coeffs = es_.eigenvectors().transpose() * v;
    Vector scaled(coeffs.size());
    for (Index i = 0; i < coeffs.size(); ++i) scaled[i] = std::expm1(t * es_.eigenvalues()[i]) * coeffs[i];
    return es_.eigenvectors() * scaled;
  }

  const Vector& eigenvalues() const { return es_.eigenvalues(); }
  const Matrix& eigenvectors() const { return es_.eigenvectors(); }

private:
  Eigen::SelfAdjointEigenSolver<Matrix> es_;
};

// Matrix exponential of a general square matrix by scaling and squaring
// with a truncated Taylor series. The argument is scaled so that its
// 1-norm is at most 1/2; 20 Taylor terms then leave a truncation error
// below double precision.
inline Matrix expm(const Matrix& A) {
  const Index n = A.rows();
  if (n == 0) return Matrix(0, 0);
  const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  }
  const Matrix B = A / std::ldexp(1.0, squarings);
  Matrix term = Matrix::Identity(n, n);
  Matrix result = Matrix::Identity(n, n);
  for (int k = 1; k <= 20; ++k) {
    term = term * B / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18 * result.cwiseAbs().maxCoeff()) break;
  }
  for (int s = 0; s < squarings; ++s) {
    result = result * result;
  }
  return result;
}

// 2-norm condition number from a dense SVD.
inline double condition_number(const Matrix& A) {
  if (A.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(A);
  const Vector& s = svd.singularValues();
  const double smin = s[s.size() - 1];
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

} // namespace elastic_paths::linalg
