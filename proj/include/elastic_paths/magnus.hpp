#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/linalg.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace elastic_paths {

// Truncated Magnus expansion of the propagator of
//
//   dU/dt = -(1 - alpha) I(t) S U,   U(t_i) = Id,
//
// where I(t) is diagonal and known through its Taylor coefficients
// I^(l)(t_i), l = 0..K. Both the first term and the second (commutator)
// term are closed-form polynomials in h = t - t_i.
class MagnusExpansion {
public:
  MagnusExpansion() = default;

  MagnusExpansion(const std::vector<Vector>& i_taylor, const Matrix& S, double alpha,
                  int magnus_order)
      : alpha_(alpha), order_(magnus_order) {
    if (magnus_order != 1 && magnus_order != 2) {
      throw InvalidArgument("magnus_order must be 1 or 2");
    }
    if (i_taylor.empty()) throw InvalidArgument("need at least one Taylor coefficient");
    const Index p = S.rows();
    dim_ = p;
    terms_.reserve(i_taylor.size());
    for (const Vector& coeff : i_taylor) {
      if (coeff.size() != p) throw DimensionError("Taylor coefficient has wrong length");
      terms_.push_back(coeff.asDiagonal() * S);
      nonzero_.push_back(coeff.cwiseAbs().maxCoeff() > 0.0);
    }
    // Commutators are kept at order 1 too; omega2 then serves as the error estimate.
    const int K = static_cast<int>(terms_.size()) - 1;
    for (int l1 = 1; l1 <= K; ++l1) {
      for (int l2 = 0; l2 < l1; ++l2) {
        if (!nonzero_[l1] || !nonzero_[l2]) continue;
        Matrix c = terms_[l1] * terms_[l2] - terms_[l2] * terms_[l1];
        if (c.cwiseAbs().maxCoeff() == 0.0) continue;
        commutators_.push_back({l1, l2, std::move(c)});
      }
    }
  }

  Index dim() const { return dim_; }
  int order() const { return order_; }
  double alpha() const { return alpha_; }

  // Omega_1(h) = -(1-alpha) sum_l h^(l+1)/(l+1)! I^(l) S.
  Matrix omega1(double h) const {
    Matrix out = Matrix::Zero(dim_, dim_);
    double hp = h;
    for (std::size_t l = 0; l < terms_.size(); ++l) {
      if (nonzero_[l]) out.noalias() += (hp / linalg::factorial(static_cast<int>(l) + 1)) * terms_[l];
      hp *= h;
    }
    return -(1.0 - alpha_) * out;
  }

  // Omega_2(h) = (1-alpha)^2/2 sum_{l1>l2} (l1-l2) h^(l1+l2+2)
  //              / ((l1+1)! (l2+1)! (l1+l2+2)) [I^(l1) S, I^(l2) S].
  Matrix omega2(double h) const {
    Matrix out = Matrix::Zero(dim_, dim_);
    for (const auto& c : commutators_) {
      const int n = c.l1 + c.l2 + 2;
      const double coef = static_cast<double>(c.l1 - c.l2) * std::pow(h, n) /
                          (linalg::factorial(c.l1 + 1) * linalg::factorial(c.l2 + 1) * n);
      out.noalias() += coef * c.value;
    }
    const double om = 1.0 - alpha_;
    return 0.5 * om * om * out;
  }

  Matrix omega(double h) const {
    if (order_ == 1) return omega1(h);
    return omega1(h) + omega2(h);
  }

  Matrix propagator(double h) const { return linalg::expm(omega(h)); }

  // Leading term of the A(t) expansion, used for error estimates.
  const Matrix& leading() const { return terms_.front(); }

private:
  struct Commutator {
    int l1;
    int l2;
    Matrix value;
  };

  double alpha_ = 0.0;
  int order_ = 2;
  Index dim_ = 0;
  std::vector<Matrix> terms_;
  std::vector<bool> nonzero_;
  std::vector<Commutator> commutators_;
};

} // namespace elastic_paths
