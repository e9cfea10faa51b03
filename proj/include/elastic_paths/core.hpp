#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace elastic_paths {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Mask = std::vector<bool>;
using Index = Eigen::Index;

// Error hierarchy. Every error thrown by the library derives from Error so
// callers can catch at whatever granularity they need.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

// The gradient is identically zero, so no descent direction exists.
class AllZeroGradient : public Error {
public:
  AllZeroGradient() : Error("gradient is identically zero") {}
};

class NonFiniteIterate : public Error {
public:
  explicit NonFiniteIterate(std::size_t step)
      : Error("non-finite iterate at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

class SingularSystem : public Error {
public:
  using Error::Error;
};

class TruncationBreakdown : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class NotPSD : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error("parse error at row " + std::to_string(row) + ", column " +
              std::to_string(column) + ": " + what),
        row_(row), column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t row_;
  std::size_t column_;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

// sgn(0) := 0.
inline double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline Vector sign(const Vector& v) { return v.unaryExpr([](double x) { return sign(x); }); }

// Index of the largest |v_d|, ties broken by the lowest index.
inline Index argmax_abs(const Vector& v) {
  Index best = 0;
  double best_abs = -1.0;
  for (Index d = 0; d < v.size(); ++d) {
    const double a = std::abs(v[d]);
    if (a > best_abs) {
      best_abs = a;
      best = d;
    }
  }
  return best;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

} // namespace elastic_paths
