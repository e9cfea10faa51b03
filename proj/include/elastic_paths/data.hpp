#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/dataset.hpp"
#include "elastic_paths/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace elastic_paths {

// Seedable generator with a fixed, platform-independent output sequence.
// std::mt19937_64 is fully specified by the standard; the distributions in
// <random> are not, so uniforms and normals are derived here.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on (0, 1) with 53 random bits.
  double uniform() {
    for (;;) {
      const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  // Box-Muller; the second deviate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix out(rows, cols);
    // Row-major fill so that row i depends only on the first i rows of draws.
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) out(i, j) = normal();
    }
    return out;
  }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// n draws from N(0, cov) as rows, using the symmetric square root of cov.
inline Matrix sample_mvn(Rng& rng, const Matrix& cov, Index n) {
  const Matrix root = linalg::symmetric_sqrt(cov);
  return rng.normal_matrix(n, cov.rows()) * root;
}

struct SimpleData {
  Matrix X_raw;
  Vector y_raw;
  Vector beta_true;
  Dataset data;
};

inline Matrix simple_covariance() {
  Matrix S = Matrix::Constant(3, 3, 0.7);
  S.diagonal().setOnes();
  return S;
}

// Three strongly correlated covariates, beta* = [1, 0.1, 0], no noise.
inline SimpleData gen_simple(Index n, std::uint64_t seed) {
  if (n < 3) throw InvalidArgument("gen_simple needs n >= 3");
  Rng rng(seed);
  SimpleData out;
  out.X_raw = sample_mvn(rng, simple_covariance(), n);
  out.beta_true = Vector(3);
  out.beta_true << 1.0, 0.1, 0.0;
  out.y_raw = out.X_raw * out.beta_true;
  out.data = Dataset::standardized(out.X_raw, out.y_raw);
  return out;
}

struct BlockSpec {
  Index p_half = 10;
  double rho1 = 0.7;
  double rho2 = 0.2;
  double sigma_noise = 10.0;
  Index n = 100;
  std::uint64_t seed = 1;

  Matrix covariance() const {
    const Index p = p_half;
    Matrix S(2 * p, 2 * p);
    Matrix within = Matrix::Constant(p, p, rho1);
    within.diagonal().setOnes();
    S.topLeftCorner(p, p) = within;
    S.bottomRightCorner(p, p) = within;
    S.topRightCorner(p, p).setConstant(rho2);
    S.bottomLeftCorner(p, p).setConstant(rho2);
    return S;
  }

  void validate() const {
    if (p_half < 1) throw InvalidArgument("p_half must be positive");
    if (n < 5) throw InvalidArgument("n must be at least 5 for a 60/20/20 split");
    if (!(sigma_noise >= 0.0)) throw InvalidArgument("sigma_noise must be non-negative");
    if (linalg::min_eigenvalue(covariance()) < -1e-10) {
      throw NotPSD("block covariance with rho1 = " + std::to_string(rho1) +
                   ", rho2 = " + std::to_string(rho2) + " is indefinite");
    }
  }
};

struct BlockData {
  Vector beta_true;
  std::vector<bool> support;
  // Standardized with the training statistics.
  Dataset train;
  Dataset val;
  Dataset test;
  Standardizer standardizer;
};

inline BlockData gen_blocks(const BlockSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Index p = 2 * spec.p_half;
  BlockData out;
  out.beta_true = Vector::Zero(p);
  for (Index d = 0; d < spec.p_half; ++d) out.beta_true[d] = rng.normal(2.0, 1.0);
  out.support.assign(static_cast<std::size_t>(p), false);
  for (Index d = 0; d < spec.p_half; ++d) out.support[static_cast<std::size_t>(d)] = true;

  const Matrix X = sample_mvn(rng, spec.covariance(), spec.n);
  Vector y = X * out.beta_true;
  for (Index i = 0; i < spec.n; ++i) y[i] += spec.sigma_noise * rng.normal();

  const Index n_train = (spec.n * 6) / 10;
  const Index n_val = (spec.n * 2) / 10;
  const Index n_test = spec.n - n_train - n_val;
  const Matrix Xtr = X.topRows(n_train);
  const Vector ytr = y.head(n_train);
  out.standardizer = Standardizer::fit(Xtr, ytr);
  const Standardizer& st = out.standardizer;
  out.train = Dataset::from_design(st.apply_x(Xtr), st.apply_y(ytr));
  out.val = Dataset::from_design(st.apply_x(X.middleRows(n_train, n_val)),
                                 st.apply_y(y.segment(n_train, n_val)));
  out.test = Dataset::from_design(st.apply_x(X.bottomRows(n_test)), st.apply_y(y.tail(n_test)));
  return out;
}

struct Table {
  std::vector<std::string> header;
  Matrix values;
};

// Tab-separated numeric table with one header line.
inline Table read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, 0, "cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, 0, "missing header");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) {
      if (!cell.empty() && cell.back() == '\r') cell.pop_back();
      t.header.push_back(cell);
    }
  }
  const std::size_t cols = t.header.size();
  std::vector<std::vector<double>> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, '\t')) {
      ++col;
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw ParseError(row, col, "not a number: '" + cell + "'");
      }
      if (used != cell.size()) throw ParseError(row, col, "trailing characters in '" + cell + "'");
      r.push_back(v);
    }
    if (r.size() != cols) {
      throw ParseError(row, r.size(), "expected " + std::to_string(cols) + " columns, got " +
                                          std::to_string(r.size()));
    }
    rows.push_back(std::move(r));
  }
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return t;
}

// Design (all but the last column) and response (last column) from a TSV file.
inline Dataset load_tsv_dataset(const std::string& path) {
  const Table t = read_tsv(path);
  if (t.values.cols() < 2) throw ShapeError("need at least one covariate and a response");
  const Index p = t.values.cols() - 1;
  return Dataset::standardized(t.values.leftCols(p), t.values.col(p));
}

// 442 patients, 10 baseline covariates (age, sex, bmi, bp and six serum
// measurements) and a disease progression target.
inline Dataset load_diabetes(const std::string& path) {
  const Table t = read_tsv(path);
  if (t.values.rows() != 442 || t.values.cols() != 11) {
    throw ShapeError("diabetes table must be 442x11, got " + std::to_string(t.values.rows()) +
                     "x" + std::to_string(t.values.cols()));
  }
  return Dataset::standardized(t.values.leftCols(10), t.values.col(10));
}

} // namespace elastic_paths
