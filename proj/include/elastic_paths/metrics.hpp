#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/dataset.hpp"
#include "elastic_paths/descent.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

namespace elastic_paths {

inline constexpr double kZeroTol = 1e-8;

inline std::vector<bool> support_of(const Vector& beta, double zero_tol = kZeroTol) {
  std::vector<bool> s(static_cast<std::size_t>(beta.size()));
  for (Index d = 0; d < beta.size(); ++d) s[static_cast<std::size_t>(d)] = std::abs(beta[d]) > zero_tol;
  return s;
}

struct ConfusionRates {
  // Absent when the corresponding class is empty.
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

inline ConfusionRates confusion_rates(const Vector& beta_hat, const std::vector<bool>& truth,
                                      double zero_tol = kZeroTol) {
  if (static_cast<std::size_t>(beta_hat.size()) != truth.size()) {
    throw DimensionError("estimate and support differ in length");
  }
  std::size_t tp = 0, pos = 0, tn = 0, neg = 0;
  for (std::size_t d = 0; d < truth.size(); ++d) {
    const bool sel = std::abs(beta_hat[static_cast<Index>(d)]) > zero_tol;
    if (truth[d]) {
      ++pos;
      tp += sel ? 1 : 0;
    } else {
      ++neg;
      tn += sel ? 0 : 1;
    }
  }
  ConfusionRates r;
  if (pos > 0) r.sensitivity = static_cast<double>(tp) / static_cast<double>(pos);
  if (neg > 0) r.specificity = static_cast<double>(tn) / static_cast<double>(neg);
  return r;
}

// Fraction of [0, max ||beta||_1] on which the path's support equals the
// truth. The l1 axis is traversed by first passage (running maximum), and
// each newly covered stretch is weighted by the mean indicator at its ends.
inline double true_path_rate(const std::vector<Vector>& betas, const std::vector<bool>& truth,
                             double zero_tol = kZeroTol) {
  if (betas.empty()) throw InvalidArgument("path is empty");
  auto correct = [&](const Vector& b) { return support_of(b, zero_tol) == truth ? 1.0 : 0.0; };
  double l1_max = 0.0;
  for (const auto& b : betas) l1_max = std::max(l1_max, b.lpNorm<1>());
  double prev_ind = correct(betas.front());
  if (betas.size() == 1 || l1_max == 0.0) return prev_ind;
  double reach = betas.front().lpNorm<1>();
  double acc = reach * prev_ind;
  for (std::size_t i = 1; i < betas.size(); ++i) {
    const double ind = correct(betas[i]);
    const double l1 = betas[i].lpNorm<1>();
    if (l1 > reach) {
      acc += (l1 - reach) * 0.5 * (prev_ind + ind);
      reach = l1;
    }
    prev_ind = ind;
  }
  return std::clamp(acc / l1_max, 0.0, 1.0);
}

inline std::vector<Vector> path_betas(const SolutionPath& path) {
  std::vector<Vector> out;
  out.reserve(path.size());
  for (const auto& s : path.samples) out.push_back(s.beta);
  return out;
}

inline double true_path_rate(const SolutionPath& path, const std::vector<bool>& truth,
                             double zero_tol = kZeroTol) {
  return true_path_rate(path_betas(path), truth, zero_tol);
}

// Distinct non-empty supports along the path.
inline std::size_t count_models(const std::vector<Vector>& betas, double zero_tol = kZeroTol) {
  if (betas.empty()) throw InvalidArgument("path is empty");
  std::set<std::vector<bool>> seen;
  for (const auto& b : betas) {
    std::vector<bool> s = support_of(b, zero_tol);
    if (std::none_of(s.begin(), s.end(), [](bool v) { return v; })) continue;
    seen.insert(std::move(s));
  }
  return seen.size();
}

inline std::size_t count_models(const SolutionPath& path, double zero_tol = kZeroTol) {
  return count_models(path_betas(path), zero_tol);
}

// Point where the path first reaches ||beta||_1 = l1, interpolated linearly
// between the bracketing samples; the last sample if it never does.
inline Vector beta_at_l1(const std::vector<Vector>& betas, double l1) {
  if (betas.empty()) throw InvalidArgument("path is empty");
  double prev = betas.front().lpNorm<1>();
  if (l1 <= prev) return betas.front();
  for (std::size_t i = 1; i < betas.size(); ++i) {
    const double cur = betas[i].lpNorm<1>();
    if (cur >= l1) {
      const double u = cur > prev ? (l1 - prev) / (cur - prev) : 1.0;
      return (1.0 - u) * betas[i - 1] + u * betas[i];
    }
    prev = std::max(prev, cur);
  }
  return betas.back();
}

// Largest pointwise sup-norm difference of two paths aligned by ||beta||_1
// on n points of [0, min of the two maximal l1 norms].
inline double aligned_sup_diff(const std::vector<Vector>& a, const std::vector<Vector>& b,
                               std::size_t n = 400) {
  double ma = 0.0, mb = 0.0;
  for (const auto& v : a) ma = std::max(ma, v.lpNorm<1>());
  for (const auto& v : b) mb = std::max(mb, v.lpNorm<1>());
  const double top = std::min(ma, mb);
  double worst = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double l1 = top * static_cast<double>(i) / static_cast<double>(n);
    worst = std::max(worst, (beta_at_l1(a, l1) - beta_at_l1(b, l1)).cwiseAbs().maxCoeff());
  }
  return worst;
}

struct PathMetrics {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double test_mse = 0.0;
  double true_path_rate = 0.0;
};

enum class Criterion { ValMSE, OneSE_CV };

inline std::string_view to_string(Criterion c) {
  return c == Criterion::ValMSE ? "val-mse" : "one-se-cv";
}

// One path of a selection grid. params are times (penalty decreasing in the
// parameter) or lambdas (penalty increasing), with betas[i] at params[i].
struct GridPath {
  double alpha = 0.0;
  bool params_are_lambda = false;
  std::vector<double> params;
  std::vector<Vector> betas;

  double penalty(std::size_t i) const { return params_are_lambda ? params[i] : -params[i]; }
};

struct SelectionResult {
  double alpha_star = 0.0;
  double t_or_lambda_star = 0.0;
  Vector beta_star;
  Criterion criterion = Criterion::ValMSE;
  std::size_t path_index = 0;
  std::size_t point_index = 0;
  double score = 0.0;
};

namespace detail {

inline bool mse_ties(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace detail

// Lowest validation MSE; ties go to the larger penalty, then the smaller alpha.
inline SelectionResult select_val_mse(const std::vector<GridPath>& grid, const Dataset& val) {
  bool found = false;
  SelectionResult best;
  double best_pen = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const GridPath& gp = grid[k];
    if (gp.params.size() != gp.betas.size()) throw DimensionError("grid path is inconsistent");
    for (std::size_t i = 0; i < gp.betas.size(); ++i) {
      const double mse = val.mse(gp.betas[i]);
      const double pen = gp.penalty(i);
      bool take = !found;
      if (found) {
        if (detail::mse_ties(mse, best.score)) {
          take = pen > best_pen || (pen == best_pen && gp.alpha < best.alpha_star);
        } else {
          take = mse < best.score;
        }
      }
      if (take) {
        found = true;
        best.alpha_star = gp.alpha;
        best.t_or_lambda_star = gp.params[i];
        best.beta_star = gp.betas[i];
        best.path_index = k;
        best.point_index = i;
        best.score = mse;
        best_pen = pen;
      }
    }
  }
  if (!found) throw InvalidArgument("selection grid is empty");
  best.criterion = Criterion::ValMSE;
  return best;
}

// Fits the solver at the given hyperparameters: returns betas at params.
using PathSolver =
    std::function<std::vector<Vector>(const Dataset& train, const std::vector<double>& params)>;

inline Dataset row_subset(const Dataset& data, const std::vector<Index>& rows) {
  Matrix X(static_cast<Index>(rows.size()), data.p);
  Vector y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(static_cast<Index>(i)) = data.X.row(rows[i]);
    y[static_cast<Index>(i)] = data.y[rows[i]];
  }
  return Dataset::from_design(std::move(X), std::move(y));
}

struct CVCurve {
  std::vector<double> mean;
  std::vector<double> se;
  std::size_t argmin = 0;
};

// K contiguous folds over the rows of data.
inline CVCurve cv_curve(const Dataset& data, const std::vector<double>& params,
                        const PathSolver& solver, int folds) {
  if (folds < 2) throw InvalidArgument("need at least two folds");
  if (data.n < folds) throw InvalidArgument("more folds than observations");
  const std::size_t np = params.size();
  std::vector<std::vector<double>> fold_mse(static_cast<std::size_t>(folds), std::vector<double>(np));
  for (int f = 0; f < folds; ++f) {
    const Index lo = data.n * f / folds;
    const Index hi = data.n * (f + 1) / folds;
    std::vector<Index> train_rows, test_rows;
    for (Index i = 0; i < data.n; ++i) (i >= lo && i < hi ? test_rows : train_rows).push_back(i);
    const Dataset tr = row_subset(data, train_rows);
    const Dataset te = row_subset(data, test_rows);
    const std::vector<Vector> betas = solver(tr, params);
    if (betas.size() != np) throw DimensionError("solver returned the wrong number of points");
    for (std::size_t j = 0; j < np; ++j) fold_mse[static_cast<std::size_t>(f)][j] = te.mse(betas[j]);
  }
  CVCurve c;
  c.mean.assign(np, 0.0);
  c.se.assign(np, 0.0);
  const double K = static_cast<double>(folds);
  for (std::size_t j = 0; j < np; ++j) {
    double s = 0.0;
    for (int f = 0; f < folds; ++f) s += fold_mse[static_cast<std::size_t>(f)][j];
    const double mean = s / K;
    double ss = 0.0;
    for (int f = 0; f < folds; ++f) {
      const double d = fold_mse[static_cast<std::size_t>(f)][j] - mean;
      ss += d * d;
    }
    c.mean[j] = mean;
    c.se[j] = std::sqrt(ss / (K - 1.0)) / std::sqrt(K);
  }
  for (std::size_t j = 1; j < np; ++j) {
    if (c.mean[j] < c.mean[c.argmin]) c.argmin = j;
  }
  return c;
}

// Largest penalty whose mean CV error is within one standard error of the
// minimum. penalty_increasing says whether params grow with the penalty
// (lambdas) or shrink with it (times).
inline SelectionResult select_one_se_cv(const Dataset& data, double alpha_star,
                                        const std::vector<double>& params, bool penalty_increasing,
                                        const PathSolver& solver, int folds = 10) {
  if (params.empty()) throw InvalidArgument("parameter grid is empty");
  const CVCurve c = cv_curve(data, params, solver, folds);
  const double bound = c.mean[c.argmin] + c.se[c.argmin];
  std::size_t pick = c.argmin;
  for (std::size_t j = 0; j < params.size(); ++j) {
    if (c.mean[j] > bound) continue;
    const bool more_penalty =
        penalty_increasing ? params[j] > params[pick] : params[j] < params[pick];
    if (more_penalty) pick = j;
  }
  SelectionResult r;
  r.criterion = Criterion::OneSE_CV;
  r.alpha_star = alpha_star;
  r.t_or_lambda_star = params[pick];
  r.point_index = pick;
  r.score = c.mean[pick];
  r.beta_star = solver(data, {params[pick]}).front();
  return r;
}

} // namespace elastic_paths
