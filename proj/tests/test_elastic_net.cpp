#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace elastic_paths;
using ep_test::vec;

namespace {

double sup(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

ENConfig en(double alpha, double lambda) {
  ENConfig c;
  c.alpha = alpha;
  c.lambda = lambda;
  return c;
}

} // namespace

TEST(ClosedForm, Examples) {
  const Vector ols = vec({2.0, -0.7, 0.1});
  EXPECT_EQ(en_closed_form_isotropic(ols, 0.4, 0.0), ols);
  EXPECT_TRUE(en_closed_form_isotropic(ols, 1.0, 2.0).isZero(0.0));
  EXPECT_DOUBLE_EQ(en_closed_form_isotropic(vec({2.0}), 0.5, 1.0)[0], 1.0);
  EXPECT_DOUBLE_EQ(en_closed_form_isotropic(vec({-2.0}), 0.5, 1.0)[0], -1.0);
}

TEST(ClosedForm, ZeroExactlyWhenBelowThreshold) {
  const Vector ols = vec({1.0, 0.5, -0.25, 0.75});
  for (double alpha : {0.2, 0.5, 1.0}) {
    for (double lambda : {0.1, 0.5, 1.0, 2.5}) {
      const Vector b = en_closed_form_isotropic(ols, alpha, lambda);
      for (Index d = 0; d < ols.size(); ++d) {
        EXPECT_EQ(b[d] == 0.0, std::abs(ols[d]) <= alpha * lambda) << alpha << " " << lambda << " " << d;
      }
    }
  }
}

TEST(CoordinateDescent, UnpenalizedIsOls) {
  const Dataset& d = ep_test::diabetes();
  const ENResult r = en_solve_cd(d, en(0.5, 0.0));
  ASSERT_TRUE(r.converged);
  EXPECT_LT(sup(r.beta, d.beta_ols), 1e-6);
}

TEST(CoordinateDescent, MatchesClosedFormOnIsotropicData) {
  const Dataset d = ep_test::isotropic(vec({1.3, -0.6, 0.2, 0.0, 2.1}));
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    for (double lambda : {0.0, 0.05, 0.3, 1.0, 3.0}) {
      const ENResult r = en_solve_cd(d, en(alpha, lambda));
      ASSERT_TRUE(r.converged);
      EXPECT_LT(sup(r.beta, en_closed_form_isotropic(d.beta_ols, alpha, lambda)), 1e-8)
          << alpha << " " << lambda;
    }
  }
}

TEST(CoordinateDescent, LassoVanishesAtLambdaMax) {
  const Dataset& d = ep_test::diabetes();
  const double lmax = d.lambda_max();
  EXPECT_TRUE(en_solve_cd(d, en(1.0, lmax)).beta.isZero(0.0));
  EXPECT_FALSE(en_solve_cd(d, en(1.0, 0.99 * lmax)).beta.isZero(0.0));
}

TEST(CoordinateDescent, ReportsNonConvergence) {
  ENConfig c = en(0.5, 1e-3);
  c.cd_max_iter = 1;
  const ENResult r = en_solve_cd(ep_test::diabetes(), c);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.sweeps, 1u);
}

TEST(CoordinateDescent, RejectsBadConfig) {
  const Dataset& d = ep_test::diabetes();
  EXPECT_THROW(en_solve_cd(d, en(1.5, 0.1)), InvalidArgument);
  EXPECT_THROW(en_solve_cd(d, en(0.5, -0.1)), InvalidArgument);
  EXPECT_THROW(en_solve_cd(d, en(0.5, 0.1), Vector::Zero(3)), DimensionError);
}

TEST(EnPath, SingleUnpenalizedPoint) {
  const Dataset& d = ep_test::diabetes();
  const auto path = en_path(d, 0.5, {0.0});
  ASSERT_EQ(path.size(), 1u);
  EXPECT_LT(sup(path[0].beta, d.beta_ols), 1e-6);
}

TEST(EnPath, LassoNormGrowsAsPenaltyShrinks) {
  const Dataset& d = ep_test::diabetes();
  const auto path = en_path(d, 1.0, lambda_grid(d, 1.0));
  ASSERT_EQ(path.size(), 100u);
  EXPECT_TRUE(path.front().beta.isZero(0.0));
  for (std::size_t i = 1; i < path.size(); ++i) {
    EXPECT_TRUE(path[i].converged);
    EXPECT_GE(path[i].beta.lpNorm<1>(), path[i - 1].beta.lpNorm<1>() - 1e-10) << i;
  }
}

TEST(EnPath, GridStartsAtZeroSolution) {
  const Dataset& d = ep_test::diabetes();
  for (double alpha : {0.3, 0.7}) {
    const std::vector<double> grid = lambda_grid(d, alpha);
    EXPECT_DOUBLE_EQ(grid.front(), d.lambda_max() / alpha);
    EXPECT_NEAR(grid.back() / grid.front(), 1e-4, 1e-16);
    EXPECT_TRUE(std::is_sorted(grid.rbegin(), grid.rend()));
    EXPECT_TRUE(en_path(d, alpha, grid).front().beta.isZero(0.0));
  }
}

TEST(EnPath, RejectsAscendingGrid) {
  EXPECT_THROW(en_path(ep_test::diabetes(), 0.5, {0.1, 0.2}), InvalidArgument);
}

TEST(Ridge, TwoFormsAgree) {
  const Dataset& d = ep_test::diabetes();
  const RidgeForms r = ridge_two_forms(d, 0.1);
  EXPECT_LT(sup(r.beta_a, r.beta_b), 1e-9);
  EXPECT_LT(sup(r.beta_a, ridge(d, 0.1)), 1e-9);
  EXPECT_LT(sup(ridge(d, 0.1), en_solve_cd(d, en(0.0, 0.1)).beta), 1e-8);
}

TEST(Ridge, IsotropicShrinksUniformly) {
  const Dataset d = ep_test::isotropic(vec({1.0, -3.0, 0.5}));
  const RidgeForms r = ridge_two_forms(d, 0.25);
  EXPECT_LT(sup(r.beta_a, d.beta_ols / 1.25), 1e-12);
  EXPECT_LT(sup(r.beta_b, d.beta_ols / 1.25), 1e-12);
  const RidgeForms big = ridge_two_forms(d, 1e8);
  EXPECT_LT(big.beta_a.cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT(big.beta_b.cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_THROW(ridge_two_forms(d, 0.0), DomainError);
}

TEST(LambdaMap, RidgeExamples) {
  EXPECT_NEAR(lambda_from_t_ridge(std::log(2.0)), 1.0, 1e-15);
  EXPECT_THROW(lambda_from_t_ridge(0.0), DomainError);
  EXPECT_THROW(lambda_from_t_approx(-1.0), DomainError);
  EXPECT_DOUBLE_EQ(lambda_from_t_approx(4.0), 0.25);
}

TEST(LambdaMap, GradientFlowIsRidgeOnIsotropicData) {
  const Dataset d = ep_test::isotropic(vec({1.2, -0.4, 0.9}));
  for (int k = 1; k <= 50; ++k) {
    const double t = 10.0 * k / 51.0;
    EXPECT_LT(sup(gradient_flow_beta(d, t), ridge(d, lambda_from_t_ridge(t))), 1e-9) << t;
  }
}

TEST(LambdaMap, LassoStartsAtFullPenalty) {
  const Dataset d = ep_test::isotropic(vec({2.0, -1.0}));
  FlowConfig c;
  c.alpha = 1.0;
  const AnalyticalPath path = coordinate_flow(d, c);
  const Vector lam = lambda_from_t(path, d.beta_ols, 0.0);
  EXPECT_LT(sup(lam, d.beta_ols.cwiseAbs()), 1e-15);
  // Along the flow each coordinate equals the lasso at its own penalty.
  for (double t = 0.1; t < path.t_final; t += 0.1) {
    const Vector l = lambda_from_t(path, d.beta_ols, t);
    const Vector b = path.beta(t);
    for (Index k = 0; k < d.p; ++k) {
      EXPECT_NEAR(b[k], en_closed_form_isotropic(d.beta_ols.segment(k, 1), 1.0, l[k])[0], 1e-10);
    }
  }
}

TEST(LambdaMap, ElasticFlowIsElasticNetOnIsotropicData) {
  const Dataset d = ep_test::isotropic(vec({2.0, 0.8}));
  const double alpha = 0.5;
  FlowConfig c;
  c.alpha = alpha;
  const AnalyticalPath path = elastic_flow(d, c);
  ASSERT_TRUE(path.converged);
  for (double t = 0.02; t < path.t_final; t += 0.05) {
    const Vector lam = lambda_from_t(path, d.beta_ols, t);
    const Vector b = path.beta(t);
    for (Index k = 0; k < d.p; ++k) {
      EXPECT_NEAR(b[k], en_closed_form_isotropic(d.beta_ols.segment(k, 1), alpha, lam[k])[0], 1e-8)
          << "t " << t << " coord " << k;
    }
  }
}

TEST(LambdaMap, PenaltyDecreasesWithTime) {
  const Dataset d = ep_test::isotropic(vec({1.5, -1.0, 0.4}));
  for (double alpha : {0.3, 0.7}) {
    FlowConfig c;
    c.alpha = alpha;
    const AnalyticalPath path = elastic_flow(d, c);
    for (const auto& seg : path.segments) {
      Vector prev = lambda_from_t(path, d.beta_ols, std::max(seg.t_start, 1e-9));
      const int n = 500;
      for (int j = 1; j <= n; ++j) {
        const double t = seg.t_start + (seg.t_end - seg.t_start) * j / n;
        const Vector cur = lambda_from_t(path, d.beta_ols, t);
        EXPECT_LE((cur - prev).maxCoeff(), 1e-10) << "alpha " << alpha << " t " << t;
        prev = cur;
      }
    }
  }
}
