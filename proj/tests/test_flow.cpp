#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace elastic_paths;
using ep_test::vec;

namespace {

FlowConfig with_alpha(double a) {
  FlowConfig cfg;
  cfg.alpha = a;
  return cfg;
}

SolutionPath discrete(const Dataset& d, double alpha, double step, std::size_t max_steps) {
  DescentConfig dc;
  dc.alpha = alpha;
  dc.step = step;
  dc.flavor = Flavor::Unnormalized;
  dc.max_steps = max_steps;
  return run_descent(d, dc);
}

} // namespace

TEST(GradientFlowBeta, Examples) {
  const Dataset& d = ep_test::diabetes();
  EXPECT_LT(gradient_flow_beta(d, 0.0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((gradient_flow_beta(d, 1e4) - d.beta_ols).cwiseAbs().maxCoeff(), 1e-6);
  const Dataset iso = ep_test::isotropic(vec({2.0, -0.5}));
  const Vector b = gradient_flow_beta(iso, 1.0);
  EXPECT_NEAR(b[0], 2.0 * (1.0 - std::exp(-1.0)), 1e-14);
  EXPECT_NEAR(b[1], -0.5 * (1.0 - std::exp(-1.0)), 1e-14);
  EXPECT_THROW(gradient_flow_beta(d, -1.0), DomainError);
}

TEST(GradientFlow, PathMatchesClosedForm) {
  const Dataset& d = ep_test::diabetes();
  const AnalyticalPath path = gradient_flow(d, with_alpha(0.0));
  ASSERT_TRUE(path.converged);
  for (double t : {0.0, 0.3, 2.0, 40.0}) {
    EXPECT_LT((path.beta(t) - gradient_flow_beta(d, t)).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_LT(path.gradient(path.t_final).cwiseAbs().maxCoeff(), 1e-6 * d.lambda_max() * 1.0001);
  EXPECT_THROW(path.beta(-0.1), DomainError);
}

TEST(CoordinateFlow, IsotropicHandExample) {
  const Dataset d = ep_test::isotropic(vec({2.0, 1.0}));
  const AnalyticalPath path = coordinate_flow(d, with_alpha(1.0));
  ASSERT_EQ(path.segments.size(), 2u);
  const FlowSegment& s0 = path.segments[0];
  EXPECT_NEAR(s0.t_end, 1.0, 1e-12);
  EXPECT_EQ(s0.end_event, FlowEvent::InactiveJoins);
  EXPECT_LT((s0.i_diag(0.5) - vec({1.0, 0.0})).cwiseAbs().maxCoeff(), 1e-14);
  const FlowSegment& s1 = path.segments[1];
  EXPECT_LT((s1.i_diag(2.0) - vec({0.5, 0.5})).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(s1.end_event, FlowEvent::Converged);
  EXPECT_TRUE(path.converged);
  EXPECT_NEAR(path.t_final, 3.0, 1e-9);
  EXPECT_LT((path.beta_final - vec({2.0, 1.0})).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((path.beta(0.5) - vec({0.5, 0.0})).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((path.beta(2.0) - vec({1.5, 0.5})).cwiseAbs().maxCoeff(), 1e-12);

  // Same answer from small-step coordinate descent.
  const SolutionPath cd = discrete(d, 1.0, 1e-4, 40'000);
  EXPECT_LT(ep_test::time_aligned_sup(path, cd, 3.0), 2e-4);
}

TEST(CoordinateFlow, SingleCoordinate) {
  const Dataset d = ep_test::isotropic(vec({-1.7}));
  const AnalyticalPath path = coordinate_flow(d, with_alpha(1.0));
  ASSERT_EQ(path.segments.size(), 1u);
  for (double t : {0.0, 0.5, 1.7, 3.0}) {
    EXPECT_NEAR(path.beta(t)[0], -std::min(t, 1.7), 1e-12);
  }
}

TEST(CoordinateFlow, MatchesForwardStagewiseOnDiabetes) {
  const Dataset& d = ep_test::diabetes();
  const AnalyticalPath path = coordinate_flow(d, with_alpha(1.0));
  ASSERT_TRUE(path.converged);
  const auto steps = static_cast<std::size_t>(path.t_final / 1e-4);
  const SolutionPath cd = discrete(d, 1.0, 1e-4, steps);
  EXPECT_LT(ep_test::time_aligned_sup(path, cd, path.t_final, 50), 1e-2);
}

TEST(CoordinateFlow, PiecewiseLinear) {
  const AnalyticalPath path = coordinate_flow(ep_test::diabetes(), with_alpha(1.0));
  EXPECT_LT(ep_test::max_second_difference(path), 1e-10);
  EXPECT_LT(ep_test::continuity_gap(path), 1e-8);
}

TEST(ElasticFlow, DelegatesAtEndpoints) {
  const Dataset& d = ep_test::diabetes();
  const AnalyticalPath g0 = elastic_flow(d, with_alpha(0.0));
  const AnalyticalPath g1 = gradient_flow(d, with_alpha(0.0));
  const AnalyticalPath c0 = elastic_flow(d, with_alpha(1.0));
  const AnalyticalPath c1 = coordinate_flow(d, with_alpha(1.0));
  for (double t = 0.0; t < 60.0; t += 0.37) {
    EXPECT_LT((g0.beta(t) - g1.beta(t)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((g0.beta(t) - gradient_flow_beta(d, t)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((c0.beta(t) - c1.beta(t)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ElasticFlow, ApproachesCoordinateFlowAsAlphaTendsToOne) {
  const Dataset d = ep_test::from_moments(
      (Matrix(3, 3) << 1.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 1.0).finished(),
      vec({1.5, 0.8, -0.6}));
  const AnalyticalPath cf = coordinate_flow(d, with_alpha(1.0));
  const AnalyticalPath ef = elastic_flow(d, with_alpha(1.0 - 1e-6));
  // Tied coordinates each move at unit speed in the elastic flow, so the two
  // agree as paths in ||beta||_1 rather than in t.
  EXPECT_LT(aligned_sup_diff(path_betas(cf.sample_uniform(1e-4)), path_betas(ef.sample_uniform(1e-4))),
            1e-4);
  for (std::size_t k = 0; k + 1 < cf.segments.size(); ++k) {
    EXPECT_EQ(cf.segments[k].sets[0], CoordSet::Free);
  }
}

TEST(ElasticFlow, MatchesDescentOnDiabetes) {
  const Dataset& d = ep_test::diabetes();
  const AnalyticalPath path = elastic_flow(d, with_alpha(0.5));
  ASSERT_TRUE(path.converged);
  EXPECT_FALSE(path.has_fallback());
  const SolutionPath egd = discrete(d, 0.5, 1e-3, 1'000'000);
  const double scale = d.beta_ols.cwiseAbs().maxCoeff();
  EXPECT_LT(ep_test::time_aligned_sup(path, egd, path.t_final, 10) / scale, 0.05);
}

TEST(ElasticFlow, SatisfiesOdeAndIsContinuous) {
  const Dataset& d = ep_test::diabetes();
  for (double a : {0.3, 0.7}) {
    const AnalyticalPath path = elastic_flow(d, with_alpha(a));
    ASSERT_TRUE(path.converged);
    EXPECT_LT(ep_test::flow_ode_residual(path), 1e-4) << "alpha " << a;
    EXPECT_LT(ep_test::continuity_gap(path), 1e-8) << "alpha " << a;
  }
}

TEST(ElasticFlow, SetsAgreeWithGradients) {
  const Dataset& d = ep_test::diabetes();
  const double alpha = 0.5;
  const AnalyticalPath path = elastic_flow(d, with_alpha(alpha));
  const Vector g0 = d.cov * Vector::Zero(d.p) - d.xty;
  EXPECT_EQ(path.segments.front().sets,
            detail::classify(g0, argmax_abs(g0), alpha, FlowConfig{}.classification_tol));
  for (const auto& seg : path.segments) {
    const double t = 0.5 * (seg.t_start + seg.t_end);
    const Vector g = path.cov * seg.beta(t) - path.xty;
    const double G = std::abs(g[seg.m]);
    EXPECT_EQ(seg.sets[static_cast<std::size_t>(seg.m)], CoordSet::Free);
    for (Index k = 0; k < d.p; ++k) {
      const double gap = std::abs(g[k]) - alpha * G;
      switch (seg.sets[static_cast<std::size_t>(k)]) {
      case CoordSet::Free: EXPECT_GT(gap, -1e-7 * G); break;
      case CoordSet::Inactive: EXPECT_LT(gap, 1e-7 * G); break;
      case CoordSet::Coupled: EXPECT_LT(std::abs(gap), 1e-6 * G); break;
      }
      EXPECT_LE(std::abs(g[k]), G * (1.0 + 1e-7));
    }
  }
}

TEST(ElasticFlow, TransitionsFollowFiredCriteria) {
  const AnalyticalPath path = elastic_flow(ep_test::diabetes(), with_alpha(0.5));
  for (std::size_t k = 0; k + 1 < path.segments.size(); ++k) {
    const FlowSegment& a = path.segments[k];
    const FlowSegment& b = path.segments[k + 1];
    if (a.end_event == FlowEvent::Horizon) {
      EXPECT_EQ(a.sets, b.sets);
      continue;
    }
    for (const auto& f : a.fired) {
      const CoordSet next = b.sets[static_cast<std::size_t>(f.coord)];
      switch (f.event) {
      // A crossing coordinate leaves its set. It becomes Coupled unless the
      // coupled rate would fall outside [0, 1].
      case FlowEvent::InactiveJoins: EXPECT_NE(next, CoordSet::Inactive); break;
      case FlowEvent::FreeLeaves: EXPECT_NE(next, CoordSet::Free); break;
      case FlowEvent::MaxChanges: EXPECT_EQ(b.m, f.coord); break;
      default: break;
      }
    }
  }
}

TEST(DetectNextEvent, IsotropicCoordinateFlow) {
  const Dataset d = ep_test::isotropic(vec({2.0, 1.0}));
  const AnalyticalPath path = coordinate_flow(d, with_alpha(1.0));
  const auto [t, ev] = detect_next_event(path.segments.front(), d, with_alpha(1.0), 2.5);
  EXPECT_NEAR(t, 1.0, 1e-9);
  EXPECT_EQ(ev, FlowEvent::InactiveJoins);
}

TEST(DetectNextEvent, ConvergesWithoutSetChanges) {
  const Dataset d = ep_test::isotropic(vec({2.0}));
  const double alpha = 0.3;
  const AnalyticalPath path = elastic_flow(d, with_alpha(alpha));
  ASSERT_TRUE(path.converged);
  const auto [t, ev] = detect_next_event(path.segments.front(), d, with_alpha(alpha), 100.0);
  EXPECT_EQ(ev, FlowEvent::Converged);
  // |g|' = -(alpha + (1 - alpha)|g|) from |g| = 2 down to the tolerance 2e-6.
  const double a = alpha / (1.0 - alpha);
  const double expect = std::log((2.0 + a) / (2e-6 + a)) / (1.0 - alpha);
  EXPECT_NEAR(t, expect, 1e-8);
  EXPECT_NEAR(path.t_final, expect, 1e-8);
}

TEST(DetectNextEvent, InactiveJoinsAgainstDenseGrid) {
  Matrix cov(2, 2);
  cov << 1.0, 0.2, 0.2, 1.0;
  // xty = cov beta_ols = [2, 0.9]: coordinate 2 starts inactive at alpha = 0.5.
  const Vector beta_ols = cov.ldlt().solve(vec({2.0, 0.9}));
  const Dataset d = ep_test::from_moments(cov, beta_ols);
  const double alpha = 0.5;
  const AnalyticalPath path = elastic_flow(d, with_alpha(alpha));
  ASSERT_EQ(path.segments.front().sets[1], CoordSet::Inactive);
  std::size_t k = 0;
  while (k < path.segments.size() && path.segments[k].end_event == FlowEvent::Horizon) ++k;
  ASSERT_LT(k, path.segments.size());
  const FlowSegment& seg = path.segments[k];
  ASSERT_EQ(seg.end_event, FlowEvent::InactiveJoins);

  double t_dense = -1.0;
  for (double t = 0.0; t < seg.t_end + 1.0; t += 1e-5) {
    const Vector g = d.cov * path.beta(t) - d.xty;
    if (alpha * std::abs(g[0]) - std::abs(g[1]) < 0.0) {
      t_dense = t;
      break;
    }
  }
  ASSERT_GT(t_dense, 0.0);
  EXPECT_NEAR(seg.t_end, t_dense, 1e-5);
  const auto [t, ev] = detect_next_event(seg, d, with_alpha(alpha), seg.t_end + 0.1);
  EXPECT_EQ(ev, FlowEvent::InactiveJoins);
  EXPECT_NEAR(t, seg.t_end, 1e-9);
}

TEST(DetectNextEvent, HorizonWhenNothingFires) {
  const Dataset d = ep_test::isotropic(vec({2.0, 1.0}));
  const AnalyticalPath path = coordinate_flow(d, with_alpha(1.0));
  const auto [t, ev] = detect_next_event(path.segments.front(), d, with_alpha(1.0), 0.5);
  EXPECT_EQ(t, 0.5);
  EXPECT_EQ(ev, FlowEvent::Horizon);
}

TEST(ElasticFlow, FallbackReproducesFineDescent) {
  const Dataset& d = ep_test::diabetes();
  FlowConfig cfg = with_alpha(0.5);
  // Every analytical segment is refused, so the whole path is discrete.
  cfg.min_segment_dt = 10.0;
  const AnalyticalPath path = elastic_flow(d, cfg);
  EXPECT_TRUE(path.has_fallback());
  EXPECT_TRUE(path.converged);
  const SolutionPath egd = discrete(d, 0.5, 1e-4, 2000);
  for (std::size_t i = 0; i < egd.size(); i += 100) {
    EXPECT_LT((path.beta(egd.samples[i].t) - egd.samples[i].beta).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_LT(ep_test::continuity_gap(path), 1e-12);

  cfg.allow_fallback = false;
  EXPECT_THROW(elastic_flow(d, cfg), TruncationBreakdown);
}

TEST(ElasticFlow, SingularCovarianceIsRidged) {
  Rng rng(4);
  Matrix X = rng.normal_matrix(50, 3);
  X.col(2) = X.col(0);
  const Vector y = X.col(0) + 0.5 * X.col(1);
  const Dataset d = Dataset::standardized(X, y);
  const AnalyticalPath path = elastic_flow(d, with_alpha(0.5));
  EXPECT_TRUE(path.ridged);
  EXPECT_TRUE(path.converged);
  EXPECT_LT((d.X * path.beta_final - d.y).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(ElasticFlow, TimeCapStopsThePath) {
  FlowConfig cfg = with_alpha(0.5);
  cfg.t_max = 2.0;
  const AnalyticalPath path = elastic_flow(ep_test::diabetes(), cfg);
  EXPECT_FALSE(path.converged);
  EXPECT_NEAR(path.t_final, 2.0, 1e-12);
}

TEST(ElasticFlow, MagnusOmegaAccessor) {
  const AnalyticalPath path = elastic_flow(ep_test::diabetes(), with_alpha(0.5));
  const FlowSegment& seg = path.segments.front();
  const Matrix om = magnus_omega(seg, 0.5, seg.t_end);
  EXPECT_LT((linalg::expm(om) - seg.magnus.propagator(seg.t_end - seg.t_start)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(magnus_omega(seg, 0.4, seg.t_end), InvalidArgument);
  EXPECT_THROW(magnus_omega(seg, 0.5, seg.t_end + 1.0), DomainError);
}

TEST(FlowConfig, Validation) {
  FlowConfig cfg;
  cfg.alpha = -0.1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.alpha = 0.5;
  cfg.magnus_order = 3;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.magnus_order = 2;
  cfg.samples_per_segment = 1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}
