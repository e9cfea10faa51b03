#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace elastic_paths;

namespace {

ExperimentConfig small_config(int reps, unsigned threads) {
  ExperimentConfig c;
  c.alphas = {0.3, 0.7};
  c.reps = reps;
  c.threads = threads;
  c.en_grid_size = 30;
  c.folds = 5;
  return c;
}

void expect_same(const MethodOutcome& a, const MethodOutcome& b) {
  EXPECT_EQ(a.alpha_star, b.alpha_star);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(a.param_star[k], b.param_star[k]);
    EXPECT_EQ(a.metrics[k].sensitivity, b.metrics[k].sensitivity);
    EXPECT_EQ(a.metrics[k].specificity, b.metrics[k].specificity);
    EXPECT_EQ(a.metrics[k].test_mse, b.metrics[k].test_mse);
    EXPECT_EQ(a.metrics[k].true_path_rate, b.metrics[k].true_path_rate);
  }
}

} // namespace

TEST(Summarize, MeanSdAndSe) {
  const Summary s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.sd, std::sqrt(5.0 / 3.0));
  EXPECT_DOUBLE_EQ(s.se, std::sqrt(5.0 / 3.0) / 2.0);
  EXPECT_EQ(s.count, 4u);
  EXPECT_EQ(summarize({}).count, 0u);
  EXPECT_EQ(summarize({7.0}).sd, 0.0);
}

TEST(WorkerCount, ClampsToJobs) {
  EXPECT_EQ(detail::worker_count(8, 3), 3u);
  EXPECT_EQ(detail::worker_count(2, 10), 2u);
  EXPECT_GE(detail::worker_count(0, 10), 1u);
}

TEST(Experiment, ReplicatesAreValidAndDeterministic) {
  BlockSpec spec;
  const auto a = run_cell(spec, small_config(3, 1));
  const auto b = run_cell(spec, small_config(3, 1));
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    expect_same(a[k].egd, b[k].egd);
    expect_same(a[k].en, b[k].en);
    for (const MethodOutcome* m : {&a[k].egd, &a[k].en}) {
      for (int c = 0; c < 2; ++c) {
        const PathMetrics& pm = m->metrics[c];
        ASSERT_TRUE(pm.sensitivity && pm.specificity);
        EXPECT_GE(*pm.sensitivity, 0.0);
        EXPECT_LE(*pm.sensitivity, 1.0);
        EXPECT_GE(*pm.specificity, 0.0);
        EXPECT_LE(*pm.specificity, 1.0);
        EXPECT_GE(pm.true_path_rate, 0.0);
        EXPECT_LE(pm.true_path_rate, 1.0);
        EXPECT_GT(pm.test_mse, 0.0);
      }
    }
  }
}

TEST(Experiment, IndependentOfThreadCount) {
  BlockSpec spec;
  spec.rho1 = 0.9;
  spec.rho2 = 0.0;
  const auto serial = run_cell(spec, small_config(4, 1));
  const auto parallel = run_cell(spec, small_config(4, 3));
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t k = 0; k < serial.size(); ++k) {
    expect_same(serial[k].egd, parallel[k].egd);
    expect_same(serial[k].en, parallel[k].en);
  }
}

TEST(Experiment, EasyRegimeRecoversSupport) {
  BlockSpec spec;
  spec.rho1 = 0.0;
  spec.rho2 = 0.0;
  spec.sigma_noise = 0.1;
  spec.n = 400;
  const auto reps = run_cell(spec, small_config(2, 1));
  for (const auto& r : reps) {
    EXPECT_EQ(r.egd.metrics[0].sensitivity, 1.0);
    EXPECT_EQ(r.en.metrics[0].sensitivity, 1.0);
    EXPECT_LT(r.egd.metrics[0].test_mse, 0.1);
    EXPECT_LT(r.en.metrics[0].test_mse, 0.1);
  }
}

TEST(Experiment, CollectAndPairedDifferences) {
  std::vector<ReplicateOutcome> reps(2);
  reps[0].egd.metrics[0].test_mse = 3.0;
  reps[0].en.metrics[0].test_mse = 5.0;
  reps[1].egd.metrics[0].test_mse = 4.0;
  reps[1].en.metrics[0].test_mse = 4.5;
  reps[0].egd.metrics[0].sensitivity = 1.0;
  EXPECT_EQ(collect(reps, Method::EGD, 0, Measure::TestMSE), (std::vector<double>{3.0, 4.0}));
  EXPECT_EQ(paired_differences(reps, 0, Measure::TestMSE), (std::vector<double>{-2.0, -0.5}));
  EXPECT_EQ(collect(reps, Method::EGD, 0, Measure::Sensitivity).size(), 1u);
  EXPECT_TRUE(paired_differences(reps, 0, Measure::Sensitivity).empty());
}

TEST(Experiment, RejectsIndefiniteCell) {
  BlockSpec spec;
  spec.rho1 = 0.0;
  spec.rho2 = 0.9;
  EXPECT_THROW(run_cell(spec, small_config(1, 1)), NotPSD);
}
