#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/data.hpp"
#include "elastic_paths/descent.hpp"
#include "elastic_paths/elastic_net.hpp"
#include "elastic_paths/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace elastic_paths {

struct ExperimentConfig {
  std::vector<double> alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double egd_step = 0.01;
  std::size_t egd_max_steps = 20'000;
  std::size_t egd_record_every = 5;
  std::size_t en_grid_size = 100;
  double en_grid_ratio = 1e-4;
  int folds = 10;
  double zero_tol = kZeroTol;
  int reps = 100;
  std::uint64_t seed = 1;
  // 0 means: ELASTIC_PATHS_THREADS if set, otherwise hardware concurrency.
  unsigned threads = 0;
};

enum class Method { EGD, EN };

inline std::string_view to_string(Method m) { return m == Method::EGD ? "egd" : "en"; }

struct MethodOutcome {
  // Indexed by criterion: 0 = validation MSE, 1 = one-SE CV.
  PathMetrics metrics[2];
  double alpha_star = 0.0;
  double param_star[2] = {0.0, 0.0};
};

struct ReplicateOutcome {
  MethodOutcome egd;
  MethodOutcome en;
};

namespace detail {

inline DescentConfig experiment_descent(const ExperimentConfig& cfg, double alpha) {
  DescentConfig dc;
  dc.alpha = alpha;
  dc.step = cfg.egd_step;
  dc.flavor = Flavor::Unnormalized;
  dc.max_steps = cfg.egd_max_steps;
  dc.record_every = cfg.egd_record_every;
  return dc;
}

// Betas of a descent run at the requested times; a run that stopped early
// contributes its final iterate to later times.
inline std::vector<Vector> egd_at_times(const Dataset& data, const DescentConfig& dc,
                                        const std::vector<double>& times) {
  const SolutionPath path = run_descent(data, dc);
  std::vector<Vector> out;
  out.reserve(times.size());
  for (double t : times) {
    auto it = std::lower_bound(path.samples.begin(), path.samples.end(), t - 0.5 * dc.step,
                               [](const PathSample& s, double v) { return s.t < v; });
    if (it == path.samples.end()) --it;
    out.push_back(it->beta);
  }
  return out;
}

inline GridPath egd_grid_path(const Dataset& train, const ExperimentConfig& cfg, double alpha) {
  const SolutionPath path = run_descent(train, experiment_descent(cfg, alpha));
  GridPath gp;
  gp.alpha = alpha;
  gp.params_are_lambda = false;
  for (const auto& s : path.samples) {
    gp.params.push_back(s.t);
    gp.betas.push_back(s.beta);
  }
  return gp;
}

inline GridPath en_grid_path(const Dataset& train, const ExperimentConfig& cfg, double alpha) {
  GridPath gp;
  gp.alpha = alpha;
  gp.params_are_lambda = true;
  gp.params = lambda_grid(train, alpha, cfg.en_grid_size, cfg.en_grid_ratio);
  for (auto& pt : en_path(train, alpha, gp.params)) gp.betas.push_back(std::move(pt.beta));
  return gp;
}

inline PathMetrics evaluate(const Vector& beta, const GridPath& path, const BlockData& bd,
                            double zero_tol) {
  PathMetrics m;
  const ConfusionRates cr = confusion_rates(beta, bd.support, zero_tol);
  m.sensitivity = cr.sensitivity;
  m.specificity = cr.specificity;
  m.test_mse = bd.test.mse(beta);
  m.true_path_rate = true_path_rate(path.betas, bd.support, zero_tol);
  return m;
}

inline MethodOutcome run_method(Method method, const BlockData& bd, const ExperimentConfig& cfg) {
  std::vector<GridPath> grid;
  for (double a : cfg.alphas) {
    grid.push_back(method == Method::EGD ? egd_grid_path(bd.train, cfg, a)
                                         : en_grid_path(bd.train, cfg, a));
  }
  const SelectionResult val = select_val_mse(grid, bd.val);
  const GridPath& chosen = grid[val.path_index];
  MethodOutcome out;
  out.alpha_star = val.alpha_star;
  out.param_star[0] = val.t_or_lambda_star;
  out.metrics[0] = evaluate(val.beta_star, chosen, bd, cfg.zero_tol);

  PathSolver solver;
  if (method == Method::EGD) {
    const DescentConfig dc = experiment_descent(cfg, val.alpha_star);
    solver = [dc](const Dataset& tr, const std::vector<double>& ts) {
      return egd_at_times(tr, dc, ts);
    };
  } else {
    const double a = val.alpha_star;
    solver = [a](const Dataset& tr, const std::vector<double>& lams) {
      std::vector<Vector> out;
      for (auto& pt : en_path(tr, a, lams)) out.push_back(std::move(pt.beta));
      return out;
    };
  }
  const SelectionResult cv = select_one_se_cv(bd.train, val.alpha_star, chosen.params,
                                              chosen.params_are_lambda, solver, cfg.folds);
  out.param_star[1] = cv.t_or_lambda_star;
  out.metrics[1] = evaluate(cv.beta_star, chosen, bd, cfg.zero_tol);
  return out;
}

inline unsigned worker_count(unsigned requested, int jobs) {
  unsigned n = requested;
  if (n == 0) {
    n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("ELASTIC_PATHS_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v > 0) n = std::min(n, static_cast<unsigned>(v));
    }
  }
  return std::max(1u, std::min(n, static_cast<unsigned>(std::max(jobs, 1))));
}

} // namespace detail

inline ReplicateOutcome run_replicate(const BlockSpec& spec, const ExperimentConfig& cfg) {
  const BlockData bd = gen_blocks(spec);
  ReplicateOutcome r;
  r.egd = detail::run_method(Method::EGD, bd, cfg);
  r.en = detail::run_method(Method::EN, bd, cfg);
  return r;
}

// Replicate k uses seed cfg.seed + k. Results are ordered by replicate, so
// the output does not depend on the number of workers.
inline std::vector<ReplicateOutcome> run_cell(BlockSpec spec, const ExperimentConfig& cfg) {
  spec.validate();
  const int reps = cfg.reps;
  std::vector<ReplicateOutcome> out(static_cast<std::size_t>(std::max(reps, 0)));
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(out.size());
  auto work = [&]() {
    for (int k = next++; k < reps; k = next++) {
      BlockSpec s = spec;
      s.seed = cfg.seed + static_cast<std::uint64_t>(k);
      try {
        out[static_cast<std::size_t>(k)] = run_replicate(s, cfg);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    }
  };
  const unsigned n = detail::worker_count(cfg.threads, reps);
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  double acc = 0.0;
  for (double x : v) acc += x;
  s.mean = acc / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(v.size()));
  }
  return s;
}

enum class Measure { Sensitivity, Specificity, TestMSE, TruePathRate };

inline constexpr Measure kAllMeasures[] = {Measure::Sensitivity, Measure::Specificity,
                                           Measure::TestMSE, Measure::TruePathRate};

inline std::string_view to_string(Measure m) {
  switch (m) {
  case Measure::Sensitivity: return "sensitivity";
  case Measure::Specificity: return "specificity";
  case Measure::TestMSE: return "test_mse";
  case Measure::TruePathRate: return "true_path_rate";
  }
  return "unknown";
}

inline std::optional<double> measure_of(const PathMetrics& m, Measure which) {
  switch (which) {
  case Measure::Sensitivity: return m.sensitivity;
  case Measure::Specificity: return m.specificity;
  case Measure::TestMSE: return m.test_mse;
  case Measure::TruePathRate: return m.true_path_rate;
  }
  return std::nullopt;
}

// Per-method values over replicates; absent rates are skipped.
inline std::vector<double> collect(const std::vector<ReplicateOutcome>& reps, Method method,
                                   int criterion, Measure which) {
  std::vector<double> out;
  for (const auto& r : reps) {
    const MethodOutcome& mo = method == Method::EGD ? r.egd : r.en;
    if (auto v = measure_of(mo.metrics[criterion], which)) out.push_back(*v);
  }
  return out;
}

// EGD minus EN per replicate, over replicates where both values exist.
inline std::vector<double> paired_differences(const std::vector<ReplicateOutcome>& reps,
                                              int criterion, Measure which) {
  std::vector<double> out;
  for (const auto& r : reps) {
    const auto a = measure_of(r.egd.metrics[criterion], which);
    const auto b = measure_of(r.en.metrics[criterion], which);
    if (a && b) out.push_back(*a - *b);
  }
  return out;
}

} // namespace elastic_paths
