#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace elastic_paths {

enum class Flavor {
  SteepestUnscaled,
  SteepestScaled,
  StagewiseUnscaled,
  StagewiseScaled,
  Unnormalized,
};

inline constexpr Flavor kAllFlavors[] = {Flavor::SteepestUnscaled, Flavor::SteepestScaled,
                                         Flavor::StagewiseUnscaled, Flavor::StagewiseScaled,
                                         Flavor::Unnormalized};

inline std::string_view to_string(Flavor f) {
  switch (f) {
  case Flavor::SteepestUnscaled: return "steepest-unscaled";
  case Flavor::SteepestScaled: return "steepest-scaled";
  case Flavor::StagewiseUnscaled: return "stagewise-unscaled";
  case Flavor::StagewiseScaled: return "stagewise-scaled";
  case Flavor::Unnormalized: return "unnormalized";
  }
  return "unknown";
}

inline std::optional<Flavor> parse_flavor(std::string_view s) {
  for (Flavor f : kAllFlavors) {
    if (to_string(f) == s) return f;
  }
  return std::nullopt;
}

inline bool is_stagewise(Flavor f) {
  return f == Flavor::StagewiseUnscaled || f == Flavor::StagewiseScaled;
}

inline bool is_normalized(Flavor f) { return f != Flavor::Unnormalized; }

struct DescentConfig {
  double alpha = 0.5;
  // Delta t for steepest and unnormalized flavors, epsilon for stagewise ones.
  double step = 0.01;
  Flavor flavor = Flavor::Unnormalized;
  // Absolute tolerance on ||g||_inf. Non-positive means 1e-6 * ||g(0)||_inf.
  double tol = 0.0;
  std::size_t max_steps = 1'000'000;
  // Keep every k-th iterate (the first and last are always kept).
  std::size_t record_every = 1;
  // Stop once the training loss has not reached a new minimum for this many
  // steps. Fixed-length steps end in a limit cycle whose gradient never drops
  // below tol. Zero disables the rule.
  std::size_t stall_window = 10'000;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0,1]");
    if (!(step > 0.0)) throw InvalidArgument("step must be positive");
    if (max_steps == 0) throw InvalidArgument("max_steps must be positive");
    if (record_every == 0) throw InvalidArgument("record_every must be positive");
  }
};

struct DirectionResult {
  Vector dx;
  Mask mask;
  Index p1 = 0;
  double q1 = 1.0;
  Index m = 0;
  double h_alpha_value = 0.0;
  double scale = 1.0;
};

struct PathSample {
  double t = 0.0;
  Vector beta;
  Vector grad;
  double l1 = 0.0;
  // Diagnostics of the step taken from this sample.
  double h_alpha = 0.0;
  Index p1 = 0;
};

struct SolutionPath {
  std::vector<PathSample> samples;
  bool converged = false;
  // Stopped by the stall rule rather than by tol or max_steps.
  bool stalled = false;
  std::string method;
  DescentConfig config;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  const PathSample& back() const { return samples.back(); }
};

inline double h_alpha(const Vector& v, double alpha) {
  return alpha * v.lpNorm<1>() + (1.0 - alpha) * v.squaredNorm();
}

struct ActiveSet {
  Mask mask;
  Index m = 0;
  Index count = 0;
};

// Coordinates whose |g_d| reaches alpha * max_d |g_d|.
inline ActiveSet select_active(const Vector& g, double alpha) {
  const Index m = argmax_abs(g);
  const double gmax = std::abs(g[m]);
  if (!(gmax > 0.0)) throw AllZeroGradient();
  ActiveSet a;
  a.m = m;
  a.mask.assign(static_cast<std::size_t>(g.size()), false);
  const double threshold = alpha * gmax;
  for (Index d = 0; d < g.size(); ++d) {
    if (std::abs(g[d]) >= threshold) {
      a.mask[static_cast<std::size_t>(d)] = true;
      ++a.count;
    }
  }
  return a;
}

// Scale making h_alpha of the steepest direction exactly one. At alpha = 1
// the closed form is 0/0; the limit is 1.
inline double c_alpha(double q1, double alpha) {
  if (alpha >= 1.0) return 1.0;
  const double num = std::sqrt(q1 * (alpha * alpha * q1 + 4.0 * (1.0 - alpha))) - alpha * q1;
  const double den = 2.0 * (1.0 - alpha) * (std::sqrt(q1) * (1.0 - alpha) + alpha);
  return num / den;
}

// Scale making h_alpha of the stagewise direction exactly eps. Both
// endpoints are limits: at alpha = 0 the direction is sqrt(eps) g/||g||_2 and
// at alpha = 1 it is eps g_m/|g_m|, each with h_alpha = eps already.
inline double c_alpha_eps(double q1, double alpha, double eps) {
  if (alpha <= 0.0 || alpha >= 1.0) return 1.0;
  const double om = 1.0 - alpha;
  const double inner = 2.0 * alpha * std::sqrt(q1 * (alpha * alpha * q1 + 4.0 * eps * om)) +
                       q1 * (om * om * om - 2.0 * alpha * alpha);
  const double num = std::sqrt(std::max(inner, 0.0)) - om * std::sqrt(q1 * om);
  const double r = num / (alpha * std::sqrt(4.0 * eps * om));
  return r * r;
}

namespace detail {

struct MaskedNorms {
  double l1 = 0.0;
  double l2 = 0.0;
};

inline MaskedNorms masked_norms(const Vector& g, const Mask& mask) {
  MaskedNorms n;
  double sq = 0.0;
  for (Index d = 0; d < g.size(); ++d) {
    if (mask[static_cast<std::size_t>(d)]) {
      n.l1 += std::abs(g[d]);
      sq += g[d] * g[d];
    }
  }
  n.l2 = std::sqrt(sq);
  return n;
}

inline Vector masked(const Vector& g, const Mask& mask) {
  Vector out = Vector::Zero(g.size());
  for (Index d = 0; d < g.size(); ++d) {
    if (mask[static_cast<std::size_t>(d)]) out[d] = g[d];
  }
  return out;
}

} // namespace detail

inline DirectionResult direction(const Vector& g, const DescentConfig& cfg) {
  const double alpha = cfg.alpha;
  const ActiveSet active = select_active(g, alpha);
  const auto norms = detail::masked_norms(g, active.mask);
  const Vector ig = detail::masked(g, active.mask);

  DirectionResult r;
  r.mask = active.mask;
  r.m = active.m;
  r.p1 = active.count;
  r.q1 = (norms.l1 / norms.l2) * (norms.l1 / norms.l2);
  // Rounding can push q1 a few ulps outside [1, p1].
  r.q1 = std::clamp(r.q1, 1.0, static_cast<double>(r.p1));

  const double eps = cfg.step;
  switch (cfg.flavor) {
  case Flavor::SteepestUnscaled:
    r.dx = -ig * (alpha / norms.l1 + (1.0 - alpha) / norms.l2);
    break;
  case Flavor::SteepestScaled:
    r.scale = c_alpha(r.q1, alpha);
    r.dx = -r.scale * ig * (alpha / norms.l1 + (1.0 - alpha) / norms.l2);
    break;
  case Flavor::StagewiseUnscaled:
    r.dx = -ig * (alpha * eps / norms.l1 + (1.0 - alpha) * std::sqrt(eps) / norms.l2);
    break;
  case Flavor::StagewiseScaled: {
    r.scale = c_alpha_eps(r.q1, alpha, eps);
    const double ce = r.scale * eps;
    r.dx = -ig * (alpha * ce / norms.l1 + (1.0 - alpha) * std::sqrt(ce) / norms.l2);
    break;
  }
  case Flavor::Unnormalized:
    r.dx = -(alpha * sign(ig) + (1.0 - alpha) * ig);
    break;
  }
  r.h_alpha_value = h_alpha(r.dx, alpha);
  return r;
}

struct HAlphaBounds {
  double lower = 1.0;
  double upper = 1.0;
};

// Bounds on h_alpha of the unscaled direction: steepest descent version
// (relative to 1) or general stagewise version (relative to eps, eps <= 1).
inline HAlphaBounds h_alpha_bounds(Index p1, double alpha, double eps, bool stagewise) {
  if (p1 < 1) throw InvalidArgument("p1 must be at least 1");
  const double a = alpha * (1.0 - alpha);
  const double pp = static_cast<double>(p1);
  HAlphaBounds b;
  if (!stagewise) {
    b.lower = 1.0 - a * (2.0 - alpha) * (1.0 - 1.0 / pp);
    b.upper = 1.0 + a * (std::sqrt(pp) - 1.0);
  } else {
    b.lower = eps * (1.0 - a * (2.0 - alpha) * (1.0 - eps / pp));
    b.upper = eps * (1.0 + a * (std::sqrt(pp / eps) - 1.0));
  }
  return b;
}

// Runs elastic gradient descent on linear least squares from beta0.
inline SolutionPath run_descent(const Dataset& data, const DescentConfig& cfg,
                                const Vector& beta0) {
  cfg.validate();
  if (beta0.size() != data.p) throw DimensionError("beta0 has wrong length");
  if (!beta0.allFinite()) throw InvalidArgument("beta0 is not finite");

  SolutionPath path;
  path.config = cfg;
  path.method = "egd:" + std::string(to_string(cfg.flavor));

  Vector beta = beta0;
  Vector g = data.cov * beta - data.xty;
  const double tol = cfg.tol > 0.0 ? cfg.tol : 1e-6 * g.cwiseAbs().maxCoeff();
  const bool step_baked_in = is_stagewise(cfg.flavor);

  auto record = [&](double t, double h, Index p1) {
    path.samples.push_back({t, beta, g, beta.lpNorm<1>(), h, p1});
  };

  // The last sample carries the diagnostics of the step it would take next.
  auto record_final = [&](double t) {
    if (g.cwiseAbs().maxCoeff() > 0.0) {
      const DirectionResult dir = direction(g, cfg);
      record(t, dir.h_alpha_value, dir.p1);
    } else {
      record(t, 0.0, 0);
    }
  };

  // Loss up to its constant term: (1/2) beta^T cov beta - xty^T beta.
  auto loss = [&]() { return 0.5 * beta.dot(g - data.xty); };
  double best_loss = loss();
  std::size_t since_best = 0;

  std::size_t k = 0;
  for (;; ++k) {
    const double t = static_cast<double>(k) * cfg.step;
    if (!(g.cwiseAbs().maxCoeff() >= tol) || g.cwiseAbs().maxCoeff() == 0.0) {
      path.converged = true;
      record_final(t);
      break;
    }
    if (k == cfg.max_steps) {
      record_final(t);
      break;
    }
    if (cfg.stall_window > 0 && since_best >= cfg.stall_window) {
      path.stalled = true;
      record_final(t);
      break;
    }
    const DirectionResult dir = direction(g, cfg);
    if (k % cfg.record_every == 0) record(t, dir.h_alpha_value, dir.p1);
    if (step_baked_in) {
      beta += dir.dx;
    } else {
      beta += cfg.step * dir.dx;
    }
    if (!beta.allFinite()) throw NonFiniteIterate(k + 1);
    g = data.cov * beta - data.xty;
    const double l = loss();
    if (l < best_loss) {
      best_loss = l;
      since_best = 0;
    } else {
      ++since_best;
    }
  }
  return path;
}

inline SolutionPath run_descent(const Dataset& data, const DescentConfig& cfg) {
  return run_descent(data, cfg, Vector::Zero(data.p));
}

} // namespace elastic_paths
