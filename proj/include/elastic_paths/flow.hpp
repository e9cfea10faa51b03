#pragma once

#include "elastic_paths/core.hpp"
#include "elastic_paths/dataset.hpp"
#include "elastic_paths/descent.hpp"
#include "elastic_paths/linalg.hpp"
#include "elastic_paths/magnus.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace elastic_paths {

enum class CoordSet : std::uint8_t { Free, Coupled, Inactive };

enum class FlowEvent {
  InactiveJoins,
  FreeLeaves,
  CoupledExits,
  MaxChanges,
  Converged,
  TMaxReached,
  // No criterion fired before the expansion horizon; the next piece keeps the sets.
  Horizon,
  // End of a discrete fallback stretch.
  FallbackEnd,
};

inline std::string_view to_string(FlowEvent e) {
  switch (e) {
  case FlowEvent::InactiveJoins: return "inactive-joins";
  case FlowEvent::FreeLeaves: return "free-leaves";
  case FlowEvent::CoupledExits: return "coupled-exits";
  case FlowEvent::MaxChanges: return "max-changes";
  case FlowEvent::Converged: return "converged";
  case FlowEvent::TMaxReached: return "t-max-reached";
  case FlowEvent::Horizon: return "horizon";
  case FlowEvent::FallbackEnd: return "fallback-end";
  }
  return "unknown";
}

struct FlowConfig {
  double alpha = 0.5;
  int taylor_order = 4;
  int magnus_order = 2;
  double event_tol = 1e-10;
  double seg_err_tol = 1e-8;
  double ridge_eps = 1e-8;
  double min_segment_dt = 1e-12;
  std::size_t max_segments = 100'000;
  double t_max = 1e5;
  // Absolute tolerance on ||g||_inf. Non-positive means 1e-6 * ||g(0)||_inf.
  double conv_tol = 0.0;
  // Relative tolerance on ||g_d| - alpha |g_m|| for coupled membership.
  double classification_tol = 1e-8;
  // Hysteresis of the gradient criteria, relative to |g_m| at the segment start.
  double event_band = 1e-11;
  // Hysteresis of the coupled-exit criteria (absolute, on I_d).
  double i_band = 1e-10;
  int samples_per_segment = 16;
  bool allow_fallback = true;
  double fallback_step = 1e-4;
  std::size_t fallback_steps = 2000;
  double fallback_classification_tol = 1e-3;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0,1]");
    if (taylor_order < 1) throw InvalidArgument("taylor_order must be at least 1");
    if (magnus_order != 1 && magnus_order != 2) throw InvalidArgument("magnus_order must be 1 or 2");
    if (!(event_tol > 0.0)) throw InvalidArgument("event_tol must be positive");
    if (!(seg_err_tol > 0.0)) throw InvalidArgument("seg_err_tol must be positive");
    if (!(ridge_eps >= 0.0)) throw InvalidArgument("ridge_eps must be non-negative");
    if (!(t_max > 0.0)) throw InvalidArgument("t_max must be positive");
    if (max_segments == 0) throw InvalidArgument("max_segments must be positive");
    if (samples_per_segment < 2) throw InvalidArgument("samples_per_segment must be at least 2");
    if (!(fallback_step > 0.0) || fallback_steps == 0) {
      throw InvalidArgument("fallback step and length must be positive");
    }
  }
};

// Moments the flows integrate. When cov is singular it is replaced by
// cov + ridge_eps I and the target b by the corresponding ridge solution.
struct FlowProblem {
  Matrix cov;
  Vector xty;
  Vector b;
  bool ridged = false;
  double lambda_max = 0.0;
  Eigen::LDLT<Matrix> ldlt;

  static FlowProblem make(const Dataset& data, double ridge_eps) {
    FlowProblem pr;
    pr.cov = data.cov;
    pr.xty = data.xty;
    if (linalg::psd_rank(data.cov) < data.p && ridge_eps > 0.0) {
      pr.cov += ridge_eps * Matrix::Identity(data.p, data.p);
      pr.ridged = true;
    }
    pr.ldlt.compute(pr.cov);
    pr.b = pr.ridged ? Vector(pr.ldlt.solve(pr.xty)) : data.beta_ols;
    Eigen::SelfAdjointEigenSolver<Matrix> es(pr.cov, Eigen::EigenvaluesOnly);
    pr.lambda_max = es.eigenvalues().maxCoeff();
    return pr;
  }

  Index dim() const { return cov.rows(); }
  Vector gradient(const Vector& beta) const { return cov * beta - xty; }
};

enum class SegmentKind { Gradient, Linear, Elastic, Discrete };

struct FiredCriterion {
  FlowEvent event;
  Index coord;
  bool upper = false; // CoupledExits: I_d reached 1 rather than 0
};

struct FlowSegment {
  SegmentKind kind = SegmentKind::Elastic;
  double alpha = 0.5;
  double t_start = 0.0;
  double t_end = 0.0;
  Vector beta_start;
  Vector sign_vec;
  std::vector<CoordSet> sets;
  Index m = 0;
  std::vector<Vector> i_taylor;
  MagnusExpansion magnus;
  // beta(t) = w - exp(Omega) (w - beta_start) for elastic pieces; for
  // gradient pieces w is the flow target and exp(Omega) = exp(-h cov).
  Vector w;
  Vector velocity;
  std::shared_ptr<const linalg::SymmetricExp> spectral;
  std::vector<double> disc_t;
  std::vector<Vector> disc_beta;
  FlowEvent end_event = FlowEvent::Horizon;
  std::vector<FiredCriterion> fired;

  bool is_fallback() const { return kind == SegmentKind::Discrete; }

  std::vector<Index> members(CoordSet which) const {
    std::vector<Index> out;
    for (std::size_t d = 0; d < sets.size(); ++d) {
      if (sets[d] == which) out.push_back(static_cast<Index>(d));
    }
    return out;
  }

  // Diagonal of I(t) from its Taylor coefficients.
  Vector i_diag(double t) const {
    const double h = t - t_start;
    Vector out = Vector::Zero(beta_start.size());
    double hk = 1.0;
    for (std::size_t k = 0; k < i_taylor.size(); ++k) {
      out += (hk / linalg::factorial(static_cast<int>(k))) * i_taylor[k];
      hk *= h;
    }
    return out;
  }

  // Integral of the diagonal of I over [t_start, t].
  Vector i_integral(double t) const {
    const double h = t - t_start;
    Vector out = Vector::Zero(beta_start.size());
    double hk = h;
    for (std::size_t k = 0; k < i_taylor.size(); ++k) {
      out += (hk / linalg::factorial(static_cast<int>(k) + 1)) * i_taylor[k];
      hk *= h;
    }
    return out;
  }

  Vector beta(double t) const {
    const double h = t - t_start;
    switch (kind) {
    case SegmentKind::Gradient:
      return beta_start - spectral->apply_expm1(-h, w - beta_start);
    case SegmentKind::Linear:
      return beta_start + h * velocity;
    case SegmentKind::Elastic:
      return w - magnus.propagator(h) * (w - beta_start);
    case SegmentKind::Discrete: {
      if (t <= disc_t.front()) return disc_beta.front();
      if (t >= disc_t.back()) return disc_beta.back();
      const auto it = std::upper_bound(disc_t.begin(), disc_t.end(), t);
      const std::size_t j = static_cast<std::size_t>(it - disc_t.begin());
      const double u = (t - disc_t[j - 1]) / (disc_t[j] - disc_t[j - 1]);
      return (1.0 - u) * disc_beta[j - 1] + u * disc_beta[j];
    }
    }
    return beta_start;
  }
};

inline Matrix magnus_omega(const FlowSegment& segment, double alpha, double t) {
  if (std::abs(alpha - segment.alpha) > 1e-15) {
    throw InvalidArgument("alpha does not match the segment");
  }
  if (t < segment.t_start || t > segment.t_end) throw DomainError("t outside the segment");
  if (segment.kind == SegmentKind::Discrete) throw InvalidArgument("fallback segment has no Omega");
  return segment.magnus.omega(t - segment.t_start);
}

struct AnalyticalPath {
  double alpha = 0.0;
  std::string method;
  std::vector<FlowSegment> segments;
  bool converged = false;
  double t_final = 0.0;
  Vector beta_final;
  Matrix cov;
  Vector xty;
  bool ridged = false;
  // Boundaries at which more than one criterion fired.
  std::size_t simultaneous_events = 0;

  const FlowSegment& segment_at(double t) const {
    if (segments.empty()) throw DomainError("path has no segments");
    auto it = std::upper_bound(segments.begin(), segments.end(), t,
                               [](double v, const FlowSegment& s) { return v < s.t_start; });
    if (it == segments.begin()) return segments.front();
    return *(it - 1);
  }

  Vector beta(double t) const {
    if (t < 0.0) throw DomainError("t must be non-negative");
    if (t >= t_final) return beta_final;
    return segment_at(t).beta(t);
  }

  Vector gradient(double t) const { return cov * beta(t) - xty; }

  std::vector<double> breakpoints() const {
    std::vector<double> out;
    for (const auto& s : segments) out.push_back(s.t_start);
    out.push_back(t_final);
    return out;
  }

  bool has_fallback() const {
    return std::any_of(segments.begin(), segments.end(),
                       [](const FlowSegment& s) { return s.is_fallback(); });
  }

  SolutionPath sample(const std::vector<double>& ts) const {
    SolutionPath path;
    path.method = method;
    path.converged = converged;
    path.config.alpha = alpha;
    for (double t : ts) {
      const Vector b = beta(t);
      path.samples.push_back({t, b, cov * b - xty, b.lpNorm<1>(), 0.0, 0});
    }
    return path;
  }

  // Uniform grid 0, dt, 2dt, ... up to t_end (default t_final), plus t_end.
  SolutionPath sample_uniform(double dt, double t_end = -1.0) const {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
    const double stop = t_end > 0.0 ? t_end : t_final;
    std::vector<double> ts;
    for (std::size_t k = 0;; ++k) {
      const double t = static_cast<double>(k) * dt;
      if (t >= stop * (1.0 - 1e-14)) break;
      ts.push_back(t);
    }
    ts.push_back(stop);
    return sample(ts);
  }
};

// (I - exp(-t cov)) beta_ols through the spectral decomposition of cov.
inline Vector gradient_flow_beta(const Dataset& data, double t) {
  if (t < 0.0) throw DomainError("t must be non-negative");
  const linalg::SymmetricExp e(data.cov);
  return -e.apply_expm1(-t, data.beta_ols);
}

namespace detail {

inline double resolve_conv_tol(const FlowConfig& cfg, const Vector& g0) {
  return cfg.conv_tol > 0.0 ? cfg.conv_tol : 1e-6 * g0.cwiseAbs().maxCoeff();
}

inline AnalyticalPath empty_path(const FlowProblem& pr, double alpha, std::string method) {
  AnalyticalPath path;
  path.alpha = alpha;
  path.method = std::move(method);
  path.cov = pr.cov;
  path.xty = pr.xty;
  path.ridged = pr.ridged;
  return path;
}

inline std::vector<CoordSet> classify(const Vector& g, Index m, double alpha, double rel_tol) {
  const double G = std::abs(g[m]);
  std::vector<CoordSet> sets(static_cast<std::size_t>(g.size()), CoordSet::Inactive);
  for (Index d = 0; d < g.size(); ++d) {
    const double diff = std::abs(g[d]) - alpha * G;
    CoordSet s;
    if (d == m) {
      s = CoordSet::Free;
    } else if (std::abs(diff) <= rel_tol * G) {
      s = CoordSet::Coupled;
    } else {
      s = diff > 0.0 ? CoordSet::Free : CoordSet::Inactive;
    }
    sets[static_cast<std::size_t>(d)] = s;
  }
  return sets;
}

// Taylor coefficients I^(k)(t_i), k = 0..K, of the diagonal of I on the
// current sets. g, z0 are the gradient and w - beta at t_i.
inline std::vector<Vector> coupled_taylor(const FlowProblem& pr, double alpha, const Vector& g,
                                          Index m, const std::vector<CoordSet>& sets,
                                          const Vector& z0, int K) {
  const Index p = g.size();
  const Matrix& S = pr.cov;
  std::vector<Index> C;
  std::vector<Index> F;
  Vector base = Vector::Zero(p);
  for (Index d = 0; d < p; ++d) {
    const CoordSet s = sets[static_cast<std::size_t>(d)];
    if (s == CoordSet::Coupled) C.push_back(d);
    if (s == CoordSet::Free) {
      F.push_back(d);
      base[d] = 1.0;
    }
  }
  std::vector<Vector> I(static_cast<std::size_t>(K) + 1, Vector::Zero(p));
  I[0] = base;
  if (C.empty()) return I;

  const Index nc = static_cast<Index>(C.size());
  const Vector gamma = alpha * sign(g) + (1.0 - alpha) * g;
  const double gm = g[m];
  Matrix A(nc, nc);
  for (Index i = 0; i < nc; ++i) {
    for (Index j = 0; j < nc; ++j) {
      A(i, j) = g[C[i]] * S(m, C[j]) - gm * S(C[i], C[j]);
    }
  }
  if (linalg::condition_number(A) > 1e12) {
    throw SingularSystem("coupled-set system is numerically singular");
  }
  const Eigen::PartialPivLU<Matrix> lu(A);

  // v_k = z^(k)(t_i); A^(j) v = -(1-alpha) I^(j) (cov v).
  auto apply_a = [&](int j, const Vector& v) -> Vector {
    return (-(1.0 - alpha) * I[static_cast<std::size_t>(j)].array() * (S * v).array()).matrix();
  };
  std::vector<Vector> v;
  v.reserve(static_cast<std::size_t>(K) + 2);
  v.push_back(z0);

  Vector rhs(nc);
  for (int k = 0; k <= K; ++k) {
    if (k == 0) {
      for (Index i = 0; i < nc; ++i) {
        double acc = 0.0;
        for (Index f : F) acc += (gm * S(C[i], f) - g[C[i]] * S(m, f)) * gamma[f];
        rhs[i] = acc;
      }
    } else {
      // Part of g^(k+1) that does not involve I^(k).
      Vector partial = Vector::Zero(p);
      for (int j = 0; j < k; ++j) {
        partial += linalg::binomial(k, j) * apply_a(j, v[static_cast<std::size_t>(k - j)]);
      }
      const Vector c = -(S * partial);
      for (Index i = 0; i < nc; ++i) rhs[i] = c[m] * g[C[i]] - gm * c[C[i]];
    }
    const Vector x = lu.solve(rhs);
    for (Index i = 0; i < nc; ++i) I[static_cast<std::size_t>(k)][C[i]] = x[i] / gamma[C[i]];

    Vector next = Vector::Zero(p);
    for (int j = 0; j <= k; ++j) {
      next += linalg::binomial(k, j) * apply_a(j, v[static_cast<std::size_t>(k - j)]);
    }
    v.push_back(std::move(next));
  }
  return I;
}

// Moves the single worst infeasible coupled coordinate per iteration until
// every coupled I^(0) entry lies in (0,1) and none sits on a bound while
// heading out of it.
inline std::vector<Vector> repair_sets(const FlowProblem& pr, double alpha, const Vector& g,
                                       Index m, std::vector<CoordSet>& sets, const Vector& z0,
                                       int K, double i_tol) {
  const Index p = g.size();
  for (Index iter = 0; iter <= p; ++iter) {
    std::vector<Vector> I = coupled_taylor(pr, alpha, g, m, sets, z0, K);
    Index worst = -1;
    double worst_score = -1.0;
    CoordSet dest = CoordSet::Coupled;
    for (Index d = 0; d < p; ++d) {
      if (sets[static_cast<std::size_t>(d)] != CoordSet::Coupled) continue;
      const double i0 = I[0][d];
      const double i1 = I[1][d];
      double score = -1.0;
      CoordSet to = CoordSet::Coupled;
      if (i0 <= 0.0 || (i0 < i_tol && i1 < 0.0)) {
        score = std::max(-i0, 0.0);
        to = CoordSet::Inactive;
      } else if (i0 >= 1.0 || (i0 > 1.0 - i_tol && i1 > 0.0)) {
        score = std::max(i0 - 1.0, 0.0);
        to = CoordSet::Free;
      }
      if (score > worst_score) {
        worst_score = score;
        worst = d;
        dest = to;
      }
    }
    if (worst < 0) return I;
    sets[static_cast<std::size_t>(worst)] = dest;
  }
  throw TruncationBreakdown("feasibility repair did not settle within p iterations");
}

inline FlowSegment build_elastic_segment(const FlowProblem& pr, const FlowConfig& cfg, double t,
                                         const Vector& beta, const Vector& g, Index m,
                                         std::vector<CoordSet>& sets) {
  const double alpha = cfg.alpha;
  FlowSegment seg;
  seg.kind = SegmentKind::Elastic;
  seg.alpha = alpha;
  seg.t_start = t;
  seg.beta_start = beta;
  seg.m = m;
  seg.sign_vec = -sign(g);
  seg.w = pr.b + (alpha / (1.0 - alpha)) * pr.ldlt.solve(seg.sign_vec);
  const Vector z0 = seg.w - beta;
  seg.i_taylor = repair_sets(pr, alpha, g, m, sets, z0, cfg.taylor_order, cfg.i_band);
  seg.sets = sets;
  seg.magnus = MagnusExpansion(seg.i_taylor, pr.cov, alpha, cfg.magnus_order);
  return seg;
}

inline double matrix_inf_norm(const Matrix& M) {
  return M.size() == 0 ? 0.0 : M.cwiseAbs().rowwise().sum().maxCoeff();
}

// Largest h <= h0 whose Taylor and Magnus truncation estimates stay below tol.
inline double choose_horizon(const FlowSegment& seg, const Vector& g, double h0,
                             const FlowConfig& cfg, double tol) {
  const double alpha = seg.alpha;
  const double speed = (alpha * sign(g) + (1.0 - alpha) * g).cwiseAbs().maxCoeff();
  const double z_inf = (seg.w - seg.beta_start).cwiseAbs().maxCoeff();
  const int K = static_cast<int>(seg.i_taylor.size()) - 1;
  std::vector<double> tail;
  for (int k = std::max(1, K - 1); k <= K; ++k) {
    tail.push_back(seg.i_taylor[static_cast<std::size_t>(k)].cwiseAbs().maxCoeff());
  }
  for (double h = h0;; h *= 0.5) {
    if (h < cfg.min_segment_dt) {
      throw TruncationBreakdown("segment cannot be shrunk below min_segment_dt at t = " +
                                std::to_string(seg.t_start));
    }
    double err = 0.0;
    for (std::size_t j = 0; j < tail.size(); ++j) {
      const int k = std::max(1, K - 1) + static_cast<int>(j);
      err = std::max(err, tail[j] * std::pow(h, k + 1) / linalg::factorial(k + 1) * speed);
    }
    const double o2 = matrix_inf_norm(seg.magnus.omega2(h));
    if (cfg.magnus_order == 2) {
      err += matrix_inf_norm(seg.magnus.omega1(h)) * o2 * z_inf;
    } else {
      err += o2 * z_inf;
    }
    if (err <= tol) return h;
  }
}

struct Criterion {
  FlowEvent event;
  Index coord;
  bool upper;
  double threshold;
};

struct EventResult {
  double t = 0.0;
  FlowEvent event = FlowEvent::Horizon;
  std::vector<FiredCriterion> fired;
};

class EventScanner {
public:
  EventScanner(const FlowSegment& seg, const FlowProblem& pr, const FlowConfig& cfg,
               double conv_tol)
      : seg_(seg), pr_(pr), alpha_(seg.alpha), conv_tol_(conv_tol),
        sign_m_(sign(pr.gradient(seg.beta_start)[seg.m])) {
    const Index p = seg.beta_start.size();
    for (Index d = 0; d < p; ++d) {
      switch (seg.sets[static_cast<std::size_t>(d)]) {
      case CoordSet::Inactive: crit_.push_back({FlowEvent::InactiveJoins, d, false, 0.0}); break;
      case CoordSet::Free:
        if (d != seg.m) {
          crit_.push_back({FlowEvent::FreeLeaves, d, false, 0.0});
          crit_.push_back({FlowEvent::MaxChanges, d, false, 0.0});
        }
        break;
      case CoordSet::Coupled:
        crit_.push_back({FlowEvent::CoupledExits, d, false, 0.0});
        crit_.push_back({FlowEvent::CoupledExits, d, true, 0.0});
        break;
      }
    }
    crit_.push_back({FlowEvent::Converged, seg.m, false, 0.0});
    std::vector<double> f0;
    values(seg.t_start, f0);
    const double G0 = std::abs(pr.gradient(seg.beta_start)[seg.m]);
    for (std::size_t j = 0; j < crit_.size(); ++j) {
      const FlowEvent e = crit_[j].event;
      if (e == FlowEvent::Converged) continue;
      const double band = e == FlowEvent::CoupledExits ? cfg.i_band : cfg.event_band * G0;
      crit_[j].threshold = std::min(f0[j], 0.0) - band;
    }
  }

  // Criterion values; criterion j fires when values[j] < threshold_j.
  void values(double t, std::vector<double>& f) const {
    const Vector beta = seg_.beta(t);
    const Vector g = pr_.gradient(beta);
    // Signed against the start so that a zero crossing of g_m cannot be
    // stepped over between samples.
    const double G = sign_m_ * g[seg_.m];
    const bool need_i = seg_.kind != SegmentKind::Gradient;
    const Vector I = need_i ? seg_.i_diag(t) : Vector();
    f.resize(crit_.size());
    for (std::size_t j = 0; j < crit_.size(); ++j) {
      const Criterion& c = crit_[j];
      const double gd = std::abs(g[c.coord]);
      switch (c.event) {
      case FlowEvent::InactiveJoins: f[j] = alpha_ * G - gd; break;
      case FlowEvent::FreeLeaves: f[j] = gd - alpha_ * G; break;
      case FlowEvent::MaxChanges: f[j] = G - gd; break;
      case FlowEvent::CoupledExits: f[j] = c.upper ? 1.0 - I[c.coord] : I[c.coord]; break;
      case FlowEvent::Converged: f[j] = G - conv_tol_; break;
      default: f[j] = 1.0; break;
      }
    }
  }

  std::vector<FiredCriterion> firing(double t) const {
    std::vector<double> f;
    values(t, f);
    std::vector<FiredCriterion> out;
    for (std::size_t j = 0; j < crit_.size(); ++j) {
      if (f[j] < crit_[j].threshold) out.push_back({crit_[j].event, crit_[j].coord, crit_[j].upper});
    }
    return out;
  }

private:
  const FlowSegment& seg_;
  const FlowProblem& pr_;
  double alpha_;
  double conv_tol_;
  double sign_m_;
  std::vector<Criterion> crit_;
};

inline EventResult scan_for_event(const FlowSegment& seg, const FlowProblem& pr,
                                  const FlowConfig& cfg, double conv_tol, double t_horizon) {
  const EventScanner scanner(seg, pr, cfg, conv_tol);
  const int n = cfg.samples_per_segment;
  const double t0 = seg.t_start;
  double lo = t0;
  for (int k = 1; k <= n; ++k) {
    const double hi = t0 + (t_horizon - t0) * static_cast<double>(k) / n;
    if (scanner.firing(hi).empty()) {
      lo = hi;
      continue;
    }
    double a = lo;
    double b = hi;
    while (b - a > cfg.event_tol) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (scanner.firing(mid).empty()) {
        a = mid;
      } else {
        b = mid;
      }
    }
    EventResult r;
    r.t = b;
    r.fired = scanner.firing(b);
    // Convergence dominates; otherwise report the first criterion class.
    r.event = r.fired.front().event;
    for (const auto& f : r.fired) {
      if (f.event == FlowEvent::Converged) r.event = FlowEvent::Converged;
    }
    return r;
  }
  EventResult r;
  r.t = t_horizon;
  r.event = t_horizon >= cfg.t_max ? FlowEvent::TMaxReached : FlowEvent::Horizon;
  return r;
}

inline void finish(AnalyticalPath& path, double t, const Vector& beta, bool converged) {
  path.t_final = t;
  path.beta_final = beta;
  path.converged = converged;
}

// Fine-step unnormalized descent from (t, beta). Returns the discrete
// segment; its end event is Converged when ||g||_inf dropped below conv_tol.
inline FlowSegment fallback_segment(const FlowProblem& pr, const FlowConfig& cfg, double t,
                                    const Vector& beta, double conv_tol) {
  FlowSegment seg;
  seg.kind = SegmentKind::Discrete;
  seg.alpha = cfg.alpha;
  seg.t_start = t;
  seg.beta_start = beta;
  seg.end_event = FlowEvent::FallbackEnd;
  DescentConfig dc;
  dc.alpha = cfg.alpha;
  dc.step = cfg.fallback_step;
  dc.flavor = Flavor::Unnormalized;
  Vector b = beta;
  Vector g = pr.gradient(b);
  seg.m = argmax_abs(g);
  seg.sign_vec = -sign(g);
  seg.sets = classify(g, seg.m, cfg.alpha, cfg.fallback_classification_tol);
  seg.disc_t.push_back(t);
  seg.disc_beta.push_back(b);
  for (std::size_t k = 1; k <= cfg.fallback_steps; ++k) {
    if (g.cwiseAbs().maxCoeff() < conv_tol) {
      seg.end_event = FlowEvent::Converged;
      break;
    }
    const double tk = t + static_cast<double>(k) * cfg.fallback_step;
    b += cfg.fallback_step * direction(g, dc).dx;
    if (!b.allFinite()) throw NonFiniteIterate(k);
    g = pr.gradient(b);
    seg.disc_t.push_back(tk);
    seg.disc_beta.push_back(b);
    if (tk >= cfg.t_max) {
      seg.end_event = FlowEvent::TMaxReached;
      break;
    }
  }
  if (g.cwiseAbs().maxCoeff() < conv_tol) seg.end_event = FlowEvent::Converged;
  seg.t_end = seg.disc_t.back();
  return seg;
}

} // namespace detail

// Gradient flow as a single analytical piece ending at convergence or t_max.
inline AnalyticalPath gradient_flow(const Dataset& data, const FlowConfig& cfg) {
  cfg.validate();
  const FlowProblem pr = FlowProblem::make(data, 0.0);
  AnalyticalPath path = detail::empty_path(pr, 0.0, "grad-flow");
  const Vector zero = Vector::Zero(data.p);
  const double conv_tol = detail::resolve_conv_tol(cfg, pr.gradient(zero));

  FlowSegment seg;
  seg.kind = SegmentKind::Gradient;
  seg.alpha = 0.0;
  seg.t_start = 0.0;
  seg.beta_start = zero;
  seg.w = pr.b;
  seg.spectral = std::make_shared<linalg::SymmetricExp>(pr.cov);
  const Vector g0 = pr.gradient(zero);
  seg.m = argmax_abs(g0);
  seg.sign_vec = -sign(g0);
  seg.sets.assign(static_cast<std::size_t>(data.p), CoordSet::Free);
  seg.i_taylor = {Vector::Ones(data.p)};
  seg.magnus = MagnusExpansion(seg.i_taylor, pr.cov, 0.0, cfg.magnus_order);

  auto gnorm = [&](double t) { return pr.gradient(seg.beta(t)).cwiseAbs().maxCoeff(); };
  double t_end = cfg.t_max;
  bool converged = false;
  if (gnorm(0.0) < conv_tol) {
    t_end = 0.0;
    converged = true;
  } else {
    double hi = 1.0;
    while (hi < cfg.t_max && gnorm(hi) >= conv_tol) hi *= 2.0;
    if (hi < cfg.t_max || gnorm(cfg.t_max) < conv_tol) {
      hi = std::min(hi, cfg.t_max);
      double lo = 0.0;
      while (hi - lo > cfg.event_tol * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (gnorm(mid) < conv_tol) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      t_end = hi;
      converged = true;
    }
  }
  seg.t_end = t_end;
  seg.end_event = converged ? FlowEvent::Converged : FlowEvent::TMaxReached;
  const Vector b_end = seg.beta(t_end);
  path.segments.push_back(std::move(seg));
  detail::finish(path, t_end, b_end, converged);
  return path;
}

// Coordinate flow: every S_M coordinate keeps |g_d| = max |g|, the path is
// piecewise linear and the total speed sum_d |beta_d'| is one.
inline AnalyticalPath coordinate_flow(const Dataset& data, const FlowConfig& cfg) {
  cfg.validate();
  const FlowProblem pr = FlowProblem::make(data, cfg.ridge_eps);
  AnalyticalPath path = detail::empty_path(pr, 1.0, "coord-flow");
  const Index p = data.p;
  const Matrix& S = pr.cov;
  Vector beta = Vector::Zero(p);
  double t = 0.0;
  const double conv_tol = detail::resolve_conv_tol(cfg, pr.gradient(beta));
  const double tol = cfg.classification_tol;

  while (path.segments.size() < cfg.max_segments) {
    const Vector g = pr.gradient(beta);
    const Index m = argmax_abs(g);
    const double G = std::abs(g[m]);
    if (G < conv_tol) {
      detail::finish(path, t, beta, true);
      return path;
    }
    const Vector s = -sign(g);
    std::vector<Index> M;
    M.push_back(m);
    for (Index d = 0; d < p; ++d) {
      if (d != m && std::abs(g[d]) >= G * (1.0 - tol)) M.push_back(d);
    }

    // Active-set repair: drop the most negative entry of I; once I >= 0,
    // re-admit a tied coordinate whose |g| would outgrow |g_m|.
    std::vector<Index> tied = M;
    Vector I, v, Sv;
    double r = 0.0;
    const std::size_t max_repairs = static_cast<std::size_t>(4 * p + 4);
    for (std::size_t it = 0;; ++it) {
      if (it > max_repairs) throw SingularSystem("coordinate-flow repair does not settle");
      const Index k = static_cast<Index>(M.size());
      Matrix A = Matrix::Zero(k, k);
      for (Index j = 0; j < k; ++j) A(0, j) = s[M[j]];
      for (Index q = 0; q + 1 < k; ++q) {
        for (Index j = 0; j < k; ++j) {
          A(q + 1, j) = s[M[q]] * S(M[q], M[j]) - s[M[q + 1]] * S(M[q + 1], M[j]);
        }
      }
      if (linalg::condition_number(A) > 1e12) {
        throw SingularSystem("coordinate-flow system is numerically singular");
      }
      Vector e1 = Vector::Zero(k);
      e1[0] = 1.0;
      const Vector x = A.partialPivLu().solve(e1);
      I = Vector::Zero(p);
      Index worst = -1;
      double most_negative = -1e-12;
      for (Index j = 0; j < k; ++j) {
        I[M[j]] = x[j] * s[M[j]];
        if (I[M[j]] < most_negative) {
          most_negative = I[M[j]];
          worst = j;
        }
      }
      if (worst >= 0) {
        if (k == 1) throw SingularSystem("coordinate-flow repair removed every coordinate");
        M.erase(M.begin() + worst);
        continue;
      }
      v = (I.array() * s.array()).matrix();
      Sv = S * v;
      // |g_m| decreases at unit rate r on every S_M coordinate.
      r = -sign(g[M.front()]) * Sv[M.front()];
      Index readmit = -1;
      double excess = 1e-10 * std::max(std::abs(r), 1.0);
      for (Index d : tied) {
        if (std::find(M.begin(), M.end(), d) != M.end()) continue;
        const double growth = sign(g[d]) * Sv[d] + r;
        if (growth > excess) {
          excess = growth;
          readmit = d;
        }
      }
      if (readmit < 0) break;
      M.push_back(readmit);
    }
    if (!(r > 0.0)) throw SingularSystem("coordinate flow makes no progress");
    // The repair may have dropped the argmax; any member of S_M leads.
    const Index lead = M.front();

    double best = G / r;
    FlowEvent event = FlowEvent::Converged;
    std::vector<FiredCriterion> fired{{FlowEvent::Converged, lead, false}};
    std::vector<bool> inM(static_cast<std::size_t>(p), false);
    for (Index d : M) inM[static_cast<std::size_t>(d)] = true;
    std::vector<std::pair<double, Index>> cands;
    for (Index d = 0; d < p; ++d) {
      if (inM[static_cast<std::size_t>(d)]) continue;
      // A tied coordinate left out by the repair can still reach the other side.
      const bool at_upper = std::abs(G - g[d]) <= tol * G;
      const bool at_lower = std::abs(G + g[d]) <= tol * G;
      const double den1 = Sv[d] + r;
      const double den2 = Sv[d] - r;
      if (!at_upper && den1 != 0.0) {
        const double tau = (G - g[d]) / den1;
        if (tau > 0.0) cands.push_back({tau, d});
      }
      if (!at_lower && den2 != 0.0) {
        const double tau = (-G - g[d]) / den2;
        if (tau > 0.0) cands.push_back({tau, d});
      }
    }
    for (const auto& [tau, d] : cands) {
      if (tau < best * (1.0 - 1e-12)) {
        best = tau;
        event = FlowEvent::InactiveJoins;
      }
    }
    if (event == FlowEvent::InactiveJoins) {
      fired.clear();
      for (const auto& [tau, d] : cands) {
        if (std::abs(tau - best) <= std::max(cfg.event_tol, 1e-12 * best)) {
          fired.push_back({FlowEvent::InactiveJoins, d, false});
        }
      }
    }

    FlowSegment seg;
    seg.kind = SegmentKind::Linear;
    seg.alpha = 1.0;
    seg.t_start = t;
    seg.beta_start = beta;
    seg.sign_vec = s;
    seg.m = lead;
    seg.sets.assign(static_cast<std::size_t>(p), CoordSet::Inactive);
    for (Index d : M) {
      seg.sets[static_cast<std::size_t>(d)] = d == lead ? CoordSet::Free : CoordSet::Coupled;
    }
    seg.i_taylor = {I};
    seg.velocity = v;
    seg.magnus = MagnusExpansion(seg.i_taylor, S, 1.0, cfg.magnus_order);

    bool stop = false;
    if (t + best >= cfg.t_max) {
      best = cfg.t_max - t;
      event = FlowEvent::TMaxReached;
      fired.clear();
      stop = true;
    }
    seg.t_end = t + best;
    seg.end_event = event;
    if (fired.size() > 1) ++path.simultaneous_events;
    seg.fired = std::move(fired);
    beta = seg.beta(seg.t_end);
    t = seg.t_end;
    path.segments.push_back(std::move(seg));
    if (event == FlowEvent::Converged) {
      // The analytical end point is the exact optimum.
      detail::finish(path, t, beta, true);
      return path;
    }
    if (stop) {
      detail::finish(path, t, beta, false);
      return path;
    }
  }
  detail::finish(path, t, beta, false);
  return path;
}

// Elastic gradient flow for alpha in (0,1); alpha = 0 and alpha = 1 are
// delegated to gradient_flow and coordinate_flow.
inline AnalyticalPath elastic_flow(const Dataset& data, const FlowConfig& cfg) {
  cfg.validate();
  if (cfg.alpha <= 0.0) return gradient_flow(data, cfg);
  if (cfg.alpha >= 1.0) return coordinate_flow(data, cfg);

  const double alpha = cfg.alpha;
  const FlowProblem pr = FlowProblem::make(data, cfg.ridge_eps);
  AnalyticalPath path = detail::empty_path(pr, alpha, "egd-flow");
  const Index p = data.p;
  Vector beta = Vector::Zero(p);
  double t = 0.0;
  Vector g = pr.gradient(beta);
  const double conv_tol = detail::resolve_conv_tol(cfg, g);
  if (g.cwiseAbs().maxCoeff() < conv_tol) {
    detail::finish(path, t, beta, true);
    return path;
  }

  const double h_cap = 1.0 / ((1.0 - alpha) * std::max(pr.lambda_max, 1e-300));
  const double err_tol = cfg.seg_err_tol * std::max(1.0, pr.b.cwiseAbs().maxCoeff());
  // Boundaries shorter than this count towards the Zeno guard.
  const double tiny_dt = 1e3 * cfg.min_segment_dt;
  const std::size_t tiny_limit = static_cast<std::size_t>(4 * p + 10);

  Index m = argmax_abs(g);
  std::vector<CoordSet> sets = detail::classify(g, m, alpha, cfg.classification_tol);
  double h_prev = h_cap;
  std::size_t tiny_streak = 0;

  auto run_fallback = [&]() -> bool {
    if (!cfg.allow_fallback) return false;
    FlowSegment fb = detail::fallback_segment(pr, cfg, t, beta, conv_tol);
    t = fb.t_end;
    beta = fb.disc_beta.back();
    const FlowEvent ev = fb.end_event;
    path.segments.push_back(std::move(fb));
    g = pr.gradient(beta);
    m = argmax_abs(g);
    sets = detail::classify(g, m, alpha, cfg.fallback_classification_tol);
    h_prev = h_cap;
    tiny_streak = 0;
    return ev != FlowEvent::Converged && ev != FlowEvent::TMaxReached;
  };

  while (path.segments.size() < cfg.max_segments) {
    g = pr.gradient(beta);
    if (g.cwiseAbs().maxCoeff() < conv_tol) {
      detail::finish(path, t, beta, true);
      return path;
    }
    if (t >= cfg.t_max) {
      detail::finish(path, t, beta, false);
      return path;
    }

    FlowSegment seg;
    detail::EventResult ev;
    try {
      if (tiny_streak > tiny_limit) {
        throw TruncationBreakdown("event times accumulate at t = " + std::to_string(t));
      }
      seg = detail::build_elastic_segment(pr, cfg, t, beta, g, m, sets);
      const double h0 = std::min({h_cap, 2.0 * h_prev, cfg.t_max - t});
      const double h = detail::choose_horizon(seg, g, h0, cfg, err_tol);
      ev = detail::scan_for_event(seg, pr, cfg, conv_tol, t + h);
    } catch (const TruncationBreakdown&) {
      if (!run_fallback()) {
        if (!cfg.allow_fallback) throw;
        detail::finish(path, t, beta, path.segments.back().end_event == FlowEvent::Converged);
        return path;
      }
      continue;
    } catch (const SingularSystem&) {
      if (!run_fallback()) {
        if (!cfg.allow_fallback) throw;
        detail::finish(path, t, beta, path.segments.back().end_event == FlowEvent::Converged);
        return path;
      }
      continue;
    }

    seg.t_end = ev.t;
    seg.end_event = ev.event;
    seg.fired = ev.fired;
    if (ev.fired.size() > 1) ++path.simultaneous_events;
    const double len = ev.t - t;
    beta = seg.beta(ev.t);
    t = ev.t;
    path.segments.push_back(std::move(seg));

    if (ev.event == FlowEvent::Converged) {
      detail::finish(path, t, beta, true);
      return path;
    }
    if (ev.event == FlowEvent::TMaxReached) {
      detail::finish(path, t, beta, false);
      return path;
    }
    if (ev.event == FlowEvent::Horizon) {
      h_prev = len;
      tiny_streak = 0;
      continue;
    }
    tiny_streak = len < tiny_dt ? tiny_streak + 1 : 0;
    h_prev = std::max(len, h_prev);
    for (const auto& f : ev.fired) {
      auto& s = sets[static_cast<std::size_t>(f.coord)];
      switch (f.event) {
      case FlowEvent::InactiveJoins: s = CoordSet::Coupled; break;
      case FlowEvent::FreeLeaves: s = CoordSet::Coupled; break;
      case FlowEvent::CoupledExits: s = f.upper ? CoordSet::Free : CoordSet::Inactive; break;
      case FlowEvent::MaxChanges:
        m = f.coord;
        s = CoordSet::Free;
        break;
      default: break;
      }
    }
    sets[static_cast<std::size_t>(m)] = CoordSet::Free;
  }
  detail::finish(path, t, beta, false);
  return path;
}

// Earliest criterion crossing of a segment within [t_start, t_horizon].
// Returns Horizon (or TMaxReached) when nothing fires before t_horizon.
inline std::pair<double, FlowEvent> detect_next_event(const FlowSegment& segment,
                                                      const Dataset& data, const FlowConfig& cfg,
                                                      double t_horizon) {
  const FlowProblem pr = FlowProblem::make(data, cfg.ridge_eps);
  const double conv_tol = detail::resolve_conv_tol(cfg, pr.gradient(Vector::Zero(data.p)));
  const detail::EventResult r = detail::scan_for_event(segment, pr, cfg, conv_tol, t_horizon);
  return {r.t, r.event};
}

} // namespace elastic_paths
