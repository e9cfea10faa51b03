// elastic-paths: run path solvers and experiments, write CSV + manifest.json.

#include "elastic_paths/elastic_paths.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ep = elastic_paths;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data;
  std::string synthetic;
  double alpha = 0.5;
  double step = 0.01;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int reps = 100;
  bool emit_gradients = false;
  int smooth = 0;
  long n = 0;
  std::string method = "egd:unnormalized";
  std::string method_b;
  std::string t_grid;
  std::size_t max_steps = 1'000'000;
  std::size_t record_every = 1;
  double rho1 = 0.7;
  double rho2 = 0.2;
  double sigma = 10.0;
  long p_half = 10;
  std::string cells = "0.7:0.2,0.9:0.0";
  std::string criterion = "val";
  unsigned threads = 0;
};

struct Source {
  ep::Dataset data;
  std::optional<ep::BlockData> blocks;
  std::string description;
};

ep::BlockSpec block_spec(const Options& o) {
  ep::BlockSpec s;
  s.p_half = o.p_half;
  s.rho1 = o.rho1;
  s.rho2 = o.rho2;
  s.sigma_noise = o.sigma;
  s.n = o.n > 0 ? o.n : 100;
  s.seed = o.seed;
  return s;
}

Source load_source(const Options& o) {
  if (!o.data.empty() && !o.synthetic.empty()) {
    throw UsageError("--data and --synthetic are mutually exclusive");
  }
  Source s;
  if (!o.data.empty()) {
    s.data = ep::load_tsv_dataset(o.data);
    s.description = "file:" + fs::path(o.data).filename().string();
  } else if (o.synthetic == "simple") {
    s.data = ep::gen_simple(o.n > 0 ? o.n : 100, o.seed).data;
    s.description = "synthetic:simple";
  } else if (o.synthetic == "blocks") {
    s.blocks = ep::gen_blocks(block_spec(o));
    s.data = s.blocks->train;
    s.description = "synthetic:blocks";
  } else if (o.synthetic.empty()) {
    throw UsageError("a dataset is required (--data FILE or --synthetic simple|blocks)");
  } else {
    throw UsageError("unknown synthetic dataset '" + o.synthetic + "'");
  }
  return s;
}

struct Grid {
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;
};

std::optional<Grid> parse_grid(const std::string& text) {
  if (text.empty()) return std::nullopt;
  Grid g;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> g.lo >> c1 >> g.hi >> c2 >> g.step) || c1 != ':' || c2 != ':' || !(g.step > 0.0) ||
      g.hi < g.lo || g.lo < 0.0) {
    throw UsageError("--t-grid must look like start:stop:step with 0 <= start <= stop, step > 0");
  }
  return g;
}

std::vector<double> grid_points(const Grid& g) {
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((g.hi - g.lo) / g.step + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) out.push_back(g.lo + static_cast<double>(k) * g.step);
  return out;
}

// One solver output in a common tabular shape.
struct PathTable {
  std::string method;
  std::string param_name; // "t" or "lambda"
  std::vector<double> params;
  std::vector<ep::Vector> betas;
  std::vector<ep::Vector> grads;
  // Descent diagnostics (empty for other methods).
  std::vector<double> h_alpha;
  std::vector<double> p1;
  bool converged = false;
  json info = json::object();
};

enum class Kind { Egd, EgdFlow, CoordFlow, GradFlow, En, Ridge };

struct MethodSpec {
  Kind kind;
  ep::Flavor flavor = ep::Flavor::Unnormalized;
};

MethodSpec parse_method(const std::string& m) {
  if (m.rfind("egd:", 0) == 0) {
    const auto f = ep::parse_flavor(m.substr(4));
    if (!f) throw UsageError("unknown flavor in method '" + m + "'");
    return {Kind::Egd, *f};
  }
  if (m == "egd-flow") return {Kind::EgdFlow};
  if (m == "coord-flow") return {Kind::CoordFlow};
  if (m == "grad-flow") return {Kind::GradFlow};
  if (m == "en") return {Kind::En};
  if (m == "ridge") return {Kind::Ridge};
  throw UsageError("unknown method '" + m +
                   "' (expected egd:<flavor>, egd-flow, coord-flow, grad-flow, en or ridge)");
}

PathTable from_solution(const ep::SolutionPath& sp, const ep::Dataset& data) {
  PathTable t;
  t.param_name = "t";
  t.converged = sp.converged;
  t.info["stalled"] = sp.stalled;
  for (const auto& s : sp.samples) {
    t.params.push_back(s.t);
    t.betas.push_back(s.beta);
    t.grads.push_back(s.grad.size() ? s.grad : ep::Vector(data.cov * s.beta - data.xty));
    t.h_alpha.push_back(s.h_alpha);
    t.p1.push_back(static_cast<double>(s.p1));
  }
  return t;
}

PathTable compute_path(const std::string& method, const ep::Dataset& data, const Options& o) {
  const MethodSpec spec = parse_method(method);
  if (!(o.alpha >= 0.0 && o.alpha <= 1.0)) throw UsageError("--alpha must lie in [0,1]");
  PathTable t;
  switch (spec.kind) {
  case Kind::Egd: {
    ep::DescentConfig dc;
    dc.alpha = o.alpha;
    dc.step = o.step;
    dc.flavor = spec.flavor;
    dc.max_steps = o.max_steps;
    dc.record_every = o.record_every;
    t = from_solution(ep::run_descent(data, dc), data);
    break;
  }
  case Kind::EgdFlow:
  case Kind::CoordFlow:
  case Kind::GradFlow: {
    ep::FlowConfig fc;
    fc.alpha = spec.kind == Kind::GradFlow ? 0.0 : spec.kind == Kind::CoordFlow ? 1.0 : o.alpha;
    const ep::AnalyticalPath ap = ep::elastic_flow(data, fc);
    std::vector<double> ts;
    if (const auto g = parse_grid(o.t_grid)) {
      ts = grid_points(*g);
    } else {
      ts = grid_points({0.0, ap.t_final, o.step});
      if (ts.back() < ap.t_final) ts.push_back(ap.t_final);
    }
    t = from_solution(ap.sample(ts), data);
    t.h_alpha.clear();
    t.p1.clear();
    std::size_t fallback = 0;
    for (const auto& s : ap.segments) fallback += s.is_fallback() ? 1 : 0;
    t.info["segments"] = ap.segments.size();
    t.info["fallback_segments"] = fallback;
    t.info["simultaneous_events"] = ap.simultaneous_events;
    t.info["t_final"] = ap.t_final;
    t.info["ridged"] = ap.ridged;
    break;
  }
  case Kind::En: {
    t.param_name = "lambda";
    const auto lams = ep::lambda_grid(data, o.alpha);
    std::size_t unconverged = 0;
    for (auto& pt : ep::en_path(data, o.alpha, lams)) {
      unconverged += pt.converged ? 0 : 1;
      t.params.push_back(pt.lambda);
      t.grads.push_back(data.cov * pt.beta - data.xty);
      t.betas.push_back(std::move(pt.beta));
    }
    t.converged = unconverged == 0;
    t.info["unconverged_points"] = unconverged;
    break;
  }
  case Kind::Ridge: {
    t.param_name = "lambda";
    for (double lam : ep::lambda_grid(data, 0.0)) {
      ep::Vector b = ep::ridge(data, lam);
      t.params.push_back(lam);
      t.grads.push_back(data.cov * b - data.xty);
      t.betas.push_back(std::move(b));
    }
    t.converged = true;
    break;
  }
  }
  t.method = method;
  return t;
}

std::vector<std::string> beta_header(const std::string& prefix, ep::Index p) {
  std::vector<std::string> h;
  for (ep::Index d = 1; d <= p; ++d) h.push_back(prefix + std::to_string(d));
  return h;
}

void write_path_csv(const fs::path& file, const PathTable& t, bool gradients, int smooth) {
  const ep::Index p = t.betas.empty() ? 0 : t.betas.front().size();
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(2 + p + (gradients ? p : 0)));
  for (std::size_t i = 0; i < t.params.size(); ++i) {
    std::size_t c = 0;
    cols[c++].push_back(t.params[i]);
    cols[c++].push_back(t.betas[i].lpNorm<1>());
    for (ep::Index d = 0; d < p; ++d) cols[c++].push_back(t.betas[i][d]);
    if (gradients) {
      // Normalized by max |g| as plotted for the flavor comparison.
      const double gmax = t.grads[i].cwiseAbs().maxCoeff();
      for (ep::Index d = 0; d < p; ++d) cols[c++].push_back(gmax > 0.0 ? t.grads[i][d] / gmax : 0.0);
    }
  }
  if (smooth > 1) {
    for (std::size_t c = 2; c < cols.size(); ++c) cols[c] = ep::io::moving_average(cols[c], smooth);
  }
  ep::io::CsvWriter w(file.string());
  std::vector<std::string> header{"t_or_lambda", "l1_norm"};
  for (auto& h : beta_header("beta_", p)) header.push_back(h);
  if (gradients) {
    for (auto& h : beta_header("grad_", p)) header.push_back(h);
  }
  w.header(header);
  std::vector<double> row(cols.size());
  for (std::size_t i = 0; i < t.params.size(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) row[c] = cols[c][i];
    w.row(row);
  }
  w.close();
}

class Run {
public:
  Run(std::string command, const Options& o, std::vector<std::string> argv)
      : command_(std::move(command)), opts_(o), argv_(std::move(argv)),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(o.out_dir);
  }

  fs::path file(const std::string& name) {
    outputs_.push_back(name);
    return fs::path(opts_.out_dir) / name;
  }

  json& extra() { return extra_; }

  void finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m;
    m["command"] = command_;
    m["argv"] = argv_;
    m["config"] = config_json();
    m["seeds"] = json::array({opts_.seed});
    m["library_version"] = ep::kVersion;
    m["duration_seconds"] = secs;
    m["results"] = extra_;
    outputs_.push_back("manifest.json");
    m["outputs"] = outputs_;
    std::ofstream out(fs::path(opts_.out_dir) / "manifest.json", std::ios::binary);
    out << m.dump(2) << '\n';
    if (!out) throw ep::Error("failed to write manifest.json");
  }

private:
  json config_json() const {
    json c;
    c["data"] = opts_.data;
    c["synthetic"] = opts_.synthetic;
    c["alpha"] = opts_.alpha;
    c["step"] = opts_.step;
    c["seed"] = opts_.seed;
    c["reps"] = opts_.reps;
    c["emit_gradients"] = opts_.emit_gradients;
    c["smooth"] = opts_.smooth;
    c["n"] = opts_.n;
    c["method"] = opts_.method;
    c["method_b"] = opts_.method_b;
    c["t_grid"] = opts_.t_grid;
    c["max_steps"] = opts_.max_steps;
    c["record_every"] = opts_.record_every;
    c["rho1"] = opts_.rho1;
    c["rho2"] = opts_.rho2;
    c["sigma"] = opts_.sigma;
    c["p_half"] = opts_.p_half;
    c["cells"] = opts_.cells;
    c["criterion"] = opts_.criterion;
    c["threads"] = opts_.threads;
    return c;
  }

  std::string command_;
  Options opts_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
  json extra_ = json::object();
};

void cmd_path(Run& run, const Options& o) {
  parse_method(o.method);
  const Source src = load_source(o);
  const PathTable t = compute_path(o.method, src.data, o);
  write_path_csv(run.file("path.csv"), t, o.emit_gradients, 0);
  if (o.smooth > 1) write_path_csv(run.file("path_smoothed.csv"), t, o.emit_gradients, o.smooth);
  run.extra()["dataset"] = src.description;
  run.extra()["rows"] = t.params.size();
  run.extra()["converged"] = t.converged;
  run.extra()["solver"] = t.info;
}

void cmd_compare(Run& run, const Options& o) {
  if (o.method_b.empty()) throw UsageError("compare needs --method and --method-b");
  parse_method(o.method);
  parse_method(o.method_b);
  const Source src = load_source(o);
  const PathTable a = compute_path(o.method, src.data, o);
  const PathTable b = compute_path(o.method_b, src.data, o);
  const ep::Index p = src.data.p;

  double top_a = 0.0, top_b = 0.0;
  for (const auto& v : a.betas) top_a = std::max(top_a, v.lpNorm<1>());
  for (const auto& v : b.betas) top_b = std::max(top_b, v.lpNorm<1>());
  const double top = std::min(top_a, top_b);
  {
    ep::io::CsvWriter w(run.file("compare.csv").string());
    std::vector<std::string> header{"l1_norm"};
    for (auto& h : beta_header("a_beta_", p)) header.push_back(h);
    for (auto& h : beta_header("b_beta_", p)) header.push_back(h);
    header.push_back("max_abs_diff");
    w.header(header);
    const int n = 200;
    for (int i = 0; i <= n; ++i) {
      const double l1 = top * i / n;
      const ep::Vector ba = ep::beta_at_l1(a.betas, l1);
      const ep::Vector bb = ep::beta_at_l1(b.betas, l1);
      std::vector<double> row{l1};
      for (ep::Index d = 0; d < p; ++d) row.push_back(ba[d]);
      for (ep::Index d = 0; d < p; ++d) row.push_back(bb[d]);
      row.push_back((ba - bb).cwiseAbs().maxCoeff());
      w.row(row);
    }
    w.close();
  }
  {
    // Per-coordinate peak |beta_d| and the l1 norm at which it first enters.
    auto summary = [&](const PathTable& t, ep::Index d, double& peak, double& enter) {
      peak = 0.0;
      enter = std::numeric_limits<double>::quiet_NaN();
      for (const auto& v : t.betas) {
        peak = std::max(peak, std::abs(v[d]));
        if (std::isnan(enter) && std::abs(v[d]) > ep::kZeroTol) enter = v.lpNorm<1>();
      }
    };
    ep::io::CsvWriter w(run.file("peaks.csv").string());
    w.header({"coord", "peak_a", "peak_b", "enter_l1_a", "enter_l1_b"});
    for (ep::Index d = 0; d < p; ++d) {
      double pa, pb, ea, eb;
      summary(a, d, pa, ea);
      summary(b, d, pb, eb);
      w.row({static_cast<double>(d + 1), pa, pb, ea, eb});
    }
    w.close();
  }
  const std::size_t ma = ep::count_models(a.betas);
  const std::size_t mb = ep::count_models(b.betas);
  {
    ep::io::CsvWriter w(run.file("models.csv").string());
    w.header({"method", "model_count"});
    w.row({a.method}, {static_cast<double>(ma)});
    w.row({b.method}, {static_cast<double>(mb)});
    w.close();
  }
  run.extra()["dataset"] = src.description;
  run.extra()["model_count_a"] = ma;
  run.extra()["model_count_b"] = mb;
  run.extra()["aligned_sup_diff"] = ep::aligned_sup_diff(a.betas, b.betas);
}

std::vector<std::pair<double, double>> parse_cells(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("--cells entries must look like rho1:rho2");
    try {
      out.emplace_back(std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw UsageError("cannot parse cell '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--cells is empty");
  return out;
}

void cmd_experiment(Run& run, const Options& o) {
  if (o.reps < 1) throw UsageError("--reps must be positive");
  ep::ExperimentConfig cfg;
  cfg.reps = o.reps;
  cfg.seed = o.seed;
  cfg.egd_step = o.step;
  cfg.threads = o.threads;
  ep::io::CsvWriter w(run.file("experiment.csv").string());
  w.header({"rho1", "rho2", "criterion", "measure", "reps", "egd_mean", "egd_sd", "en_mean",
            "en_sd", "diff_mean", "diff_se"});
  json cells = json::array();
  for (const auto& [r1, r2] : parse_cells(o.cells)) {
    Options co = o;
    co.rho1 = r1;
    co.rho2 = r2;
    ep::BlockSpec spec = block_spec(co);
    const std::string r1s = ep::io::format_double(r1);
    const std::string r2s = ep::io::format_double(r2);
    std::vector<ep::ReplicateOutcome> reps;
    try {
      reps = ep::run_cell(spec, cfg);
    } catch (const ep::NotPSD& e) {
      std::cerr << "warning: skipping cell (" << r1 << ", " << r2 << "): " << e.what() << '\n';
      w.row({r1s, r2s, "not-psd", "", ""}, {});
      cells.push_back({{"rho1", r1}, {"rho2", r2}, {"status", "not-psd"}});
      continue;
    }
    for (int c = 0; c < 2; ++c) {
      for (ep::Measure m : ep::kAllMeasures) {
        const auto a = ep::summarize(ep::collect(reps, ep::Method::EGD, c, m));
        const auto b = ep::summarize(ep::collect(reps, ep::Method::EN, c, m));
        const auto d = ep::summarize(ep::paired_differences(reps, c, m));
        w.row({r1s, r2s, std::string(ep::to_string(static_cast<ep::Criterion>(c))),
               std::string(ep::to_string(m))},
              {static_cast<double>(d.count), a.mean, a.sd, b.mean, b.sd, d.mean, d.se});
      }
    }
    cells.push_back({{"rho1", r1}, {"rho2", r2}, {"status", "ok"}});
  }
  w.close();
  run.extra()["cells"] = cells;
}

void cmd_flavors(Run& run, const Options& o) {
  const Source src = load_source(o);
  json info = json::object();
  for (ep::Flavor f : ep::kAllFlavors) {
    ep::DescentConfig dc;
    dc.alpha = o.alpha;
    dc.step = o.step;
    dc.flavor = f;
    dc.max_steps = o.max_steps;
    dc.record_every = o.record_every;
    const ep::SolutionPath sp = ep::run_descent(src.data, dc);
    const ep::Index p = src.data.p;
    std::vector<std::vector<double>> h_cols(2);
    for (const auto& s : sp.samples) {
      h_cols[0].push_back(s.h_alpha);
      h_cols[1].push_back(static_cast<double>(s.p1));
    }
    if (o.smooth > 1) {
      for (auto& c : h_cols) c = ep::io::moving_average(c, o.smooth);
    }
    const std::string name = "flavor_" + std::string(ep::to_string(f)) + ".csv";
    ep::io::CsvWriter w(run.file(name).string());
    std::vector<std::string> header{"t", "l1_norm"};
    for (auto& h : beta_header("beta_", p)) header.push_back(h);
    for (const char* h : {"h_alpha", "p1", "bound_lower", "bound_upper"}) header.emplace_back(h);
    w.header(header);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    ep::Index max_p1 = 0;
    for (std::size_t i = 0; i < sp.samples.size(); ++i) {
      const auto& s = sp.samples[i];
      max_p1 = std::max(max_p1, s.p1);
      std::vector<double> row{s.t, s.l1};
      for (ep::Index d = 0; d < p; ++d) row.push_back(s.beta[d]);
      row.push_back(h_cols[0][i]);
      row.push_back(h_cols[1][i]);
      // The bounds describe the unscaled flavors.
      const bool bounded = (f == ep::Flavor::SteepestUnscaled || f == ep::Flavor::StagewiseUnscaled) && s.p1 > 0;
      if (bounded) {
        const auto bnd = ep::h_alpha_bounds(s.p1, o.alpha, o.step, ep::is_stagewise(f));
        row.push_back(bnd.lower);
        row.push_back(bnd.upper);
      } else {
        row.push_back(nan);
        row.push_back(nan);
      }
      w.row(row);
    }
    w.close();
    info[std::string(ep::to_string(f))] = {{"samples", sp.size()},
                                           {"converged", sp.converged},
                                           {"stalled", sp.stalled},
                                           {"max_p1", max_p1},
                                           {"final_p1", sp.back().p1}};
  }
  run.extra()["dataset"] = src.description;
  run.extra()["flavors"] = info;
}

void cmd_select(Run& run, const Options& o) {
  if (o.synthetic != "blocks") throw UsageError("select needs --synthetic blocks (train/val/test split)");
  const ep::BlockData bd = ep::gen_blocks(block_spec(o));
  ep::ExperimentConfig cfg;
  cfg.egd_step = o.step;
  const std::string& m = o.method;
  if (m != "egd" && m != "en") throw UsageError("select --method must be egd or en");
  if (o.criterion != "val" && o.criterion != "cv") throw UsageError("--criterion must be val or cv");
  const ep::Method method = m == "egd" ? ep::Method::EGD : ep::Method::EN;
  const ep::MethodOutcome out = ep::detail::run_method(method, bd, cfg);
  const int c = o.criterion == "val" ? 0 : 1;
  const ep::PathMetrics& pm = out.metrics[c];
  ep::io::CsvWriter w(run.file("selection.csv").string());
  w.header({"alpha_star", "t_or_lambda_star", "sensitivity", "specificity", "test_mse",
            "true_path_rate"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  w.row({out.alpha_star, out.param_star[c], pm.sensitivity.value_or(nan),
         pm.specificity.value_or(nan), pm.test_mse, pm.true_path_rate});
  w.close();
  run.extra()["method"] = m;
  run.extra()["criterion"] = o.criterion;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elastic gradient descent, its flows and elastic-net baselines"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--data", o.data, "Tab-separated data file (header, last column = response)");
    sub->add_option("--synthetic", o.synthetic, "Synthetic dataset: simple | blocks");
    sub->add_option("--alpha", o.alpha, "Elastic mixing parameter in [0,1]");
    sub->add_option("--step", o.step, "Step size (delta t, or epsilon for stagewise flavors)");
    sub->add_option("--seed", o.seed, "Random seed for synthetic data");
    sub->add_option("--out-dir", o.out_dir, "Output directory");
    sub->add_option("--reps", o.reps, "Replicates per experiment cell");
    sub->add_flag("--emit-gradients", o.emit_gradients, "Add normalized gradient columns");
    sub->add_option("--smooth", o.smooth, "Moving-average width for an extra smoothed output");
    sub->add_option("--n", o.n, "Number of synthetic observations");
    sub->add_option("--max-steps", o.max_steps, "Step cap for descent runs");
    sub->add_option("--record-every", o.record_every, "Keep every k-th descent iterate");
    sub->add_option("--rho1", o.rho1, "Within-block correlation (blocks)");
    sub->add_option("--rho2", o.rho2, "Between-block correlation (blocks)");
    sub->add_option("--sigma", o.sigma, "Noise standard deviation (blocks)");
    sub->add_option("--p-half", o.p_half, "Block size (blocks)");
  };

  CLI::App* path = app.add_subcommand("path", "Compute one solution path");
  add_common(path);
  path->add_option("--method", o.method,
                   "egd:<flavor> | egd-flow | coord-flow | grad-flow | en | ridge");
  path->add_option("--t-grid", o.t_grid, "start:stop:step sampling grid for flows");

  CLI::App* compare = app.add_subcommand("compare", "Compare two paths aligned by l1 norm");
  add_common(compare);
  compare->add_option("--method", o.method, "First method")->required();
  compare->add_option("--method-b", o.method_b, "Second method")->required();
  compare->add_option("--t-grid", o.t_grid, "start:stop:step sampling grid for flows");

  CLI::App* experiment = app.add_subcommand("experiment", "Block-correlation selection study");
  add_common(experiment);
  experiment->add_option("--cells", o.cells, "Comma-separated rho1:rho2 pairs");
  experiment->add_option("--threads", o.threads, "Worker threads (0 = automatic)");

  CLI::App* flavors = app.add_subcommand("flavors", "All five descent flavors with diagnostics");
  add_common(flavors);

  CLI::App* select = app.add_subcommand("select", "Model selection on a blocks instance");
  add_common(select);
  select->add_option("--method", o.method, "egd | en");
  select->add_option("--criterion", o.criterion, "val | cv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every parse failure is a usage error.
    return app.exit(e) == 0 ? 0 : 2;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    CLI::App* sub = app.get_subcommands().front();
    Options eff = o;
    if (sub == select && !sub->count("--method")) eff.method = "egd";
    if (sub == flavors || sub == experiment) eff.method.clear();
    Run run(sub->get_name(), eff, args);
    if (sub == path) cmd_path(run, eff);
    else if (sub == compare) cmd_compare(run, eff);
    else if (sub == experiment) cmd_experiment(run, eff);
    else if (sub == flavors) cmd_flavors(run, eff);
    else cmd_select(run, eff);
    run.finish();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
