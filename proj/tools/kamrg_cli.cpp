// kamrg: command-line driver for the flow, the oracles and their comparison.
//
// Exit codes: 0 success, 1 verification thresholds not met, 2 bad
// configuration or input file, 3 run aborted.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kamrg/config.hpp"
#include "kamrg/conjugacy.hpp"
#include "kamrg/kernels.hpp"
#include "kamrg/oracles.hpp"
#include "kamrg/potential.hpp"
#include "kamrg/rg_flow.hpp"

namespace {

using namespace kamrg;
namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kBadInput = 2;
constexpr int kAborted = 3;

// Tolerances of the in-run invariant summary.
constexpr double kW0ZeroRel = 1e-12;
constexpr double kRealityTol = 1e-12;
constexpr double kWardTol = 1e-8;
constexpr double kTransposeTol = 1e-8;
constexpr double kTailTol = 1e-10;

struct Overrides {
  std::optional<int> d, box_Q_kernel, box_Q_solver, n_max, kappa_count, lindstedt_order, grid;
  std::optional<double> lambda, alpha, beta, h, verify_tol;
  std::optional<std::string> omega, potential, chi, stepper, t_end, output;
  std::optional<std::uint64_t> seed;
};

void apply(const Overrides& o, RunConfig& c) {
  if (o.d) c.d = *o.d;
  if (o.box_Q_kernel) c.box_Q_kernel = *o.box_Q_kernel;
  if (o.box_Q_solver) c.box_Q_solver = *o.box_Q_solver;
  if (o.n_max) c.n_max = *o.n_max;
  if (o.kappa_count) c.kappa_count = *o.kappa_count;
  if (o.lindstedt_order) c.lindstedt_order = *o.lindstedt_order;
  if (o.grid) c.grid = *o.grid;
  if (o.lambda) c.lambda = *o.lambda;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.beta) c.beta = *o.beta;
  if (o.h) c.h = *o.h;
  if (o.verify_tol) c.verify_tol = *o.verify_tol;
  if (o.chi) c.chi = *o.chi;
  if (o.stepper) c.stepper = *o.stepper;
  if (o.output) c.output = *o.output;
  if (o.seed) c.seed = *o.seed;
  if (o.potential) c.potential = *o.potential;
  if (o.omega) {
    if (*o.omega == "golden") {
      c.omega = "golden";
    } else {
      std::vector<double> w;
      std::stringstream ss(*o.omega);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          w.push_back(std::stod(item));
        } catch (const std::exception&) {
          throw ConfigError("--omega expects \"golden\" or a comma-separated list");
        }
      }
      c.omega = w;
    }
  }
  if (o.t_end) {
    if (*o.t_end == "auto") {
      c.t_end.reset();
    } else {
      try {
        c.t_end = std::stod(*o.t_end);
      } catch (const std::exception&) {
        throw ConfigError("--t-end expects \"auto\" or a number");
      }
    }
  }
}

struct Context {
  RunConfig cfg;
  FrequencyVector omega;
  AnalyticPotential v;
  fs::path out;
};

Context prepare(const RunConfig& cfg) {
  cfg.validate();
  Context c{cfg, cfg.frequency(), cfg.load_potential(), fs::path(cfg.output)};
  write_json(c.out / "config.json", cfg.to_json());
  return c;
}

int grid_for(const RunConfig& cfg, const TruncationBox& box) {
  return cfg.grid > 0 ? std::max(cfg.grid, 4 * box.radius()) : Composer::default_grid(box.radius());
}

double weight_rho(const AnalyticPotential& v) {
  const double R = v.fit().R;
  return R > 0.0 ? 0.5 / R : 0.5;
}

FlowEngine make_engine(const Context& c, int n_max, bool with_kappa) {
  FlowEngine e(c.omega, c.cfg.schedule(), c.cfg.kernel_box(), n_max, with_kappa);
  e.beta = c.cfg.beta;
  e.rho = weight_rho(c.v);
  return e;
}

std::optional<KappaGrid> kappa_grid_for(const Context& c, const FlowEngine& e) {
  if (c.cfg.kappa_count == 0) return std::nullopt;
  const double t_end = c.cfg.t_end ? *c.cfg.t_end : auto_t_end(e, c.cfg.h);
  return auto_kappa_grid(c.omega, c.cfg.schedule().eta(t_end), c.cfg.kappa_count, true);
}

/// theta_1..theta_d, X_1..X_d on a uniform grid (32 points per axis for
/// d <= 2, 8 otherwise).
std::string theta_grid_csv(const FourierSeriesRd& x) {
  const int d = x.dim();
  const int N = d <= 2 ? 32 : 8;
  std::ostringstream os;
  for (int k = 0; k < d; ++k) os << (k ? "," : "") << "theta_" << (k + 1);
  for (int k = 0; k < d; ++k) os << ",X_" << (k + 1);
  os << '\n';
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= std::size_t(N);
  std::vector<double> theta(static_cast<std::size_t>(d));
  for (std::size_t g = 0; g < total; ++g) {
    std::size_t rem = g;
    for (int k = d - 1; k >= 0; --k) {
      theta[std::size_t(k)] = 2.0 * std::numbers::pi * double(rem % std::size_t(N)) / N;
      rem /= std::size_t(N);
    }
    auto X = x.evaluate(theta);
    for (int k = 0; k < d; ++k) os << (k ? "," : "") << fmt(theta[std::size_t(k)]);
    for (int k = 0; k < d; ++k) os << ',' << fmt(X[std::size_t(k)]);
    os << '\n';
  }
  return os.str();
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream os;
  write_trace_csv(os, rows);
  return os.str();
}

json residual_json(const Context& c, const FourierSeriesRd& x, double lambda) {
  return residual(c.v, lambda, c.omega, x, grid_for(c.cfg, x.box())).to_json();
}

void write_torus(const Context& c, const std::string& name, const FourierSeriesRd& x, double lambda,
                 json residuals) {
  write_json(c.out / (name + ".json"), torus_to_json(x, c.omega, lambda, residuals));
  write_atomic(c.out / (name + "_grid.csv"), theta_grid_csv(x));
}

FourierSeriesRd lindstedt_guess(const Context& c, const TruncationBox& box, double lambda) {
  return lindstedt(c.v, c.omega, box, 2).sum(lambda);
}

// ---------------------------------------------------------------------------
// flow

int cmd_flow(const Context& c) {
  const FlowEngine engine = make_engine(c, c.cfg.n_max, c.cfg.kappa_count > 0);
  const auto kgrid = kappa_grid_for(c, engine);
  ConjugacyRun run = run_conjugacy_flow(engine, c.v, c.cfg.lambda, c.cfg.stepper_config(), 1.0 / 3.0,
                                        kgrid ? &*kgrid : nullptr);
  const auto& trace = run.state.trace;

  json inv;
  double w0z = 0.0, real = 0.0, ward = 0.0, trans = 0.0;
  bool w0_ok = true;
  for (const auto& r : trace) {
    w0z = std::max(w0z, r.w0_at_zero);
    real = std::max(real, r.reality);
    ward = std::max(ward, r.ward);
    trans = std::max(trans, r.transpose);
    if (r.w0_at_zero > kW0ZeroRel * r.w0_l1) w0_ok = false;
  }
  const double composite = composite_norm(run.state.norms);
  double wt_ratio = 0.0;
  const double wt0 = run.state.norms.front().weighted_w0;
  for (const auto& n : run.state.norms) wt_ratio = std::max(wt_ratio, wt0 > 0.0 ? n.weighted_w0 / wt0 : 0.0);
  inv["w0_at_zero_max"] = w0z;
  inv["reality_max"] = real;
  inv["ward_max"] = ward;
  inv["transpose_max"] = trans;
  inv["tail_certificate"] = run.torus.tail_certificate;
  inv["t_end"] = run.t_end;
  inv["t_final"] = run.t_final;
  inv["composite_norm"] = composite;
  inv["weighted_w0_ratio_max"] = wt_ratio;
  inv["tolerances"] = {{"w0_at_zero_relative", kW0ZeroRel},
                       {"reality", kRealityTol},
                       {"ward", kWardTol},
                       {"transpose", kTransposeTol},
                       {"tail_certificate", kTailTol}};
  bool ok = w0_ok && real <= kRealityTol && ward <= kWardTol && trans <= kTransposeTol &&
            run.torus.tail_certificate <= kTailTol;
  if (kgrid) {
    const auto ev = kappa_evenness(run.state.w);
    double tr = 0.0;
    for (int i = 0; i < c.cfg.d; ++i)
      for (int sgn : {1, -1}) {
        Mode e(std::size_t(c.cfg.d), 0);
        e[std::size_t(i)] = sgn;
        tr = std::max(tr, translation_residual(run.state.w, c.omega, e));
      }
    inv["kappa"] = {{"evenness", ev.evenness},
                    {"derivative_at_zero", ev.derivative_at_zero},
                    {"w1_scale", ev.w1_scale},
                    {"translation_residual", tr}};
  }
  inv["passed"] = ok;

  json res = residual_json(c, run.torus.x, c.cfg.lambda);
  res["tail_certificate"] = run.torus.tail_certificate;
  res["t_end"] = run.t_end;
  write_torus(c, "torus", run.torus.x, c.cfg.lambda, res);
  write_atomic(c.out / "trace.csv", trace_csv(trace));
  write_json(c.out / "invariants.json", inv);
  if (!ok) std::cerr << "flow: in-run invariant check failed, see invariants.json\n";
  return ok ? kOk : kAborted;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const Context& c, const std::string& torus_path) {
  TorusFile tf;
  try {
    std::ifstream in(torus_path);
    if (!in) throw std::runtime_error("cannot open " + torus_path);
    json j;
    in >> j;
    tf = torus_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError("torus file: " + std::string(e.what()));
  }
  if (int(tf.omega.size()) != c.cfg.d) throw ConfigError("torus dimension differs from the config");
  const FourierSeriesRd& x = tf.x;
  const double lambda = tf.lambda;
  const FrequencyVector om(tf.omega);
  const TruncationBox& box = x.box();
  const int grid = grid_for(c.cfg, box);
  const double floor = 1e-15;
  const double tol = c.cfg.verify_tol * lambda + floor;

  const ResidualReport rep = residual(c.v, lambda, om, x, grid);
  json failures = json::array();
  if (rep.mode_residual_max > tol)
    failures.push_back("mode " + to_string(rep.worst_mode) + " residual " + fmt(rep.mode_residual_max) +
                       " exceeds " + fmt(tol));
  if (rep.zero_mode > tol) failures.push_back("zero mode |u(0,x)| = " + fmt(rep.zero_mode));

  std::mt19937_64 rng(c.cfg.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  json betas = json::array();
  for (int k = 0; k < 5; ++k) {
    std::vector<double> beta(static_cast<std::size_t>(c.cfg.d));
    for (auto& b : beta) b = angle(rng);
    auto chk = translation_family_check(x, beta, c.v, lambda, om, grid);
    betas.push_back({{"beta", beta}, {"sup_residual", chk.translated_residual}});
    if (chk.translated_residual > 2.0 * chk.base_residual + floor)
      failures.push_back("translate by beta #" + std::to_string(k) + " has residual " +
                         fmt(chk.translated_residual) + " vs " + fmt(chk.base_residual));
  }

  const auto lin = lindstedt(c.v, om, box, c.cfg.lindstedt_order);
  bool newton_ok = false;
  std::optional<double> distance;
  try {
    auto nr = newton_solve(c.v, lambda, om, box, lin.terms.size() >= 2 ? lindstedt(c.v, om, box, 2).sum(lambda)
                                                                      : FourierSeriesRd(box));
    newton_ok = nr.converged;
    distance = translation_family_check(x, std::vector<double>(std::size_t(c.cfg.d), 0.0), c.v, lambda, om, grid,
                                        &nr.x)
                   .distance;
  } catch (const std::runtime_error& e) {
    failures.push_back(std::string("newton: ") + e.what());
  }

  json out;
  out["lindstedt_radius_estimate"] = lin.radius_estimate();
  out["newton_converged"] = newton_ok;
  out["sup_residual"] = rep.sup_residual;
  out["mode_residual_max"] = rep.mode_residual_max;
  out["worst_mode"] = rep.worst_mode;
  out["zero_mode"] = rep.zero_mode;
  out["translation_distance"] = distance ? json(*distance) : json(nullptr);
  out["translations"] = betas;
  out["threshold"] = tol;
  out["failures"] = failures;
  out["passed"] = failures.empty();
  write_json(c.out / "verification.json", out);
  for (const auto& f : failures) std::cerr << "verify: " << f.get<std::string>() << '\n';
  return failures.empty() ? kOk : kFailed;
}

// ---------------------------------------------------------------------------
// lindstedt, newton

int cmd_lindstedt(const Context& c) {
  const TruncationBox box = c.cfg.solver_box();
  const auto lin = lindstedt(c.v, c.omega, box, c.cfg.lindstedt_order);
  const FourierSeriesRd x = lin.sum(c.cfg.lambda);
  json res = residual_json(c, x, c.cfg.lambda);
  json norms = json::array();
  for (const auto& t : lin.terms) norms.push_back(t.l1_norm());
  res["order"] = lin.K;
  res["term_l1_norms"] = norms;
  res["radius_estimate"] = lin.radius_estimate();
  write_torus(c, "lindstedt", x, c.cfg.lambda, res);
  return kOk;
}

int cmd_newton(const Context& c) {
  const TruncationBox box = c.cfg.solver_box();
  NewtonOptions opt;
  opt.grid = c.cfg.grid;
  const auto nr = newton_solve(c.v, c.cfg.lambda, c.omega, box, lindstedt_guess(c, box, c.cfg.lambda), opt);
  json res = residual_json(c, nr.x, c.cfg.lambda);
  res["converged"] = nr.converged;
  res["iterations"] = nr.iterations;
  res["residual_history"] = nr.residual_history;
  res["step_history"] = nr.step_history;
  write_torus(c, "newton", nr.x, c.cfg.lambda, res);
  if (!nr.converged) {
    std::cerr << "newton: no convergence in " << opt.max_iter << " iterations\n";
    return kAborted;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// compare

int cmd_compare(const Context& c) {
  const double lambda = c.cfg.lambda;
  const TruncationBox sbox = c.cfg.solver_box(), kbox = c.cfg.kernel_box();
  const int grid = grid_for(c.cfg, sbox);
  std::map<std::string, FourierSeriesRd> tori;

  const FlowEngine engine = make_engine(c, c.cfg.n_max, false);
  StepperConfig rk4 = c.cfg.stepper_config(), colloc = c.cfg.stepper_config();
  rk4.method = "rk4";
  colloc.method = "collocation";
  tori["rg_rk4"] = run_conjugacy_flow(engine, c.v, lambda, rk4).torus.x;
  tori["rg_collocation"] = run_conjugacy_flow(engine, c.v, lambda, colloc).torus.x;
  ContinuationOptions copt;
  copt.grid = c.cfg.grid;
  tori["continuation"] = continuation_solve(c.v, lambda, c.omega, sbox, c.cfg.schedule(), copt).x;
  const auto lin = lindstedt(c.v, c.omega, sbox, c.cfg.lindstedt_order);
  tori["lindstedt"] = lin.sum(lambda);
  NewtonOptions nopt;
  nopt.grid = c.cfg.grid;
  tori["newton"] = newton_solve(c.v, lambda, c.omega, sbox, lindstedt_guess(c, sbox, lambda), nopt).x;

  json matrix = json::object();
  const std::vector<double> zero(std::size_t(c.cfg.d), 0.0);
  for (const auto& [a, xa] : tori)
    for (const auto& [b, xb] : tori) {
      double dist = 0.0;
      if (a != b) dist = *translation_family_check(xa, zero, c.v, lambda, c.omega, grid, &xb).distance;
      matrix[a][b] = dist;
    }

  // RG against Newton on the hierarchy box, for every truncation order;
  // collocation keeps the step error below the truncation error.
  json ladder = json::array();
  const auto newton_k =
      newton_solve(c.v, lambda, c.omega, kbox, lindstedt_guess(c, kbox, lambda), nopt).x;
  for (int n = 1; n <= c.cfg.n_max; ++n) {
    FourierSeriesRd x = n == c.cfg.n_max ? tori["rg_collocation"]
                                         : run_conjugacy_flow(make_engine(c, n, false), c.v, lambda, colloc).torus.x;
    ladder.push_back({{"n_max", n}, {"distance_to_newton", FourierSeriesRd::l1_distance(x, newton_k)}});
  }

  // Order-one Lindstedt residual against lambda.
  const auto first = lindstedt(c.v, c.omega, sbox, 1);
  std::ostringstream csv;
  csv << "lambda,sup_residual,slope\n";
  json sweep = json::array();
  double prev_l = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < c.cfg.lambda_sweep.size(); ++i) {
    const double l = c.cfg.lambda_sweep[i];
    const double r = residual(c.v, l, c.omega, first.sum(l), grid).sup_residual;
    double slope = std::nan("");
    if (i > 0 && prev_r > 0.0 && r > 0.0) slope = std::log(r / prev_r) / std::log(l / prev_l);
    csv << fmt(l) << ',' << fmt(r) << ',' << fmt(slope) << '\n';
    sweep.push_back({{"lambda", l}, {"sup_residual", r}, {"slope", std::isnan(slope) ? json(nullptr) : json(slope)}});
    prev_l = l;
    prev_r = r;
  }

  json out;
  out["distance_matrix"] = matrix;
  out["rg_n_max_ladder"] = ladder;
  out["lindstedt_order1_sweep"] = sweep;
  write_json(c.out / "compare.json", out);
  write_atomic(c.out / "lambda_sweep.csv", csv.str());
  return kOk;
}

// ---------------------------------------------------------------------------
// diagnose

int cmd_diagnose(const Context& c) {
  const FlowEngine engine = make_engine(c, c.cfg.n_max, c.cfg.kappa_count > 0);
  const auto kgrid = kappa_grid_for(c, engine);
  KernelHierarchy w = build_initial_kernels(c.v, c.cfg.lambda, c.cfg.n_max, engine.box());
  json initial;
  json ward = json::array(), trans = json::array();
  for (int n = 0; n < c.cfg.n_max; ++n) ward.push_back(ward_residual_all_directions(w, n));
  for (int n = 1; n <= c.cfg.n_max; ++n) trans.push_back(transpose_residual(w, n));
  initial["ward_residual"] = ward;
  initial["transpose_residual"] = trans;
  initial["reality_residual"] = reality_residual(w);
  if (kgrid) {
    w.attach_kappa(*kgrid);
    w.seed_kappa_from_plain();
  }
  FlowState s = make_state(std::move(w));
  const double t_end = c.cfg.t_end ? *c.cfg.t_end : auto_t_end(engine, c.cfg.h);
  integrate(engine, s, t_end, c.cfg.stepper_config());

  std::ostringstream norms;
  norms << "t,eta,beta_t";
  for (int n = 0; n <= c.cfg.n_max; ++n) norms << ",norm_w" << n;
  norms << ",weighted_w0,higher_order,composite\n";
  for (const auto& r : s.norms) {
    norms << fmt(r.t) << ',' << fmt(r.eta) << ',' << fmt(r.beta_t);
    for (double v : r.per_n_norm) norms << ',' << fmt(v);
    norms << ',' << fmt(r.weighted_w0) << ',' << fmt(r.higher_order_term) << ',' << fmt(r.composite) << '\n';
  }
  std::ostringstream dump;
  dump_kernels(s.w, dump, s.t);

  json out;
  out["initial"] = initial;
  out["t_end"] = t_end;
  out["composite_norm"] = composite_norm(s.norms);
  out["rho"] = engine.rho;
  if (kgrid) {
    const auto ev = kappa_evenness(s.w);
    out["kappa"] = {{"grid", kgrid->values},
                    {"evenness", ev.evenness},
                    {"derivative_at_zero", ev.derivative_at_zero},
                    {"w1_scale", ev.w1_scale}};
  }
  write_json(c.out / "diagnose.json", out);
  write_atomic(c.out / "norms.csv", norms.str());
  write_atomic(c.out / "kernels.jsonl", dump.str());
  write_atomic(c.out / "trace.csv", trace_csv(s.trace));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Renormalization-group construction of KAM tori"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides o;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--d", o.d, "dimension");
  app.add_option("--omega", o.omega, "\"golden\" or comma-separated frequencies");
  app.add_option("--potential", o.potential, "\"cos_sum\" or path to a potential JSON file");
  app.add_option("--lambda", o.lambda, "coupling");
  app.add_option("--box-q-kernel", o.box_Q_kernel, "hierarchy box radius");
  app.add_option("--box-q-solver", o.box_Q_solver, "solver and oracle box radius");
  app.add_option("--n-max", o.n_max, "highest kernel order");
  app.add_option("--alpha", o.alpha, "cutoff schedule rate, in (0, 1/4)");
  app.add_option("--beta", o.beta, "norm decay rate");
  app.add_option("--chi", o.chi, "cutoff profile");
  app.add_option("--stepper", o.stepper, "rk4 or collocation");
  app.add_option("--step", o.h, "RK4 step h");
  app.add_option("--t-end", o.t_end, "\"auto\" or end time");
  app.add_option("--kappa-count", o.kappa_count, "kappa stencil size (0 disables)");
  app.add_option("--seed", o.seed, "seed for randomized checks");
  app.add_option("--output", o.output, "output directory");
  app.add_option("--lindstedt-order", o.lindstedt_order, "Lindstedt order");
  app.add_option("--grid", o.grid, "composition grid per axis (0: 4Q+2)");
  app.add_option("--verify-tol", o.verify_tol, "per-mode residual threshold relative to lambda");

  std::string torus_path;
  auto* flow = app.add_subcommand("flow", "run the kernel and conjugacy flows, write the torus");
  auto* verify = app.add_subcommand("verify", "check a torus file against the oracles");
  verify->add_option("--torus", torus_path, "torus JSON file")->required();
  auto* lin = app.add_subcommand("lindstedt", "Lindstedt partial sum on the solver box");
  auto* newton = app.add_subcommand("newton", "Newton solve on the solver box");
  auto* compare = app.add_subcommand("compare", "cross-validate all solvers");
  auto* diagnose = app.add_subcommand("diagnose", "kernel norms, invariants and dump");
  for (auto* s : {flow, verify, lin, newton, compare, diagnose}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
    apply(o, cfg);
    const Context ctx = prepare(cfg);
    if (flow->parsed()) return cmd_flow(ctx);
    if (verify->parsed()) return cmd_verify(ctx, torus_path);
    if (lin->parsed()) return cmd_lindstedt(ctx);
    if (newton->parsed()) return cmd_newton(ctx);
    if (compare->parsed()) return cmd_compare(ctx);
    if (diagnose->parsed()) return cmd_diagnose(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kBadInput;
  } catch (const FlowAbort& e) {
    std::cerr << "flow aborted: " << e.what() << '\n';
    return kAborted;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kAborted;
  }
  return kBadInput;
}
