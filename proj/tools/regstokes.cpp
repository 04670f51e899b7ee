// Command-line front end: grand resistance matrices, torus sedimentation,
// (eps, h) sweeps, nearest-neighbour reference runs and rule comparison.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "regstokes/regstokes.hpp"

using namespace regstokes;

namespace {

struct Common {
  std::string shape = "sphere";
  std::string method = "nyr";
  std::string eps = "0.2";
  std::string h = "0.1";
  std::string rule = "1,1.4142135623730951,2";
  std::string out;
  unsigned workers = 0;
  bool drop_empty = false;
  double quad_refine = 4.0;
  double filter_fraction = 0.1;
  double rcond_threshold = SolveOptions{}.rcond_threshold;
  double output_tolerance = SolveOptions{}.output_tolerance;
  double t_end = 98.7;
  double rtol = 1e-6;
  double atol = 1e-8;

  SolveOptions solve() const {
    SolveOptions s;
    s.workers = workers;
    s.rcond_threshold = rcond_threshold;
    s.output_tolerance = output_tolerance;
    return s;
  }

  MethodConfig method_config(double e) const {
    MethodConfig m;
    m.method = parse_method(method);
    m.epsilon = e;
    m.rule = ExtrapolationRule::parse(rule);
    m.quad_refine = quad_refine;
    m.filter_fraction = filter_fraction;
    m.drop_empty = drop_empty;
    m.solve = solve();
    return m;
  }

  IntegrationOptions integration() const {
    IntegrationOptions o;
    o.rtol = rtol;
    o.atol = atol;
    return o;
  }
};

double single(const std::string& key, const std::string& text) {
  const auto v = detail::parse_list(key, text);
  if (v.size() != 1) throw InvalidParameter("--" + key + " takes a single value here");
  return v.front();
}

void add_solver_flags(CLI::App* app, Common& c, bool with_rule = true) {
  app->add_option("--shape", c.shape, "sphere, spheroid(a=5,c=1) or torus(R=2.5,r=1)");
  app->add_option("--method", c.method, "ny, nyr or nearest");
  if (with_rule) app->add_option("--rule", c.rule, "extrapolation multipliers c1,c2,c3");
  app->add_option("--workers", c.workers, "worker threads (0: all cores)");
  app->add_flag("--drop-empty", c.drop_empty, "drop force points that receive no quadrature points");
  app->add_option("--quad-refine", c.quad_refine, "nearest: h / h_q");
  app->add_option("--filter-fraction", c.filter_fraction, "nearest: filter radius in units of h_q");
  app->add_option("--rcond-threshold", c.rcond_threshold, "condition estimate below which solves are verified");
  app->add_option("--output-tolerance", c.output_tolerance, "allowed relative output change under one correction step");
}

void add_time_flags(CLI::App* app, Common& c) {
  app->add_option("--t-end", c.t_end, "final time");
  app->add_option("--rtol", c.rtol, "relative tolerance");
  app->add_option("--atol", c.atol, "absolute tolerance");
}

template <class F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot write " + path);
  write(os);
}

int cmd_grm(const Common& c) {
  const Shape shape = parse_shape(c.shape);
  const MethodConfig mc = c.method_config(single("eps", c.eps));
  const double h = single("h", c.h);

  GrandResistanceMatrix A;
  std::size_t n = 0;
  double achieved = 0.0;
  if (mc.method == Method::nearest) {
    const auto pair = make_nearest_pair(shape, h, mc.quad_refine, mc.filter_fraction);
    const auto map = build_nearest_map(pair.force.points, pair.quad.points, mc.tie_tolerance,
                                       mc.drop_empty ? EmptyPointPolicy::drop : EmptyPointPolicy::error);
    StokesSystem sys = assemble_nearest(pair.force.points, pair.quad, map, RegParam{mc.epsilon, mc.mu}, mc.solve);
    n = sys.n_points();
    achieved = pair.force.h;
    A = ResistanceSolver(std::move(sys), mc.solve).grand_resistance(pair.force.centroid());
  } else {
    const auto disc = discretise(shape, h);
    n = disc.size();
    achieved = disc.h;
    A = mc.method == Method::ny ? grand_resistance(disc, RegParam{mc.epsilon, mc.mu}, disc.centroid(), mc.solve)
                                : nyr_grand_resistance(disc, mc.epsilon, mc.rule, mc.mu, mc.solve);
  }

  with_output(c.out, [&](std::ostream& os) {
    os.precision(17);
    os << "# " << shape_tag(shape) << " method=" << c.method << " eps=" << mc.epsilon << " h=" << achieved
       << " points=" << n << '\n';
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) os << (j ? " " : "") << A.m(i, j);
      os << '\n';
    }
    if (!std::holds_alternative<Torus>(shape)) {
      os << "# rel_error " << relative_error_2norm(A, detail::analytic_grm(shape, mc.mu)) << '\n';
    }
  });
  return 0;
}

int cmd_sediment(const Common& c) {
  const Shape shape = parse_shape(c.shape);
  const auto* torus = std::get_if<Torus>(&shape);
  if (!torus) throw InvalidParameter("sediment runs the torus experiment");
  const Trajectory traj =
      sediment_torus(torus->R, torus->r, single("h", c.h), c.method_config(single("eps", c.eps)), c.t_end,
                     c.integration());
  if (!c.out.empty()) with_output(c.out, [&](std::ostream& os) { write_trajectory(os, traj); });
  std::cout.precision(17);
  std::cout << "z(" << traj.back().t << ") = " << traj.back().state.x0.z() << '\n';
  return 0;
}

int cmd_sweep(const Common& c, const std::string& config_path, const std::string& reference_file, const CLI::App* app) {
  SweepConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw InvalidInput("cannot open config " + config_path);
    cfg = read_config(in);
  } else {
    cfg.shape = parse_shape(c.shape);
    cfg.observable = default_observable(cfg.shape);
    cfg.reference = default_reference(cfg.observable);
    cfg.eps = {0.2};
    cfg.h = {0.1};
  }
  auto given = [&](const char* name) { return app->count(name) > 0; };
  if (given("--shape")) {
    cfg.shape = parse_shape(c.shape);
    cfg.observable = default_observable(cfg.shape);
    cfg.reference = default_reference(cfg.observable);
  }
  if (given("--method") || config_path.empty()) cfg.method = parse_method(c.method);
  if (given("--eps")) cfg.eps = detail::parse_list("eps", c.eps);
  if (given("--h")) cfg.h = detail::parse_list("h", c.h);
  if (given("--rule")) cfg.rule = ExtrapolationRule::parse(c.rule);
  if (given("--out")) cfg.out = c.out;
  if (given("--workers")) cfg.workers = c.workers;
  if (given("--drop-empty")) cfg.drop_empty = c.drop_empty;
  if (given("--quad-refine")) cfg.quad_refine = c.quad_refine;
  if (given("--filter-fraction")) cfg.filter_fraction = c.filter_fraction;
  if (given("--rcond-threshold")) cfg.solve.rcond_threshold = c.rcond_threshold;
  if (given("--output-tolerance")) cfg.solve.output_tolerance = c.output_tolerance;
  if (given("--t-end")) cfg.t_end = c.t_end;
  if (given("--rtol")) cfg.integration.rtol = c.rtol;
  if (given("--atol")) cfg.integration.atol = c.atol;
  if (!reference_file.empty()) {
    cfg.reference_file = reference_file;
    cfg.reference = ReferenceSource::file;
  }

  const auto rows = run_sweep(cfg);
  with_output(cfg.out, [&](std::ostream& os) { write_csv(os, cfg, rows); });
  for (const auto& r : rows) {
    if (r.status != CellStatus::ok) {
      std::cerr << "cell h=" << r.h_target << " eps=" << r.eps1 << ": " << to_string(r.status) << ": " << r.message
                << '\n';
    }
  }
  return all_ok(rows) ? 0 : 2;
}

int cmd_reference(const Common& c) {
  ReferenceOptions opts;
  opts.quad_refine = c.quad_refine;
  opts.filter_fraction = c.filter_fraction;
  opts.drop_empty = c.drop_empty;
  opts.t_end = c.t_end;
  opts.integration = c.integration();
  opts.solve = c.solve();
  const auto rec =
      nearest_reference_run(parse_shape(c.shape), single("h", c.h), RegParam{single("eps", c.eps), 1.0}, opts);
  with_output(c.out, [&](std::ostream& os) { write_reference(os, rec); });
  if (!c.out.empty()) {
    std::cerr << rec.observable << " = " << format_real(rec.value) << " (" << rec.force_points << " force, "
              << rec.quad_points << " quadrature points)\n";
  }
  return 0;
}

int cmd_compare_rules(const Common& c, const std::vector<std::string>& rule_texts) {
  std::vector<ExtrapolationRule> rules;
  for (const auto& t : rule_texts) rules.push_back(ExtrapolationRule::parse(t));
  if (rules.empty()) rules = standard_rules();
  const auto table =
      compare_rules(parse_shape(c.shape), single("eps", c.eps), single("h", c.h), rules, 1.0, c.solve());
  with_output(c.out, [&](std::ostream& os) { write_rule_table(os, table); });
  for (const auto& r : table) {
    if (r.status != CellStatus::ok) return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularised stokeslet solvers with Richardson extrapolation"};
  app.require_subcommand(1);
  // -h is free for the spacing option; subcommands inherit this help flag
  app.set_help_flag("--help", "Print this help message and exit");

  Common grm_c, sed_c, sweep_c, ref_c, cmp_c;

  auto* grm = app.add_subcommand("grm", "grand resistance matrix of a body");
  add_solver_flags(grm, grm_c);
  grm->add_option("--eps", grm_c.eps, "eps (eps_base for nyr)");
  grm->add_option("--h", grm_c.h, "target spacing");
  grm->add_option("--out", grm_c.out, "output file");

  auto* sed = app.add_subcommand("sediment", "torus sedimenting under a unit -z force");
  sed_c.shape = "torus";
  sed_c.eps = "0.4";
  sed_c.h = "0.25";
  add_solver_flags(sed, sed_c);
  add_time_flags(sed, sed_c);
  sed->add_option("--eps", sed_c.eps, "eps (eps_base for nyr)");
  sed->add_option("--h", sed_c.h, "target spacing");
  sed->add_option("--out", sed_c.out, "trajectory file");

  std::string config_path, reference_file;
  auto* sweep = app.add_subcommand("sweep", "convergence sweep over eps and h, written as CSV");
  add_solver_flags(sweep, sweep_c);
  add_time_flags(sweep, sweep_c);
  sweep->add_option("--eps", sweep_c.eps, "comma-separated eps values");
  sweep->add_option("--h", sweep_c.h, "comma-separated target spacings");
  sweep->add_option("--out", sweep_c.out, "CSV file (stdout when omitted)");
  sweep->add_option("--config", config_path, "key = value config file; flags override it");
  sweep->add_option("--reference-file", reference_file, "reference record for torus_z");

  auto* ref = app.add_subcommand("reference", "nearest-neighbour reference run");
  ref_c.shape = "torus";
  ref_c.method = "nearest";
  ref_c.eps = "1e-6";
  ref_c.h = "0.25";
  add_solver_flags(ref, ref_c);
  add_time_flags(ref, ref_c);
  ref->add_option("--eps", ref_c.eps, "regularisation parameter");
  ref->add_option("--h", ref_c.h, "force spacing h_f");
  ref->add_option("--out", ref_c.out, "reference file");

  std::vector<std::string> rule_texts;
  auto* cmp = app.add_subcommand("compare-rules", "NyR error under several extrapolation rules");
  add_solver_flags(cmp, cmp_c, false);
  cmp->add_option("--eps", cmp_c.eps, "eps_base");
  cmp->add_option("--h", cmp_c.h, "target spacing");
  cmp->add_option("--out", cmp_c.out, "output file");
  cmp->add_option("--rule", rule_texts, "rule c1,c2,c3, repeatable (default: the five standard rules)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (grm->parsed()) return cmd_grm(grm_c);
    if (sed->parsed()) return cmd_sediment(sed_c);
    if (sweep->parsed()) return cmd_sweep(sweep_c, config_path, reference_file, sweep);
    if (ref->parsed()) return cmd_reference(ref_c);
    if (cmp->parsed()) return cmd_compare_rules(cmp_c, rule_texts);
  } catch (const NearSingularSystem& e) {
    std::cerr << "near-singular: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
