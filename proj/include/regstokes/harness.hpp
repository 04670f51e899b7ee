#pragma once

// Convergence sweeps over (eps, h) for one shape and method, with CSV output,
// error-dip detection and extrapolation-rule comparison.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "regstokes/dynamics.hpp"
#include "regstokes/errors.hpp"
#include "regstokes/geometry.hpp"
#include "regstokes/nearest.hpp"
#include "regstokes/richardson.hpp"
#include "regstokes/stokes_core.hpp"

namespace regstokes {

enum class Observable { grm_error, torus_z };
enum class ReferenceSource { analytic, file, none };
enum class CellStatus { ok, near_singular, failed };

inline std::string to_string(Observable o) { return o == Observable::grm_error ? "grm_error" : "torus_z"; }

inline std::string to_string(ReferenceSource r) {
  switch (r) {
    case ReferenceSource::analytic: return "analytic";
    case ReferenceSource::file: return "file";
    case ReferenceSource::none: return "none";
  }
  return "?";
}

inline std::string to_string(CellStatus s) {
  switch (s) {
    case CellStatus::ok: return "ok";
    case CellStatus::near_singular: return "near_singular";
    case CellStatus::failed: return "failed";
  }
  return "?";
}

inline Observable default_observable(const Shape& shape) {
  return std::holds_alternative<Torus>(shape) ? Observable::torus_z : Observable::grm_error;
}

inline ReferenceSource default_reference(Observable o) {
  return o == Observable::grm_error ? ReferenceSource::analytic : ReferenceSource::none;
}

struct SweepConfig {
  Shape shape = Sphere{};
  Method method = Method::ny;
  std::vector<double> eps;  // eps, or eps_base for nyr
  std::vector<double> h;    // target spacings (force spacing for nearest)
  ExtrapolationRule rule;
  // torus_z with nyr: extrapolate U and Omega in every evaluation (false), or
  // integrate three Ny trajectories and extrapolate z(t_end) afterwards (true).
  bool nyr_post_hoc = false;
  Observable observable = Observable::grm_error;
  ReferenceSource reference = ReferenceSource::analytic;
  std::string reference_file;
  std::optional<double> reference_value;  // filled from reference_file
  std::string out;
  unsigned workers = 1;
  double mu = 1.0;
  double t_end = 98.7;
  IntegrationOptions integration;
  double quad_refine = 4.0;
  double filter_fraction = 0.1;
  double tie_tolerance = 1e-12;
  bool drop_empty = false;
  SolveOptions solve;

  void validate() const {
    validate_shape();
    if (eps.empty()) throw InvalidInput("sweep needs at least one eps value");
    if (h.empty()) throw InvalidInput("sweep needs at least one h value");
    for (const double e : eps) RegParam{e, mu}.validate();
    for (const double v : h) {
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidParameter("h values must be positive");
    }
    if (method == Method::nyr) rule.validate();
    if (observable == Observable::grm_error && std::holds_alternative<Torus>(shape)) {
      throw InvalidInput("grm_error has no analytic reference for the torus");
    }
    if (observable == Observable::torus_z && !std::holds_alternative<Torus>(shape)) {
      throw InvalidInput("torus_z needs the torus shape");
    }
    if (reference == ReferenceSource::analytic && observable != Observable::grm_error) {
      throw InvalidInput("analytic references exist only for grm_error");
    }
    if (reference == ReferenceSource::file && reference_file.empty() && !reference_value) {
      throw InvalidInput("reference source 'file' needs a reference file");
    }
    if (!(t_end >= 0.0)) throw InvalidParameter("t_end must be non-negative");
    if (!(integration.rtol > 0.0) || !(integration.atol > 0.0)) throw InvalidParameter("rtol and atol must be positive");
  }

 private:
  void validate_shape() const { regstokes::validate(shape); }
};

struct ResultRow {
  std::string shape;
  std::string method;
  double eps1 = 0.0;
  std::optional<double> eps2, eps3;  // nyr only
  double h_target = 0.0;
  double h = 0.0;  // achieved minimum spacing
  std::size_t sdof = 0;
  std::optional<std::size_t> quad_points;  // nearest only
  std::string observable;
  std::optional<double> value, reference, rel_error;
  double wall_seconds = 0.0;
  CellStatus status = CellStatus::ok;
  std::string message;
};

// ---------------------------------------------------------------------------
// Config serialisation: one "key = value" per line in files, "key=value; ..."
// on the CSV metadata line.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return x;
  } catch (const std::logic_error&) {
  }
  throw InvalidParameter("bad number for " + key + ": '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_real(key, item));
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw InvalidParameter("bad boolean for " + key + ": '" + v + "'");
}

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_real(v[i]);
  return s;
}

}  // namespace detail

inline void apply_config_entry(SweepConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string v = detail::trim(raw);
  if (key == "shape") cfg.shape = parse_shape(v);
  else if (key == "method") cfg.method = parse_method(v);
  else if (key == "eps") cfg.eps = detail::parse_list(key, v);
  else if (key == "h") cfg.h = detail::parse_list(key, v);
  else if (key == "rule") cfg.rule = ExtrapolationRule::parse(v);
  else if (key == "nyr_mode") {
    if (v == "per_step") cfg.nyr_post_hoc = false;
    else if (v == "post_hoc") cfg.nyr_post_hoc = true;
    else throw InvalidParameter("unknown nyr_mode: " + v);
  }
  else if (key == "observable") {
    if (v == "grm_error") cfg.observable = Observable::grm_error;
    else if (v == "torus_z") cfg.observable = Observable::torus_z;
    else throw InvalidParameter("unknown observable: " + v);
  } else if (key == "reference") {
    if (v == "analytic") cfg.reference = ReferenceSource::analytic;
    else if (v == "file") cfg.reference = ReferenceSource::file;
    else if (v == "none") cfg.reference = ReferenceSource::none;
    else throw InvalidParameter("unknown reference source: " + v);
  } else if (key == "reference_file") cfg.reference_file = v;
  else if (key == "reference_value") cfg.reference_value = detail::parse_real(key, v);
  else if (key == "out") cfg.out = v;
  else if (key == "workers") cfg.workers = static_cast<unsigned>(detail::parse_real(key, v));
  else if (key == "mu") cfg.mu = detail::parse_real(key, v);
  else if (key == "t_end") cfg.t_end = detail::parse_real(key, v);
  else if (key == "rtol") cfg.integration.rtol = detail::parse_real(key, v);
  else if (key == "atol") cfg.integration.atol = detail::parse_real(key, v);
  else if (key == "quad_refine") cfg.quad_refine = detail::parse_real(key, v);
  else if (key == "filter_fraction") cfg.filter_fraction = detail::parse_real(key, v);
  else if (key == "tie_tolerance") cfg.tie_tolerance = detail::parse_real(key, v);
  else if (key == "drop_empty") cfg.drop_empty = detail::parse_bool(key, v);
  else if (key == "rcond_threshold") cfg.solve.rcond_threshold = detail::parse_real(key, v);
  else if (key == "output_tolerance") cfg.solve.output_tolerance = detail::parse_real(key, v);
  else throw InvalidParameter("unknown config key: " + key);
}

/// Reads "key = value" lines; '#' starts a comment. Observable and reference
/// default from the shape when not given.
inline SweepConfig read_config(std::istream& is, SweepConfig cfg = {}) {
  std::string line;
  bool observable_set = false, reference_set = false;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput("malformed config line: " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    apply_config_entry(cfg, key, line.substr(eq + 1));
    observable_set |= key == "observable";
    reference_set |= key == "reference";
  }
  if (!observable_set) cfg.observable = default_observable(cfg.shape);
  if (!reference_set) cfg.reference = cfg.reference_file.empty() ? default_reference(cfg.observable) : ReferenceSource::file;
  return cfg;
}

inline std::vector<std::pair<std::string, std::string>> config_entries(const SweepConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> e{
      {"shape", shape_tag(cfg.shape)},
      {"method", to_string(cfg.method)},
      {"eps", detail::join(cfg.eps)},
      {"h", detail::join(cfg.h)},
      {"rule", cfg.rule.to_string()},
      {"nyr_mode", cfg.nyr_post_hoc ? "post_hoc" : "per_step"},
      {"observable", to_string(cfg.observable)},
      {"reference", to_string(cfg.reference)},
  };
  if (!cfg.reference_file.empty()) e.emplace_back("reference_file", cfg.reference_file);
  if (cfg.reference_value) e.emplace_back("reference_value", format_real(*cfg.reference_value));
  e.insert(e.end(), {{"workers", std::to_string(cfg.workers)},
                     {"mu", format_real(cfg.mu)},
                     {"t_end", format_real(cfg.t_end)},
                     {"rtol", format_real(cfg.integration.rtol)},
                     {"atol", format_real(cfg.integration.atol)},
                     {"quad_refine", format_real(cfg.quad_refine)},
                     {"filter_fraction", format_real(cfg.filter_fraction)},
                     {"tie_tolerance", format_real(cfg.tie_tolerance)},
                     {"drop_empty", cfg.drop_empty ? "true" : "false"},
                     {"rcond_threshold", format_real(cfg.solve.rcond_threshold)},
                     {"output_tolerance", format_real(cfg.solve.output_tolerance)}});
  return e;
}

inline void write_config(std::ostream& os, const SweepConfig& cfg) {
  for (const auto& [k, v] : config_entries(cfg)) os << k << " = " << v << '\n';
}

/// Loads reference_value from reference_file when the source is a file.
inline void resolve_reference(SweepConfig& cfg) {
  if (cfg.reference != ReferenceSource::file || cfg.reference_file.empty()) return;
  std::ifstream in(cfg.reference_file);
  if (!in) throw InvalidInput("cannot open reference file " + cfg.reference_file);
  const ReferenceRecord rec = read_reference(in);
  if (rec.observable != to_string(cfg.observable)) {
    throw InvalidInput("reference file holds observable '" + rec.observable + "', sweep needs '" +
                       to_string(cfg.observable) + "'");
  }
  if (rec.shape_tag != shape_tag(cfg.shape)) {
    throw InvalidInput("reference file is for " + rec.shape_tag + ", sweep is for " + shape_tag(cfg.shape));
  }
  cfg.reference_value = rec.value;
}

// ---------------------------------------------------------------------------

namespace detail {

struct PreparedH {
  double target = 0.0;
  std::optional<SurfaceDiscretisation> disc;
  std::optional<NearestPair> pair;
  std::string error;
};

inline GrandResistanceMatrix analytic_grm(const Shape& shape, double mu) {
  if (std::holds_alternative<Sphere>(shape)) return analytic_sphere_grm(1.0, mu);
  if (const auto* s = std::get_if<Spheroid>(&shape)) return analytic_spheroid_grm(s->a, s->c, mu);
  throw InvalidInput("no analytic grand resistance matrix for " + shape_tag(shape));
}

inline double spectral_norm(const Mat6& m) { return Eigen::JacobiSVD<Mat6>(m).singularValues()(0); }

inline MethodConfig method_config(const SweepConfig& cfg, double eps, const SolveOptions& solve) {
  MethodConfig m;
  m.method = cfg.method;
  m.epsilon = eps;
  m.rule = cfg.rule;
  m.mu = cfg.mu;
  m.quad_refine = cfg.quad_refine;
  m.filter_fraction = cfg.filter_fraction;
  m.tie_tolerance = cfg.tie_tolerance;
  m.drop_empty = cfg.drop_empty;
  m.solve = solve;
  return m;
}

inline GrandResistanceMatrix cell_grm(const SweepConfig& cfg, const PreparedH& prep, double eps,
                                      const SolveOptions& solve, std::size_t& sdof) {
  switch (cfg.method) {
    case Method::ny:
      return grand_resistance(*prep.disc, RegParam{eps, cfg.mu}, prep.disc->centroid(), solve);
    case Method::nyr:
      return nyr_grand_resistance(*prep.disc, eps, cfg.rule, cfg.mu, solve);
    case Method::nearest: {
      const auto map = build_nearest_map(prep.pair->force.points, prep.pair->quad.points, cfg.tie_tolerance,
                                         cfg.drop_empty ? EmptyPointPolicy::drop : EmptyPointPolicy::error);
      StokesSystem sys = assemble_nearest(prep.pair->force.points, prep.pair->quad, map, RegParam{eps, cfg.mu}, solve);
      sdof = 3 * sys.n_points();
      Vec3 x0 = Vec3::Zero();
      double total = 0.0;
      for (std::size_t n = 0; n < sys.n_points(); ++n) {
        x0 += sys.column_weights[n] * sys.points[n];
        total += sys.column_weights[n];
      }
      return ResistanceSolver(std::move(sys), solve).grand_resistance(x0 / total);
    }
  }
  throw InvalidInput("unknown method");
}

inline ResultRow run_cell(const SweepConfig& cfg, const PreparedH& prep, double eps, const SolveOptions& solve) {
  ResultRow row;
  row.shape = shape_tag(cfg.shape);
  row.method = to_string(cfg.method);
  row.observable = to_string(cfg.observable);
  row.h_target = prep.target;
  if (cfg.method == Method::nyr) {
    const Triple e = cfg.rule.epsilons(eps);
    row.eps1 = e[0];
    row.eps2 = e[1];
    row.eps3 = e[2];
  } else {
    row.eps1 = eps;
  }
  if (prep.disc) {
    row.h = prep.disc->h;
    row.sdof = prep.disc->sdof();
  } else if (prep.pair) {
    row.h = prep.pair->force.h;
    row.sdof = prep.pair->force.sdof();
    row.quad_points = prep.pair->quad.size();
  }
  if (!prep.error.empty()) {
    row.status = CellStatus::failed;
    row.message = prep.error;
    return row;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    if (cfg.observable == Observable::grm_error) {
      const auto A = cell_grm(cfg, prep, eps, solve, row.sdof);
      const auto ref = analytic_grm(cfg.shape, cfg.mu);
      row.value = spectral_norm(A.m);
      row.reference = spectral_norm(ref.m);
      row.rel_error = relative_error_2norm(A, ref);
    } else {
      const Vec3 F(0.0, 0.0, -1.0);
      auto z_end = [&](const MethodConfig& mc) {
        const auto body = prep.pair ? BodyMobility(*prep.pair, mc, F, Vec3::Zero())
                                    : BodyMobility(*prep.disc, mc, F, Vec3::Zero());
        row.sdof = 3 * body.force_points();
        return integrate(body, RigidBodyState{}, cfg.t_end, cfg.integration).back().state.x0.z();
      };
      MethodConfig mc = method_config(cfg, eps, solve);
      if (cfg.method == Method::nyr && cfg.nyr_post_hoc) {
        const Triple e = cfg.rule.epsilons(eps);
        Triple z{};
        mc.method = Method::ny;
        for (int i = 0; i < 3; ++i) {
          mc.epsilon = e[i];
          z[i] = z_end(mc);
        }
        row.value = extrapolate(z, e);
      } else {
        row.value = z_end(mc);
      }
      if (cfg.reference_value) {
        row.reference = *cfg.reference_value;
        row.rel_error = std::abs(*row.value - *row.reference) / std::abs(*row.reference);
      }
    }
  } catch (const NearSingularSystem& e) {
    row.status = CellStatus::near_singular;
    row.message = e.what();
  } catch (const IntegrationFailure& e) {
    row.status = e.near_singular() ? CellStatus::near_singular : CellStatus::failed;
    row.message = e.what();
  } catch (const std::exception& e) {
    row.status = CellStatus::failed;
    row.message = e.what();
  }
  if (row.status != CellStatus::ok) row.value = row.reference = row.rel_error = std::nullopt;
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

}  // namespace detail

/// One row per (h, eps), ordered by target h then eps, both ascending.
/// Failing cells are recorded in their status and never stop the sweep.
inline std::vector<ResultRow> run_sweep(SweepConfig cfg) {
  cfg.validate();
  resolve_reference(cfg);

  std::vector<double> hs = cfg.h, es = cfg.eps;
  std::sort(hs.begin(), hs.end());
  hs.erase(std::unique(hs.begin(), hs.end()), hs.end());
  std::sort(es.begin(), es.end());
  es.erase(std::unique(es.begin(), es.end()), es.end());

  const unsigned workers = resolve_workers(cfg.workers);
  SolveOptions solve = cfg.solve;
  if (workers > 1) solve.workers = 1;

  std::vector<detail::PreparedH> prepared(hs.size());
  parallel_for(hs.size(), workers, [&](std::size_t i) {
    auto& p = prepared[i];
    p.target = hs[i];
    try {
      if (cfg.method == Method::nearest) {
        p.pair = make_nearest_pair(cfg.shape, hs[i], cfg.quad_refine, cfg.filter_fraction);
      } else {
        p.disc = discretise(cfg.shape, hs[i]);
      }
    } catch (const std::exception& e) {
      p.error = e.what();
    }
  });

  std::vector<ResultRow> rows(hs.size() * es.size());
  parallel_for(rows.size(), workers, [&](std::size_t k) {
    rows[k] = detail::run_cell(cfg, prepared[k / es.size()], es[k % es.size()], solve);
  });
  return rows;
}

inline bool all_ok(const std::vector<ResultRow>& rows) {
  return std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.status == CellStatus::ok; });
}

// ---------------------------------------------------------------------------
// CSV

inline const char* csv_header() {
  return "shape,method,eps1,eps2,eps3,h_target,h,sdof,quad_points,observable,value,reference,rel_error,"
         "wall_seconds,status,message";
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' || c == '\r' ? ' ' : c;
  }
  return out + '"';
}

inline std::string opt_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string{}; }

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::optional<double> read_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_real("csv field", s);
}

}  // namespace detail

inline void write_csv(std::ostream& os, const SweepConfig& cfg, const std::vector<ResultRow>& rows) {
  os << "# config:";
  bool first = true;
  for (const auto& [k, v] : config_entries(cfg)) {
    os << (first ? " " : "; ") << k << '=' << v;
    first = false;
  }
  os << '\n' << csv_header() << '\n';
  for (const auto& r : rows) {
    os << detail::csv_field(r.shape) << ',' << r.method << ',' << format_real(r.eps1) << ','
       << detail::opt_real(r.eps2) << ',' << detail::opt_real(r.eps3) << ',' << format_real(r.h_target) << ','
       << format_real(r.h) << ',' << r.sdof << ',' << (r.quad_points ? std::to_string(*r.quad_points) : "") << ','
       << r.observable << ',' << detail::opt_real(r.value) << ',' << detail::opt_real(r.reference) << ','
       << detail::opt_real(r.rel_error) << ',' << format_real(r.wall_seconds) << ',' << to_string(r.status) << ','
       << detail::csv_field(r.message) << '\n';
  }
}

struct SweepTable {
  std::string config_line;  // metadata without the leading "# config: "
  std::vector<ResultRow> rows;
};

inline SweepTable read_csv(std::istream& is) {
  SweepTable t;
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# config:";
      if (line.rfind(tag, 0) == 0) t.config_line = detail::trim(line.substr(tag.size()));
      continue;
    }
    if (!header) {
      if (line != csv_header()) throw InvalidInput("unexpected CSV header: " + line);
      header = true;
      continue;
    }
    const auto f = detail::split_csv(line);
    if (f.size() != 16) throw InvalidInput("CSV row has " + std::to_string(f.size()) + " fields: " + line);
    ResultRow r;
    r.shape = f[0];
    r.method = f[1];
    r.eps1 = detail::parse_real("eps1", f[2]);
    r.eps2 = detail::read_opt(f[3]);
    r.eps3 = detail::read_opt(f[4]);
    r.h_target = detail::parse_real("h_target", f[5]);
    r.h = detail::parse_real("h", f[6]);
    r.sdof = std::stoull(f[7]);
    if (!f[8].empty()) r.quad_points = std::stoull(f[8]);
    r.observable = f[9];
    r.value = detail::read_opt(f[10]);
    r.reference = detail::read_opt(f[11]);
    r.rel_error = detail::read_opt(f[12]);
    r.wall_seconds = detail::parse_real("wall_seconds", f[13]);
    if (f[14] == "ok") r.status = CellStatus::ok;
    else if (f[14] == "near_singular") r.status = CellStatus::near_singular;
    else if (f[14] == "failed") r.status = CellStatus::failed;
    else throw InvalidInput("unknown status: " + f[14]);
    r.message = f[15];
    t.rows.push_back(std::move(r));
  }
  if (!header) throw InvalidInput("CSV has no header");
  return t;
}

// ---------------------------------------------------------------------------

struct ErrorDip {
  double h_dip = 0.0;
  double min_error = 0.0;
  double plateau_error = 0.0;  // mean of the errors at the two smallest h
  bool monotone = false;
};

/// Minimum of relative error over h for rows at one eps. Rows without an
/// error are ignored; at least four distinct h are required.
inline ErrorDip detect_error_dip(const std::vector<ResultRow>& rows) {
  std::map<double, double> by_h;
  for (const auto& r : rows) {
    if (r.status != CellStatus::ok || !r.rel_error) continue;
    if (!by_h.emplace(r.h, *r.rel_error).second) throw InvalidInput("rows repeat h; pass one eps at a time");
  }
  if (by_h.size() < 4) throw InvalidInput("error dip detection needs at least four rows with distinct h");

  ErrorDip out;
  out.min_error = std::numeric_limits<double>::infinity();
  bool up = true, down = true;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (const auto& [h, err] : by_h) {
    if (err < out.min_error) {
      out.min_error = err;
      out.h_dip = h;
    }
    if (!std::isnan(prev)) {
      up &= err >= prev;
      down &= err <= prev;
    }
    prev = err;
  }
  auto it = by_h.begin();
  const double e0 = (it++)->second;
  out.plateau_error = 0.5 * (e0 + it->second);
  out.monotone = up || down;
  return out;
}

struct RuleComparison {
  ExtrapolationRule rule;
  Triple eps{};
  std::optional<double> error;
  CellStatus status = CellStatus::ok;
  std::string message;
};

/// NyR grand-resistance error against the analytic matrix for each rule on one discretisation.
inline std::vector<RuleComparison> compare_rules(const Shape& shape, double eps_base, double h,
                                                 const std::vector<ExtrapolationRule>& rules, double mu = 1.0,
                                                 const SolveOptions& opts = {}) {
  if (rules.empty()) throw InvalidInput("no rules to compare");
  for (const auto& r : rules) r.validate();
  const auto ref = detail::analytic_grm(shape, mu);
  const auto disc = discretise(shape, h);
  std::vector<RuleComparison> out;
  for (const auto& rule : rules) {
    RuleComparison c;
    c.rule = rule;
    c.eps = rule.epsilons(eps_base);
    try {
      c.error = relative_error_2norm(nyr_grand_resistance(disc, eps_base, rule, mu, opts), ref);
    } catch (const NearSingularSystem& e) {
      c.status = CellStatus::near_singular;
      c.message = e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

inline void write_rule_table(std::ostream& os, const std::vector<RuleComparison>& table) {
  os << "rule,eps1,eps2,eps3,rel_error,status\n";
  for (const auto& c : table) {
    os << detail::csv_field(c.rule.to_string()) << ',' << format_real(c.eps[0]) << ',' << format_real(c.eps[1]) << ','
       << format_real(c.eps[2]) << ',' << detail::opt_real(c.error) << ',' << to_string(c.status) << '\n';
  }
}

}  // namespace regstokes
