#pragma once

// Surface discretisations: points with combined quadrature weights
// w[n] dS(x[n]) for the unit sphere, prolate spheroid and torus, plus the
// coarse-force / fine-quadrature pairs used by the nearest-neighbour method.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "regstokes/errors.hpp"
#include "regstokes/kernels.hpp"
#include "regstokes/spatial.hpp"

namespace regstokes {

struct Sphere {};  // unit sphere centred at the origin

/// Prolate spheroid with semi-axis a along x and equatorial semi-axis c.
struct Spheroid {
  double a = 5.0;
  double c = 1.0;
};

/// Torus with axis along z, central radius R and tube radius r.
struct Torus {
  double R = 2.5;
  double r = 1.0;
};

using Shape = std::variant<Sphere, Spheroid, Torus>;

inline std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string shape_tag(const Shape& shape) {
  struct {
    std::string operator()(const Sphere&) const { return "sphere"; }
    std::string operator()(const Spheroid& s) const {
      return "spheroid(a=" + format_real(s.a) + ",c=" + format_real(s.c) + ")";
    }
    std::string operator()(const Torus& t) const {
      return "torus(R=" + format_real(t.R) + ",r=" + format_real(t.r) + ")";
    }
  } visitor;
  return std::visit(visitor, shape);
}

/// Inverse of shape_tag; parameters may be omitted ("torus", "spheroid(a=4)").
inline Shape parse_shape(const std::string& text) {
  const auto open = text.find('(');
  const std::string name = text.substr(0, open);
  std::map<std::string, double> args;
  if (open != std::string::npos) {
    if (text.back() != ')') throw InvalidParameter("malformed shape: " + text);
    std::istringstream is(text.substr(open + 1, text.size() - open - 2));
    std::string item;
    while (std::getline(is, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw InvalidParameter("malformed shape parameter: " + item);
      try {
        args[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
      } catch (const std::logic_error&) {
        throw InvalidParameter("malformed shape parameter: " + item);
      }
    }
  }
  auto take = [&](const char* key, double fallback) {
    const auto it = args.find(key);
    if (it == args.end()) return fallback;
    const double v = it->second;
    args.erase(it);
    return v;
  };
  Shape shape;
  if (name == "sphere") {
    shape = Sphere{};
  } else if (name == "spheroid") {
    const double a = take("a", 5.0);
    shape = Spheroid{a, take("c", 1.0)};
  } else if (name == "torus") {
    const double R = take("R", 2.5);
    shape = Torus{R, take("r", 1.0)};
  } else {
    throw InvalidParameter("unknown shape: " + text);
  }
  if (!args.empty()) throw InvalidParameter("unknown parameter '" + args.begin()->first + "' for " + name);
  return shape;
}

inline void validate(const Shape& shape) {
  if (const auto* s = std::get_if<Spheroid>(&shape)) {
    if (!(s->c > 0.0) || !(s->a > s->c)) throw InvalidGeometry("prolate spheroid requires a > c > 0");
  } else if (const auto* t = std::get_if<Torus>(&shape)) {
    if (!(t->r > 0.0) || !(t->R > t->r)) throw InvalidGeometry("torus requires R > r > 0 (non self-intersecting)");
  }
}

/// Analytic surface area.
inline double surface_area(const Shape& shape) {
  validate(shape);
  constexpr double pi = std::numbers::pi;
  if (std::holds_alternative<Sphere>(shape)) return 4.0 * pi;
  if (const auto* t = std::get_if<Torus>(&shape)) return 4.0 * pi * pi * t->R * t->r;
  const auto& s = std::get<Spheroid>(shape);
  const double e = std::sqrt(1.0 - (s.c * s.c) / (s.a * s.a));
  return 2.0 * pi * s.c * s.c * (1.0 + s.a / (s.c * e) * std::asin(e));
}

struct SurfaceDiscretisation {
  std::vector<Vec3> points;
  std::vector<double> weights;  // combined w[n] dS(x[n]), area units
  double h = 0.0;               // exact minimum pairwise spacing
  std::string shape_tag;

  std::size_t size() const { return points.size(); }
  std::size_t sdof() const { return 3 * points.size(); }

  double total_weight() const {
    double s = 0.0;
    for (const double w : weights) s += w;
    return s;
  }

  /// Area-weighted centroid.
  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (std::size_t i = 0; i < points.size(); ++i) c += weights[i] * points[i];
    return c / total_weight();
  }
};

struct DiscretisationLimits {
  std::size_t max_points = 400000;
};

namespace detail {

inline void check_budget(std::size_t n, const DiscretisationLimits& limits) {
  if (n > limits.max_points) {
    throw ResourceError("discretisation would need " + std::to_string(n) + " points, budget is " +
                        std::to_string(limits.max_points));
  }
}

inline void require_h(double h_target) {
  if (!(h_target > 0.0) || !std::isfinite(h_target)) throw InvalidParameter("target spacing must be positive");
}

// Solid angle subtended by [0,u] x [0,v] on the plane z = 1.
inline double face_solid_angle(double u, double v) { return std::atan(u * v / std::sqrt(1.0 + u * u + v * v)); }

inline std::size_t ceil_count(double x) { return static_cast<std::size_t>(std::ceil(x - 1e-12 * std::abs(x))); }

}  // namespace detail

/// Unit sphere from a (k+1) x (k+1) node grid on each face of [-1,1]^3,
/// projected radially. Shared edge/corner nodes are merged; every node carries
/// a quarter of the exact spherical area of each projected cell it touches.
inline SurfaceDiscretisation discretise_sphere_grid(int cells_per_edge, const DiscretisationLimits& limits = {}) {
  const int k = cells_per_edge;
  if (k < 1) throw InvalidParameter("cube-sphere grid needs at least one cell per face edge");
  detail::check_budget(6 * static_cast<std::size_t>(k) * k + 2, limits);

  SurfaceDiscretisation disc;
  disc.shape_tag = shape_tag(Sphere{});
  std::map<std::tuple<int, int, int>, std::size_t> index;
  auto coord = [k](int i) { return -1.0 + 2.0 * i / k; };

  for (int axis = 0; axis < 3; ++axis) {
    for (const int side : {1, -1}) {
      const int a1 = (axis + 1) % 3;
      const int a2 = (axis + 2) % 3;
      std::vector<std::size_t> node((k + 1) * (k + 1));
      for (int i = 0; i <= k; ++i) {
        for (int j = 0; j <= k; ++j) {
          std::array<int, 3> lattice{};
          lattice[axis] = side > 0 ? k : 0;
          lattice[a1] = i;
          lattice[a2] = j;
          const auto key = std::make_tuple(lattice[0], lattice[1], lattice[2]);
          auto it = index.find(key);
          if (it == index.end()) {
            const Vec3 cube(coord(lattice[0]), coord(lattice[1]), coord(lattice[2]));
            it = index.emplace(key, disc.points.size()).first;
            disc.points.push_back(cube.normalized());
            disc.weights.push_back(0.0);
          }
          node[i * (k + 1) + j] = it->second;
        }
      }
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
          const double u1 = coord(i), u2 = coord(i + 1), v1 = coord(j), v2 = coord(j + 1);
          const double area = detail::face_solid_angle(u2, v2) - detail::face_solid_angle(u1, v2) -
                              detail::face_solid_angle(u2, v1) + detail::face_solid_angle(u1, v1);
          for (const int di : {0, 1}) {
            for (const int dj : {0, 1}) disc.weights[node[(i + di) * (k + 1) + (j + dj)]] += 0.25 * area;
          }
        }
      }
    }
  }
  disc.h = min_spacing(disc.points);
  return disc;
}

/// Coarsest cube-sphere grid whose minimum spacing does not exceed h_target.
inline SurfaceDiscretisation discretise_sphere(double h_target, const DiscretisationLimits& limits = {}) {
  detail::require_h(h_target);
  if (!(h_target < 2.0)) throw InvalidParameter("sphere target spacing must be below 2");

  int lo = 0;  // largest k known to be too coarse
  int hi = 1;
  auto disc = discretise_sphere_grid(hi, limits);
  while (disc.h > h_target) {
    lo = hi;
    hi = std::max(hi + 1, static_cast<int>(std::ceil(hi * disc.h / h_target)));
    disc = discretise_sphere_grid(hi, limits);
  }
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    auto trial = discretise_sphere_grid(mid, limits);
    if (trial.h <= h_target) {
      hi = mid;
      disc = std::move(trial);
    } else {
      lo = mid;
    }
  }
  return disc;
}

/// Prolate spheroid aligned with x, rings uniform in the spheroidal angle nu.
/// The ring count makes the mean meridional spacing about h_target; ring i
/// carries ceil(2 pi c sin(nu_i) / h_target) points and the two end rings
/// collapse to single pole points weighted by their polar caps.
inline SurfaceDiscretisation discretise_spheroid(double a, double c, double h_target,
                                                 const DiscretisationLimits& limits = {}) {
  const Shape shape = Spheroid{a, c};
  validate(shape);
  detail::require_h(h_target);
  constexpr double pi = std::numbers::pi;
  const double alpha = std::sqrt(a * a - c * c);
  const double mu = std::acosh(a / alpha);
  const double k = a / alpha;

  // Meridian length from pole to pole, composite Simpson on a smooth integrand.
  const int steps = 2000;
  double meridian = 0.0;
  for (int s = 0; s <= steps; ++s) {
    const double nu = pi * s / steps;
    const double f = alpha * std::sqrt(std::cosh(mu) * std::cosh(mu) * std::sin(nu) * std::sin(nu) +
                                       std::sinh(mu) * std::sinh(mu) * std::cos(nu) * std::cos(nu));
    const double wgt = (s == 0 || s == steps) ? 1.0 : (s % 2 ? 4.0 : 2.0);
    meridian += wgt * f;
  }
  meridian *= pi / steps / 3.0;

  const std::size_t n = std::max<std::size_t>(3, detail::ceil_count(meridian / h_target) + 1);
  const double dnu = pi / static_cast<double>(n - 1);
  std::vector<std::size_t> ring_counts(n, 1);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != 0 && i != n - 1) {
      ring_counts[i] = std::max<std::size_t>(1, detail::ceil_count(2.0 * pi * c * std::sin(dnu * i) / h_target));
    }
    total += ring_counts[i];
  }
  detail::check_budget(total, limits);

  // Area between nu_lo and nu_hi, closed form in t = cos(nu).
  auto primitive = [k](double t) { return 0.5 * t * std::sqrt(k * k - t * t) + 0.5 * k * k * std::asin(t / k); };
  auto strip = [&](double nu_lo, double nu_hi) {
    return 2.0 * pi * c * alpha * (primitive(std::cos(nu_lo)) - primitive(std::cos(nu_hi)));
  };

  SurfaceDiscretisation disc;
  disc.shape_tag = shape_tag(shape);
  disc.points.reserve(total);
  disc.weights.reserve(total);
  for (std::size_t i = 0; i < n; ++i) {
    const double nu = dnu * static_cast<double>(i);
    const double lo = std::max(0.0, nu - 0.5 * dnu);
    const double hi = std::min(pi, nu + 0.5 * dnu);
    const double area = strip(lo, hi);
    if (i == 0 || i == n - 1) {
      disc.points.emplace_back(i == 0 ? a : -a, 0.0, 0.0);
      disc.weights.push_back(area);
      continue;
    }
    const std::size_t m = ring_counts[i];
    const double x = a * std::cos(nu);
    const double rho = c * std::sin(nu);
    for (std::size_t j = 0; j < m; ++j) {
      const double phi = 2.0 * pi * static_cast<double>(j) / static_cast<double>(m);
      disc.points.emplace_back(x, rho * std::cos(phi), rho * std::sin(phi));
      disc.weights.push_back(area / static_cast<double>(m));
    }
  }
  disc.h = min_spacing(disc.points);
  return disc;
}

/// Torus with axis along z: ceil(2 pi r / h) rings in the tube angle, ring i
/// carrying ceil(2 pi (R + r cos theta_i) / h) points.
inline SurfaceDiscretisation discretise_torus(double R, double r, double h_target,
                                              const DiscretisationLimits& limits = {}) {
  const Shape shape = Torus{R, r};
  validate(shape);
  detail::require_h(h_target);
  constexpr double pi = std::numbers::pi;
  const std::size_t n = std::max<std::size_t>(1, detail::ceil_count(2.0 * pi * r / h_target));
  const double dtheta = 2.0 * pi / static_cast<double>(n);

  std::vector<std::size_t> ring_counts(n);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = dtheta * static_cast<double>(i);
    ring_counts[i] = std::max<std::size_t>(1, detail::ceil_count(2.0 * pi * (R + r * std::cos(theta)) / h_target));
    total += ring_counts[i];
  }
  detail::check_budget(total, limits);

  SurfaceDiscretisation disc;
  disc.shape_tag = shape_tag(shape);
  disc.points.reserve(total);
  disc.weights.reserve(total);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = dtheta * static_cast<double>(i);
    const double area =
        2.0 * pi * r * (R * dtheta + r * (std::sin(theta + 0.5 * dtheta) - std::sin(theta - 0.5 * dtheta)));
    const std::size_t m = ring_counts[i];
    const double rho = R + r * std::cos(theta);
    const double z = r * std::sin(theta);
    for (std::size_t j = 0; j < m; ++j) {
      const double phi = 2.0 * pi * static_cast<double>(j) / static_cast<double>(m);
      disc.points.emplace_back(rho * std::cos(phi), rho * std::sin(phi), z);
      disc.weights.push_back(area / static_cast<double>(m));
    }
  }
  disc.h = min_spacing(disc.points);
  return disc;
}

inline SurfaceDiscretisation discretise(const Shape& shape, double h_target, const DiscretisationLimits& limits = {}) {
  validate(shape);
  if (std::holds_alternative<Sphere>(shape)) return discretise_sphere(h_target, limits);
  if (const auto* s = std::get_if<Spheroid>(&shape)) return discretise_spheroid(s->a, s->c, h_target, limits);
  const auto& t = std::get<Torus>(shape);
  return discretise_torus(t.R, t.r, h_target, limits);
}

/// Residual of the implicit surface equation; zero on the surface.
inline double surface_residual(const Shape& shape, const Vec3& p) {
  if (std::holds_alternative<Sphere>(shape)) return p.norm() - 1.0;
  if (const auto* s = std::get_if<Spheroid>(&shape)) {
    return p.x() * p.x() / (s->a * s->a) + (p.y() * p.y() + p.z() * p.z()) / (s->c * s->c) - 1.0;
  }
  const auto& t = std::get<Torus>(shape);
  const double rho = std::hypot(p.x(), p.y()) - t.R;
  return std::sqrt(rho * rho + p.z() * p.z()) - t.r;
}

/// Rigid image x0 + B p of a body-frame discretisation, B = [b1 b2 b3].
inline SurfaceDiscretisation rigidly_transformed(const SurfaceDiscretisation& body, const Vec3& x0, const Mat3& basis) {
  SurfaceDiscretisation out = body;
  for (auto& p : out.points) p = x0 + basis * p;
  return out;
}

/// Coarse force set and fine quadrature set for the nearest-neighbour method.
struct NearestPair {
  SurfaceDiscretisation force;
  SurfaceDiscretisation quad;
  double filter_distance = 0.0;
};

/// Builds the force set at h_f and the quadrature set at h_f / quad_refine,
/// removes quadrature points within filter_fraction * h_q of their nearest
/// force point and rescales quadrature weights back to the analytic area.
inline NearestPair make_nearest_pair(const Shape& shape, double h_f, double quad_refine = 4.0,
                                     double filter_fraction = 0.1, const DiscretisationLimits& limits = {}) {
  if (!(quad_refine >= 1.0)) throw InvalidParameter("quadrature refinement factor must be at least 1");
  if (!(filter_fraction >= 0.0)) throw InvalidParameter("filter fraction must be non-negative");
  const double h_q = h_f / quad_refine;

  NearestPair pair;
  pair.force = discretise(shape, h_f, limits);
  pair.quad = discretise(shape, h_q, limits);
  pair.filter_distance = filter_fraction * h_q;

  const NearestSearch search(pair.force.points);
  if (pair.filter_distance > 0.0) {
    SurfaceDiscretisation kept;
    kept.shape_tag = pair.quad.shape_tag;
    for (std::size_t q = 0; q < pair.quad.size(); ++q) {
      if (search.nearest_distance(pair.quad.points[q]) > pair.filter_distance) {
        kept.points.push_back(pair.quad.points[q]);
        kept.weights.push_back(pair.quad.weights[q]);
      }
    }
    if (kept.size() < 2) throw DegeneratePair("filtering removed the quadrature set");
    const double scale = surface_area(shape) / kept.total_weight();
    for (auto& w : kept.weights) w *= scale;
    kept.h = min_spacing(kept.points);
    pair.quad = std::move(kept);
  }

  std::vector<std::size_t> hits(pair.force.size(), 0);
  for (const auto& p : pair.quad.points) {
    for (const std::size_t n : search.nearest_all(p, 1e-12)) ++hits[n];
  }
  std::vector<std::size_t> empty;
  for (std::size_t n = 0; n < hits.size(); ++n) {
    if (hits[n] == 0) empty.push_back(n);
  }
  if (!empty.empty()) {
    throw DegeneratePair(std::to_string(empty.size()) + " force points have no quadrature points after filtering");
  }
  return pair;
}

/// Plain-text table: "<shape_tag> <h>" then one "x y z weight" row per point.
inline void write_discretisation(std::ostream& os, const SurfaceDiscretisation& disc) {
  const auto old = os.precision(17);
  os << disc.shape_tag << ' ' << disc.h << '\n';
  for (std::size_t i = 0; i < disc.size(); ++i) {
    const auto& p = disc.points[i];
    os << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << disc.weights[i] << '\n';
  }
  os.precision(old);
}

inline SurfaceDiscretisation read_discretisation(std::istream& is) {
  SurfaceDiscretisation disc;
  std::string header;
  if (!std::getline(is, header)) throw InvalidInput("discretisation file is empty");
  std::istringstream hs(header);
  if (!(hs >> disc.shape_tag >> disc.h)) throw InvalidInput("malformed discretisation header");
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double x, y, z, w;
    if (!(ls >> x >> y >> z >> w)) throw InvalidInput("malformed discretisation row: " + line);
    if (!(w > 0.0)) throw InvalidInput("discretisation weights must be positive");
    disc.points.emplace_back(x, y, z);
    disc.weights.push_back(w);
  }
  return disc;
}

}  // namespace regstokes
