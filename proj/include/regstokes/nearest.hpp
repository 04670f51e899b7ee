#pragma once

// Nearest-neighbour two-grid discretisation: tractions live on a coarse force
// set, the kernel is integrated on a finer quadrature set, and the sparse map
// nu[q, n] assigns each quadrature point to its closest force point(s).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "regstokes/errors.hpp"
#include "regstokes/geometry.hpp"
#include "regstokes/kernels.hpp"
#include "regstokes/parallel.hpp"
#include "regstokes/spatial.hpp"
#include "regstokes/stokes_core.hpp"

namespace regstokes {

enum class EmptyPointPolicy { error, drop };

struct NearestMap {
  struct Entry {
    std::size_t force;  // index into the retained force points
    double fraction;
  };
  std::vector<std::vector<Entry>> rows;  // one row per quadrature point
  std::vector<std::size_t> kept;         // original index of each retained force point
  std::vector<std::size_t> dropped;      // original indices removed under EmptyPointPolicy::drop

  std::size_t n_force() const { return kept.size(); }
  std::size_t n_quad() const { return rows.size(); }
};

/// Assigns every quadrature point to all force points within (1 + tie_tolerance)
/// of its nearest distance, splitting unit weight equally among them.
inline NearestMap build_nearest_map(std::span<const Vec3> force, std::span<const Vec3> quad,
                                    double tie_tolerance = 1e-12,
                                    EmptyPointPolicy policy = EmptyPointPolicy::error) {
  if (force.empty() || quad.empty()) throw InvalidInput("nearest map needs nonempty force and quadrature sets");
  if (!(tie_tolerance >= 0.0)) throw InvalidParameter("tie tolerance must be non-negative");

  const NearestSearch search(force);
  std::vector<std::vector<std::size_t>> nearest(quad.size());
  std::vector<std::size_t> hits(force.size(), 0);
  for (std::size_t q = 0; q < quad.size(); ++q) {
    nearest[q] = search.nearest_all(quad[q], tie_tolerance);
    for (const std::size_t n : nearest[q]) ++hits[n];
  }

  NearestMap map;
  std::vector<std::size_t> compact(force.size(), 0);
  for (std::size_t n = 0; n < force.size(); ++n) {
    if (hits[n] == 0) {
      map.dropped.push_back(n);
    } else {
      compact[n] = map.kept.size();
      map.kept.push_back(n);
    }
  }
  if (!map.dropped.empty() && policy == EmptyPointPolicy::error) {
    std::ostringstream os;
    os << map.dropped.size() << " coarse force point(s) have no quadrature points (first index " << map.dropped.front()
       << "); refine the quadrature set or enable dropping";
    throw EmptyCoarsePoint(os.str(), map.dropped);
  }

  map.rows.resize(quad.size());
  for (std::size_t q = 0; q < quad.size(); ++q) {
    const double fraction = 1.0 / static_cast<double>(nearest[q].size());
    map.rows[q].reserve(nearest[q].size());
    for (const std::size_t n : nearest[q]) map.rows[q].push_back({compact[n], fraction});
  }
  return map;
}

/// Resistance-kind system with block (m, n) = (1/8 pi mu) sum_q S^eps(x[m], X[q]) nu[q, n] w[q],
/// collocated at the retained force points. W[n] = sum_q nu[q, n] w[q].
inline StokesSystem assemble_nearest(std::span<const Vec3> force, const SurfaceDiscretisation& quad,
                                     const NearestMap& map, const RegParam& params, const SolveOptions& opts = {}) {
  params.validate();
  if (map.n_quad() != quad.size()) throw InvalidInput("nearest map does not match the quadrature set");
  const std::size_t n = map.n_force();
  detail::check_matrix_budget(3 * n, opts);

  StokesSystem sys;
  sys.points.reserve(n);
  for (const std::size_t k : map.kept) sys.points.push_back(force[k]);
  sys.column_weights.assign(n, 0.0);
  for (std::size_t q = 0; q < quad.size(); ++q) {
    for (const auto& e : map.rows[q]) sys.column_weights[e.force] += e.fraction * quad.weights[q];
  }
  sys.epsilon = params.epsilon;
  sys.mu = params.mu;
  sys.kind = SystemKind::resistance;
  sys.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(3 * n), static_cast<Eigen::Index>(3 * n));

  const double eps2 = params.epsilon * params.epsilon;
  const double prefactor = 1.0 / (8.0 * std::numbers::pi * params.mu);
  const std::ptrdiff_t ld = sys.matrix.outerStride();
  double* data = sys.matrix.data();
  const auto& x = sys.points;

  // Tasks own disjoint row ranges; each entry sums over q in ascending order.
  constexpr std::size_t block = 32;
  const std::size_t tasks = (n + block - 1) / block;
  parallel_for(tasks, opts.workers, [&](std::size_t task) {
    const std::size_t begin = task * block;
    const std::size_t end = std::min(n, begin + block);
    for (std::size_t q = 0; q < quad.size(); ++q) {
      const Vec3& X = quad.points[q];
      for (const auto& e : map.rows[q]) {
        const double scale = e.fraction * quad.weights[q] * prefactor;
        double* col = data + 3 * e.force * ld;
        for (std::size_t m = begin; m < end; ++m) {
          detail::add_reg_stokeslet_block(x[m].x() - X.x(), x[m].y() - X.y(), x[m].z() - X.z(), eps2, scale,
                                          col + 3 * m, ld);
        }
      }
    }
  });
  return sys;
}

inline StokesSystem assemble_nearest(const NearestPair& pair, const RegParam& params, const SolveOptions& opts = {},
                                     double tie_tolerance = 1e-12,
                                     EmptyPointPolicy policy = EmptyPointPolicy::error) {
  const auto map = build_nearest_map(pair.force.points, pair.quad.points, tie_tolerance, policy);
  return assemble_nearest(pair.force.points, pair.quad, map, params, opts);
}

/// Smallest distance between a force point and a quadrature point (the
/// disjoint-case delta). Zero when the sets share points.
inline double min_force_quad_distance(const NearestPair& pair) {
  const NearestSearch search(pair.force.points);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pair.quad.points) best = std::min(best, search.nearest_distance(p));
  return best;
}

/// 64-bit FNV-1a over the raw bytes of points and weights.
inline std::uint64_t checksum(const SurfaceDiscretisation& disc, std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  auto mix = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (const unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  };
  for (std::size_t i = 0; i < disc.size(); ++i) {
    mix(disc.points[i].x());
    mix(disc.points[i].y());
    mix(disc.points[i].z());
    mix(disc.weights[i]);
  }
  return h;
}

inline std::uint64_t checksum(const NearestPair& pair) { return checksum(pair.quad, checksum(pair.force)); }

/// Persisted ground-truth observable from a nearest-neighbour run.
struct ReferenceRecord {
  std::string shape_tag;
  double h_f = 0.0;  // achieved force spacing
  double h_q = 0.0;  // achieved quadrature spacing
  double epsilon = 0.0;
  std::size_t force_points = 0;
  std::size_t quad_points = 0;
  std::string observable;
  double value = 0.0;
  std::string checksum;  // hex FNV-1a of the discretisation pair
};

inline void write_reference(std::ostream& os, const ReferenceRecord& rec) {
  const auto old = os.precision(17);
  os << "shape = " << rec.shape_tag << '\n'
     << "h_f = " << rec.h_f << '\n'
     << "h_q = " << rec.h_q << '\n'
     << "epsilon = " << rec.epsilon << '\n'
     << "force_points = " << rec.force_points << '\n'
     << "quad_points = " << rec.quad_points << '\n'
     << "observable = " << rec.observable << '\n'
     << "value = " << rec.value << '\n'
     << "checksum = " << rec.checksum << '\n';
  os.precision(old);
}

inline ReferenceRecord read_reference(std::istream& is) {
  ReferenceRecord rec;
  std::string line;
  bool has_value = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput("malformed reference line: " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "shape") rec.shape_tag = val;
    else if (key == "h_f") rec.h_f = std::stod(val);
    else if (key == "h_q") rec.h_q = std::stod(val);
    else if (key == "epsilon") rec.epsilon = std::stod(val);
    else if (key == "force_points") rec.force_points = std::stoull(val);
    else if (key == "quad_points") rec.quad_points = std::stoull(val);
    else if (key == "observable") rec.observable = val;
    else if (key == "value") { rec.value = std::stod(val); has_value = true; }
    else if (key == "checksum") rec.checksum = val;
  }
  if (!has_value) throw InvalidInput("reference record has no value");
  return rec;
}

}  // namespace regstokes
