#pragma once

// Uniform-grid bucketing used for exact closest-pair and nearest-neighbour
// queries. Every query returns exactly what the O(N^2) scan would: the grid
// only prunes candidates, distances are computed with the same expression.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "regstokes/errors.hpp"
#include "regstokes/kernels.hpp"

namespace regstokes {

inline double distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

namespace detail {

class PointGrid {
 public:
  PointGrid(std::span<const Vec3> points, double cell) : points_(points), cell_(cell) {
    lo_ = {std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::max(),
           std::numeric_limits<std::int64_t>::max()};
    hi_ = {std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::min(),
           std::numeric_limits<std::int64_t>::min()};
    cells_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto c = cell_of(points[i]);
      for (int d = 0; d < 3; ++d) {
        lo_[d] = std::min(lo_[d], c[d]);
        hi_[d] = std::max(hi_[d], c[d]);
      }
      cells_[key(c)].push_back(i);
    }
  }

  using Cell = std::array<std::int64_t, 3>;

  Cell cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }

  const std::vector<std::size_t>* bucket(const Cell& c) const {
    const auto it = cells_.find(key(c));
    return it == cells_.end() ? nullptr : &it->second;
  }

  double cell_size() const { return cell_; }

  // Largest Chebyshev cell distance from c to any occupied cell.
  std::int64_t max_ring(const Cell& c) const {
    std::int64_t r = 0;
    for (int d = 0; d < 3; ++d) {
      r = std::max({r, std::abs(c[d] - lo_[d]), std::abs(c[d] - hi_[d])});
    }
    return r;
  }

  // Visits every occupied cell at Chebyshev distance exactly `ring` from c.
  template <class Visit>
  void for_each_in_ring(const Cell& c, std::int64_t ring, Visit&& visit) const {
    for (std::int64_t i = -ring; i <= ring; ++i) {
      for (std::int64_t j = -ring; j <= ring; ++j) {
        const bool edge = std::abs(i) == ring || std::abs(j) == ring;
        const std::int64_t step = edge ? 1 : 2 * ring;
        for (std::int64_t k = -ring; k <= ring; k += (step == 0 ? 1 : step)) {
          if (const auto* b = bucket({c[0] + i, c[1] + j, c[2] + k})) {
            for (const std::size_t idx : *b) visit(idx);
          }
        }
      }
    }
  }

 private:
  static std::uint64_t key(const Cell& c) {
    // 21 bits per axis is ample for desk-scale surfaces.
    constexpr std::uint64_t mask = (1ull << 21) - 1;
    return ((static_cast<std::uint64_t>(c[0]) & mask) << 42) | ((static_cast<std::uint64_t>(c[1]) & mask) << 21) |
           (static_cast<std::uint64_t>(c[2]) & mask);
  }

  std::span<const Vec3> points_;
  double cell_;
  Cell lo_{};
  Cell hi_{};
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

inline double min_spacing_brute(std::span<const Vec3> points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::min(best, distance(points[i], points[j]));
    }
  }
  return best;
}

inline double typical_cell(std::span<const Vec3> points) {
  Vec3 lo = points[0];
  Vec3 hi = points[0];
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  const double cell = extent / std::cbrt(static_cast<double>(points.size()));
  return cell > 0.0 ? cell : 1.0;
}

}  // namespace detail

/// Exact minimum pairwise Euclidean distance.
inline double min_spacing(std::span<const Vec3> points) {
  if (points.size() < 2) throw InvalidInput("min_spacing needs at least two points");
  if (points.size() <= 5000) return detail::min_spacing_brute(points);

  // Nearest-neighbour distance of point 0 bounds the answer from above, so
  // every closer pair lies in adjacent cells of a grid with that cell size.
  double bound = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j < points.size(); ++j) bound = std::min(bound, distance(points[0], points[j]));
  if (bound == 0.0) return 0.0;

  detail::PointGrid grid(points, bound);
  double best = bound;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = grid.cell_of(points[i]);
    for (std::int64_t ring = 0; ring <= 1; ++ring) {
      grid.for_each_in_ring(c, ring, [&](std::size_t j) {
        if (j > i) best = std::min(best, distance(points[i], points[j]));
      });
    }
  }
  return best;
}

/// Nearest-neighbour query against a fixed point set, reporting ties.
class NearestSearch {
 public:
  explicit NearestSearch(std::span<const Vec3> targets)
      : targets_(targets), grid_(targets, targets.empty() ? 1.0 : detail::typical_cell(targets)) {}

  /// Distance to the closest target.
  double nearest_distance(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    visit_candidates(q, 0.0, [&](std::size_t, double d) { best = std::min(best, d); }, best);
    return best;
  }

  /// All targets whose distance is within (1 + rel_tol) of the minimum, sorted by index.
  std::vector<std::size_t> nearest_all(const Vec3& q, double rel_tol) const {
    std::vector<std::pair<double, std::size_t>> found;
    double best = std::numeric_limits<double>::infinity();
    visit_candidates(
        q, rel_tol,
        [&](std::size_t n, double d) {
          if (d < best) best = d;
          if (d <= best * (1.0 + rel_tol)) found.emplace_back(d, n);
        },
        best);
    std::vector<std::size_t> out;
    for (const auto& [d, n] : found) {
      if (d <= best * (1.0 + rel_tol)) out.push_back(n);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  template <class Sink>
  void visit_candidates(const Vec3& q, double rel_tol, Sink&& sink, const double& best) const {
    if (targets_.empty()) return;
    const auto c = grid_.cell_of(q);
    const std::int64_t last = grid_.max_ring(c);
    for (std::int64_t ring = 0; ring <= last; ++ring) {
      grid_.for_each_in_ring(c, ring, [&](std::size_t n) { sink(n, distance(q, targets_[n])); });
      // Anything in ring + 1 or beyond is at least ring * cell away.
      if (static_cast<double>(ring) * grid_.cell_size() > best * (1.0 + rel_tol)) break;
    }
  }

  std::span<const Vec3> targets_;
  detail::PointGrid grid_;
};

}  // namespace regstokes
