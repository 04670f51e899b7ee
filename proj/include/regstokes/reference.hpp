#pragma once

// Ground-truth runs with the nearest-neighbour method on a disjoint
// force / quadrature pair.

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>

#include "regstokes/dynamics.hpp"
#include "regstokes/nearest.hpp"

namespace regstokes {

struct ReferenceOptions {
  double quad_refine = 4.0;
  double filter_fraction = 0.1;
  double tie_tolerance = 1e-12;
  bool drop_empty = false;
  double t_end = 98.7;
  IntegrationOptions integration;
  SolveOptions solve;
};

inline std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Torus: observable torus_z, the height after sedimenting to t_end under a
/// unit -z force. Sphere and spheroid: grm_norm, the spectral norm of the
/// grand resistance matrix about the centroid.
inline ReferenceRecord nearest_reference_run(const Shape& shape, double h_f, const RegParam& params,
                                             const ReferenceOptions& opts = {}) {
  params.validate();
  NearestPair pair = make_nearest_pair(shape, h_f, opts.quad_refine, opts.filter_fraction);

  ReferenceRecord rec;
  rec.shape_tag = shape_tag(shape);
  rec.h_f = pair.force.h;
  rec.h_q = pair.quad.h;
  rec.epsilon = params.epsilon;
  rec.force_points = pair.force.size();
  rec.quad_points = pair.quad.size();
  rec.checksum = hex(checksum(pair));

  if (std::holds_alternative<Torus>(shape)) {
    MethodConfig cfg;
    cfg.method = Method::nearest;
    cfg.epsilon = params.epsilon;
    cfg.mu = params.mu;
    cfg.tie_tolerance = opts.tie_tolerance;
    cfg.drop_empty = opts.drop_empty;
    cfg.solve = opts.solve;
    const BodyMobility body(std::move(pair), cfg, Vec3(0.0, 0.0, -1.0), Vec3::Zero());
    rec.force_points = body.force_points();
    rec.observable = "torus_z";
    rec.value = integrate(body, RigidBodyState{}, opts.t_end, opts.integration).back().state.x0.z();
  } else {
    const auto map = build_nearest_map(pair.force.points, pair.quad.points, opts.tie_tolerance,
                                       opts.drop_empty ? EmptyPointPolicy::drop : EmptyPointPolicy::error);
    StokesSystem sys = assemble_nearest(pair.force.points, pair.quad, map, params, opts.solve);
    rec.force_points = map.n_force();
    // Area centroid of the retained force set.
    Vec3 x0 = Vec3::Zero();
    double total = 0.0;
    for (std::size_t n = 0; n < sys.n_points(); ++n) {
      x0 += sys.column_weights[n] * sys.points[n];
      total += sys.column_weights[n];
    }
    x0 /= total;
    const auto A = ResistanceSolver(std::move(sys), opts.solve).grand_resistance(x0);
    rec.observable = "grm_norm";
    rec.value = Eigen::JacobiSVD<Mat6>(A.m).singularValues()(0);
  }
  return rec;
}

}  // namespace regstokes
