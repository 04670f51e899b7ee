#pragma once

// Singular and regularized stokeslet kernels with the classical algebraic
// blob phi_eps(x) = 15 eps^4 / (8 pi (|x|^2 + eps^2)^(7/2)).
//
// All kernels here omit the 1/(8 pi mu) prefactor; callers apply it.

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "regstokes/errors.hpp"

namespace regstokes {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Regularisation width and viscosity. The experiments are dimensionless, so mu defaults to 1.
struct RegParam {
  double epsilon = 0.1;
  double mu = 1.0;

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw InvalidParameter("regularisation parameter epsilon must be positive and finite");
    }
    if (!(mu > 0.0) || !std::isfinite(mu)) {
      throw InvalidParameter("viscosity mu must be positive and finite");
    }
  }
};

namespace detail {

inline void require_positive_epsilon(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InvalidParameter("regularisation parameter epsilon must be positive and finite");
  }
}

// Writes S^eps for separation (dx, dy, dz) into the 3x3 block at out, scaled by
// `scale`. `stride` is the column stride of the destination (column major).
// Shared by every assembly path so that all of them produce bit-identical entries.
inline void reg_stokeslet_block(double dx, double dy, double dz, double eps2, double scale, double* out,
                                std::ptrdiff_t stride) {
  const double r2 = dx * dx + dy * dy + dz * dz;
  const double d2 = r2 + eps2;
  const double inv = scale / (d2 * std::sqrt(d2));
  const double diag = (r2 + 2.0 * eps2) * inv;
  const double xy = dx * dy * inv;
  const double xz = dx * dz * inv;
  const double yz = dy * dz * inv;
  out[0] = diag + dx * dx * inv;
  out[1] = xy;
  out[2] = xz;
  out[stride] = xy;
  out[stride + 1] = diag + dy * dy * inv;
  out[stride + 2] = yz;
  out[2 * stride] = xz;
  out[2 * stride + 1] = yz;
  out[2 * stride + 2] = diag + dz * dz * inv;
}

// Accumulating variant of reg_stokeslet_block.
inline void add_reg_stokeslet_block(double dx, double dy, double dz, double eps2, double scale, double* out,
                                    std::ptrdiff_t stride) {
  const double r2 = dx * dx + dy * dy + dz * dz;
  const double d2 = r2 + eps2;
  const double inv = scale / (d2 * std::sqrt(d2));
  const double diag = (r2 + 2.0 * eps2) * inv;
  const double xy = dx * dy * inv;
  const double xz = dx * dz * inv;
  const double yz = dy * dz * inv;
  out[0] += diag + dx * dx * inv;
  out[1] += xy;
  out[2] += xz;
  out[stride] += xy;
  out[stride + 1] += diag + dy * dy * inv;
  out[stride + 2] += yz;
  out[2 * stride] += xz;
  out[2 * stride + 1] += yz;
  out[2 * stride + 2] += diag + dz * dz * inv;
}

}  // namespace detail

/// Blob function phi_eps(x); integrates to one over R^3.
inline double blob(const Vec3& x, double epsilon) {
  detail::require_positive_epsilon(epsilon);
  const double eps2 = epsilon * epsilon;
  const double d2 = x.squaredNorm() + eps2;
  return 15.0 * eps2 * eps2 / (8.0 * std::numbers::pi * std::pow(d2, 3.5));
}

/// Oseen tensor S_jk = delta_jk / r + r_j r_k / r^3 with r = x - y.
inline Mat3 singular_stokeslet(const Vec3& x, const Vec3& y) {
  const Vec3 r = x - y;
  const double dist = r.norm();
  if (dist < 1e-14 * (1.0 + x.norm())) {
    throw SingularEvaluation("singular stokeslet evaluated at coincident points");
  }
  const double inv = 1.0 / dist;
  return Mat3::Identity() * inv + r * r.transpose() * (inv * inv * inv);
}

/// Regularized stokeslet S^eps_jk = [delta_jk (r^2 + 2 eps^2) + r_j r_k] / (r^2 + eps^2)^(3/2).
/// Finite at x == y, where it equals (2 / eps) I.
inline Mat3 reg_stokeslet(const Vec3& x, const Vec3& y, double epsilon) {
  detail::require_positive_epsilon(epsilon);
  Mat3 s;
  detail::reg_stokeslet_block(x.x() - y.x(), x.y() - y.y(), x.z() - y.z(), epsilon * epsilon, 1.0, s.data(), 3);
  return s;
}

/// Regularized pressure kernel P^eps_k = r_k (2 r^2 + 5 eps^2) / (r^2 + eps^2)^(5/2).
inline Vec3 reg_pressure(const Vec3& x, const Vec3& y, double epsilon) {
  detail::require_positive_epsilon(epsilon);
  const Vec3 r = x - y;
  const double r2 = r.squaredNorm();
  const double eps2 = epsilon * epsilon;
  const double d2 = r2 + eps2;
  return r * ((2.0 * r2 + 5.0 * eps2) / (d2 * d2 * std::sqrt(d2)));
}

}  // namespace regstokes
