#pragma once

// Nystrom assembly and dense direct solves for the resistance and mobility
// problems, grand resistance matrices and the relative 2-norm error metric.
//
// Systems are assembled in traction unknowns f[n]: block (m, n) of the
// resistance matrix is S^eps(x[m], y_n) W[n] / (8 pi mu), where W[n] is the
// area carried by force point n. Reported forces are the combined unknowns
// F[n] = f[n] W[n], so that sum_n F[n] is the force exerted on the fluid.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "regstokes/errors.hpp"
#include "regstokes/geometry.hpp"
#include "regstokes/kernels.hpp"
#include "regstokes/parallel.hpp"

namespace regstokes {

using Mat6 = Eigen::Matrix<double, 6, 6>;

// A factorisation whose condition estimate falls below rcond_threshold is
// not rejected outright: each solve then takes one residual-correction step
// and fails only if the correction moves the integrated outputs (total
// force and moment, or U and Omega) by more than output_tolerance relative
// to their size. output_tolerance = 0 rejects on the estimate alone.
struct SolveOptions {
  double rcond_threshold = 1e-12;
  double output_tolerance = 1e-8;
  std::size_t max_matrix_bytes = std::size_t{3} << 30;
  unsigned workers = 0;  // 0: hardware concurrency
};

enum class SystemKind { resistance, mobility };

struct StokesSystem {
  Eigen::MatrixXd matrix;
  std::vector<Vec3> points;           // collocation and force points
  std::vector<double> column_weights; // W[n]
  double epsilon = 0.0;
  double mu = 1.0;
  SystemKind kind = SystemKind::resistance;

  std::size_t n_points() const { return points.size(); }
};

struct TractionSolution {
  std::vector<Vec3> F;  // combined unknowns f[n] W[n]
  double epsilon = 0.0;
};

struct ResistanceResult {
  Vec3 force = Vec3::Zero();
  Vec3 moment = Vec3::Zero();
  TractionSolution tractions;
};

struct MobilityResult {
  Vec3 U = Vec3::Zero();
  Vec3 Omega = Vec3::Zero();
  TractionSolution tractions;
};

/// 6x6 map from (U, Omega) to (F, M).
struct GrandResistanceMatrix {
  Mat6 m = Mat6::Zero();

  auto A_FU() const { return m.block<3, 3>(0, 0); }
  auto A_FOmega() const { return m.block<3, 3>(0, 3); }
  auto A_MU() const { return m.block<3, 3>(3, 0); }
  auto A_MOmega() const { return m.block<3, 3>(3, 3); }
};

namespace detail {

inline Mat3 cross_matrix(const Vec3& d) {
  Mat3 c;
  c << 0.0, -d.z(), d.y(), d.z(), 0.0, -d.x(), -d.y(), d.x(), 0.0;
  return c;
}

inline void check_matrix_budget(std::size_t rows, const SolveOptions& opts) {
  const double bytes = static_cast<double>(rows) * static_cast<double>(rows) * sizeof(double);
  if (bytes > static_cast<double>(opts.max_matrix_bytes)) {
    throw ResourceError("dense system of size " + std::to_string(rows) + " exceeds the memory budget of " +
                        std::to_string(opts.max_matrix_bytes) + " bytes");
  }
}

inline void check_discretisation(const SurfaceDiscretisation& disc) {
  if (disc.points.empty()) throw InvalidInput("empty discretisation");
  if (disc.weights.size() != disc.points.size()) throw InvalidInput("weights and points differ in length");
  for (const double w : disc.weights) {
    if (!(w > 0.0)) throw InvalidInput("discretisation weights must be positive");
  }
}

}  // namespace detail

/// Dense Nystrom matrix for the resistance problem.
inline StokesSystem assemble_nystrom(const SurfaceDiscretisation& disc, const RegParam& params,
                                     const SolveOptions& opts = {}) {
  params.validate();
  detail::check_discretisation(disc);
  const std::size_t n = disc.size();
  detail::check_matrix_budget(3 * n, opts);

  StokesSystem sys;
  sys.points = disc.points;
  sys.column_weights = disc.weights;
  sys.epsilon = params.epsilon;
  sys.mu = params.mu;
  sys.kind = SystemKind::resistance;
  sys.matrix.resize(static_cast<Eigen::Index>(3 * n), static_cast<Eigen::Index>(3 * n));

  const double eps2 = params.epsilon * params.epsilon;
  const double prefactor = 1.0 / (8.0 * std::numbers::pi * params.mu);
  const std::ptrdiff_t ld = sys.matrix.outerStride();
  double* data = sys.matrix.data();
  const auto& x = disc.points;

  constexpr std::size_t block = 64;
  const std::size_t tasks = (n + block - 1) / block;
  parallel_for(tasks, opts.workers, [&](std::size_t task) {
    const std::size_t end = std::min(n, (task + 1) * block);
    for (std::size_t col = task * block; col < end; ++col) {
      const double scale = disc.weights[col] * prefactor;
      for (std::size_t row = 0; row < n; ++row) {
        detail::reg_stokeslet_block(x[row].x() - x[col].x(), x[row].y() - x[col].y(), x[row].z() - x[col].z(), eps2,
                                    scale, data + 3 * col * ld + 3 * row, ld);
      }
    }
  });
  return sys;
}

/// Literal (3N+6) x (3N+6) mobility matrix over unknowns (f, U, Omega):
/// collocation rows  M f - U - Omega x (x - x0) = 0,
/// force rows        sum W f = F_ext,
/// moment rows       sum W (x - x0) x f = M_ext.
inline StokesSystem assemble_mobility(const StokesSystem& resistance, const Vec3& x0) {
  if (resistance.kind != SystemKind::resistance) throw InvalidInput("mobility assembly needs a resistance system");
  const std::size_t n = resistance.n_points();
  const Eigen::Index dim = static_cast<Eigen::Index>(3 * n + 6);
  const Eigen::Index base = static_cast<Eigen::Index>(3 * n);

  StokesSystem sys;
  sys.points = resistance.points;
  sys.column_weights = resistance.column_weights;
  sys.epsilon = resistance.epsilon;
  sys.mu = resistance.mu;
  sys.kind = SystemKind::mobility;
  sys.matrix = Eigen::MatrixXd::Zero(dim, dim);
  sys.matrix.topLeftCorner(base, base) = resistance.matrix;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(3 * i);
    const Vec3 d = resistance.points[i] - x0;
    const double w = resistance.column_weights[i];
    sys.matrix.block<3, 3>(r, base) = -Mat3::Identity();
    sys.matrix.block<3, 3>(r, base + 3) = detail::cross_matrix(d);
    sys.matrix.block<3, 3>(base, r) = w * Mat3::Identity();
    sys.matrix.block<3, 3>(base + 3, r) = w * detail::cross_matrix(d);
  }
  return sys;
}

/// LU factorisation with partial pivoting plus a reciprocal condition
/// estimate in the 1-norm. `observables` (k x n) maps a solution to the
/// outputs that the stability check is applied to.
class FactorisedSystem {
 public:
  FactorisedSystem(Eigen::MatrixXd matrix, double epsilon, const SolveOptions& opts,
                   Eigen::MatrixXd observables = {})
      : epsilon_(epsilon), tolerance_(opts.output_tolerance), observables_(std::move(observables)) {
    Eigen::MatrixXd copy;
    const bool keep = opts.rcond_threshold > 0.0;
    if (keep) copy = matrix;
    state_ = std::make_unique<State>(std::move(matrix));
    rcond_ = state_->lu.rcond();
    checked_ = !(rcond_ >= opts.rcond_threshold);
    if (checked_) {
      if (tolerance_ <= 0.0 || observables_.size() == 0) fail(std::numeric_limits<double>::quiet_NaN());
      original_ = std::move(copy);
    }
  }

  template <class Rhs>
  Eigen::MatrixXd solve(const Rhs& rhs) const {
    Eigen::MatrixXd x = state_->lu.solve(rhs);
    if (checked_) {
      const Eigen::MatrixXd r = rhs - original_ * x;
      const Eigen::MatrixXd d = state_->lu.solve(r);
      const double size = (observables_ * x).norm();
      const double drift = (observables_ * d).norm();
      if (!(drift <= tolerance_ * size)) fail(drift / size);
    }
    return x;
  }

  double rcond() const { return rcond_; }
  double epsilon() const { return epsilon_; }
  /// True when solves are verified because the estimate was below threshold.
  bool ill_conditioned() const { return checked_; }
  Eigen::Index rows() const { return state_->matrix.rows(); }

 private:
  [[noreturn]] void fail(double drift) const {
    std::string what = "system at epsilon=" + format_real(epsilon_) + " is close to singular (rcond estimate " +
                       format_real(rcond_);
    if (!std::isnan(drift)) what += ", outputs move by " + format_real(drift) + " under one correction step";
    throw NearSingularSystem(what + ")", rcond_, epsilon_);
  }

  struct State {
    explicit State(Eigen::MatrixXd&& m) : matrix(std::move(m)), lu(matrix) {}
    Eigen::MatrixXd matrix;
    Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>> lu;
  };
  std::unique_ptr<State> state_;
  double epsilon_;
  double tolerance_;
  Eigen::MatrixXd observables_;
  Eigen::MatrixXd original_;
  double rcond_ = 0.0;
  bool checked_ = false;
};

namespace detail {

/// Rows: total force sum W f, and total moment about the origin sum W x cross f.
inline Eigen::MatrixXd force_moment_observables(const std::vector<Vec3>& points, const std::vector<double>& weights,
                                                Eigen::Index cols) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(6, cols);
  for (std::size_t n = 0; n < points.size(); ++n) {
    const Eigen::Index c = static_cast<Eigen::Index>(3 * n);
    g.block<3, 3>(0, c) = weights[n] * Mat3::Identity();
    g.block<3, 3>(3, c) = weights[n] * cross_matrix(points[n]);
  }
  return g;
}

}  // namespace detail

/// Factorised resistance system; any number of rigid-body right-hand sides.
class ResistanceSolver {
 public:
  ResistanceSolver(StokesSystem system, const SolveOptions& opts = {})
      : points_(std::move(system.points)),
        weights_(std::move(system.column_weights)),
        epsilon_(system.epsilon),
        factor_(std::move(system.matrix), system.epsilon, opts,
                detail::force_moment_observables(points_, weights_, static_cast<Eigen::Index>(3 * points_.size()))) {
    if (system.kind != SystemKind::resistance) throw InvalidInput("resistance solver needs a resistance system");
  }

  ResistanceResult solve(const Vec3& U, const Vec3& Omega, const Vec3& x0) const {
    const auto f = factor_.solve(rhs_for(U, Omega, x0));
    return collect(f.col(0), x0);
  }

  /// Six unit rigid-body motions through one factorisation.
  GrandResistanceMatrix grand_resistance(const Vec3& x0) const {
    const Eigen::Index rows = static_cast<Eigen::Index>(3 * points_.size());
    Eigen::MatrixXd rhs(rows, 6);
    for (int j = 0; j < 3; ++j) {
      rhs.col(j) = rhs_for(Vec3::Unit(j), Vec3::Zero(), x0);
      rhs.col(j + 3) = rhs_for(Vec3::Zero(), Vec3::Unit(j), x0);
    }
    const Eigen::MatrixXd f = factor_.solve(rhs);
    GrandResistanceMatrix A;
    for (int j = 0; j < 6; ++j) {
      const auto r = collect(f.col(j), x0);
      A.m.block<3, 1>(0, j) = r.force;
      A.m.block<3, 1>(3, j) = r.moment;
    }
    return A;
  }

  double rcond() const { return factor_.rcond(); }
  double epsilon() const { return epsilon_; }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  Eigen::VectorXd rhs_for(const Vec3& U, const Vec3& Omega, const Vec3& x0) const {
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(3 * points_.size()));
    for (std::size_t m = 0; m < points_.size(); ++m) {
      rhs.segment<3>(static_cast<Eigen::Index>(3 * m)) = U + Omega.cross(points_[m] - x0);
    }
    return rhs;
  }

  template <class Col>
  ResistanceResult collect(const Col& f, const Vec3& x0) const {
    ResistanceResult out;
    out.tractions.epsilon = epsilon_;
    out.tractions.F.resize(points_.size());
    for (std::size_t n = 0; n < points_.size(); ++n) {
      const Vec3 F = weights_[n] * f.template segment<3>(static_cast<Eigen::Index>(3 * n));
      out.tractions.F[n] = F;
      out.force += F;
      out.moment += (points_[n] - x0).cross(F);
    }
    return out;
  }

  std::vector<Vec3> points_;
  std::vector<double> weights_;
  double epsilon_;
  FactorisedSystem factor_;
};

/// Factorised mobility system about a fixed reference point x0.
/// Force and moment rows are scaled by N / sum(W) before factorisation so
/// that every block of the augmented matrix is O(1); the solution is unchanged.
class MobilitySolver {
 public:
  MobilitySolver(const StokesSystem& resistance, const Vec3& x0, const SolveOptions& opts = {})
      : MobilitySolver(assemble_mobility(resistance, x0), x0, opts, 0) {}

  MobilityResult solve(const Vec3& F_ext, const Vec3& M_ext) const {
    const Eigen::Index base = static_cast<Eigen::Index>(3 * points_.size());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(base + 6);
    rhs.segment<3>(base) = row_scale_ * F_ext;
    rhs.segment<3>(base + 3) = row_scale_ * M_ext;
    const Eigen::VectorXd sol = factor_.solve(rhs);
    MobilityResult out;
    out.U = sol.segment<3>(base);
    out.Omega = sol.segment<3>(base + 3);
    out.tractions.epsilon = epsilon_;
    out.tractions.F.resize(points_.size());
    for (std::size_t n = 0; n < points_.size(); ++n) {
      out.tractions.F[n] = weights_[n] * sol.segment<3>(static_cast<Eigen::Index>(3 * n));
    }
    return out;
  }

  double rcond() const { return factor_.rcond(); }
  const Vec3& x0() const { return x0_; }
  double epsilon() const { return epsilon_; }

 private:
  MobilitySolver(StokesSystem augmented, const Vec3& x0, const SolveOptions& opts, int)
      : points_(std::move(augmented.points)),
        weights_(std::move(augmented.column_weights)),
        epsilon_(augmented.epsilon),
        x0_(x0),
        row_scale_(scale_for(weights_)),
        factor_(scaled(std::move(augmented.matrix), row_scale_), epsilon_, opts, rigid_observables(points_.size())) {}

  static Eigen::MatrixXd rigid_observables(std::size_t n) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(6, static_cast<Eigen::Index>(3 * n + 6));
    g.rightCols(6).setIdentity();
    return g;
  }

  static double scale_for(const std::vector<double>& w) {
    double total = 0.0;
    for (const double v : w) total += v;
    return static_cast<double>(w.size()) / total;
  }

  static Eigen::MatrixXd scaled(Eigen::MatrixXd m, double s) {
    m.bottomRows(6) *= s;
    return m;
  }

  std::vector<Vec3> points_;
  std::vector<double> weights_;
  double epsilon_;
  Vec3 x0_;
  double row_scale_;
  FactorisedSystem factor_;
};

inline ResistanceResult solve_resistance(const SurfaceDiscretisation& disc, const RegParam& params, const Vec3& U,
                                         const Vec3& Omega, const Vec3& x0, const SolveOptions& opts = {}) {
  return ResistanceSolver(assemble_nystrom(disc, params, opts), opts).solve(U, Omega, x0);
}

/// Grand resistance matrix about x0 (the area centroid when omitted).
inline GrandResistanceMatrix grand_resistance(const SurfaceDiscretisation& disc, const RegParam& params,
                                              const SolveOptions& opts = {}) {
  return ResistanceSolver(assemble_nystrom(disc, params, opts), opts).grand_resistance(disc.centroid());
}

inline GrandResistanceMatrix grand_resistance(const SurfaceDiscretisation& disc, const RegParam& params,
                                              const Vec3& x0, const SolveOptions& opts) {
  return ResistanceSolver(assemble_nystrom(disc, params, opts), opts).grand_resistance(x0);
}

inline MobilityResult solve_mobility(const SurfaceDiscretisation& disc, const RegParam& params, const Vec3& F_ext,
                                     const Vec3& M_ext, const Vec3& x0, const SolveOptions& opts = {}) {
  return MobilitySolver(assemble_nystrom(disc, params, opts), x0, opts).solve(F_ext, M_ext);
}

/// Velocity u(x~) = (1 / 8 pi mu) sum_n S^eps(x~, x[n]) F[n] at each query point.
inline std::vector<Vec3> evaluate_flow(const TractionSolution& tractions, const SurfaceDiscretisation& disc,
                                       const RegParam& params, std::span<const Vec3> query) {
  params.validate();
  if (tractions.F.size() != disc.size()) throw InvalidInput("tractions do not match the discretisation");
  const double eps2 = params.epsilon * params.epsilon;
  const double prefactor = 1.0 / (8.0 * std::numbers::pi * params.mu);
  std::vector<Vec3> out(query.size(), Vec3::Zero());
  for (std::size_t i = 0; i < query.size(); ++i) {
    Vec3 u = Vec3::Zero();
    Mat3 s;
    for (std::size_t n = 0; n < disc.size(); ++n) {
      const Vec3 r = query[i] - disc.points[n];
      detail::reg_stokeslet_block(r.x(), r.y(), r.z(), eps2, 1.0, s.data(), 3);
      u += s * tractions.F[n];
    }
    out[i] = prefactor * u;
  }
  return out;
}

/// ||A - A_ref||_2 / ||A_ref||_2 with the spectral norm.
inline double relative_error_2norm(const GrandResistanceMatrix& A, const GrandResistanceMatrix& A_ref) {
  const double ref = Eigen::JacobiSVD<Mat6>(A_ref.m).singularValues()(0);
  if (!(ref > 0.0)) throw InvalidInput("reference grand resistance matrix is zero");
  const Mat6 diff = A.m - A_ref.m;
  return Eigen::JacobiSVD<Mat6>(diff).singularValues()(0) / ref;
}

/// Stokes drag and torque of a sphere of radius a: diag(6 pi mu a I, 8 pi mu a^3 I).
inline GrandResistanceMatrix analytic_sphere_grm(double radius = 1.0, double mu = 1.0) {
  if (!(radius > 0.0)) throw InvalidGeometry("sphere radius must be positive");
  constexpr double pi = std::numbers::pi;
  GrandResistanceMatrix A;
  A.m.diagonal() << 6 * pi * mu * radius, 6 * pi * mu * radius, 6 * pi * mu * radius,
      8 * pi * mu * radius * radius * radius, 8 * pi * mu * radius * radius * radius,
      8 * pi * mu * radius * radius * radius;
  return A;
}

/// Prolate spheroid (semi-axes a along x, c transverse) about its centre,
/// from the classical resistance functions X^A, Y^A, X^C, Y^C of
/// Kim & Karrila, "Microhydrodynamics" (1991), ch. 3. Each function is
/// (const) e^3 / D(e); for small eccentricity D is evaluated from its
/// power series to avoid cancellation.
inline GrandResistanceMatrix analytic_spheroid_grm(double a, double c, double mu = 1.0) {
  validate(Shape{Spheroid{a, c}});
  constexpr double pi = std::numbers::pi;
  const double e = std::sqrt(1.0 - (c * c) / (a * a));

  // D_xa = -2e + (1+e^2) L, D_ya = 2e + (3e^2-1) L, D_xc = 2e - (1-e^2) L,
  // with L = ln((1+e)/(1-e)). All are returned divided by e^3.
  double d_xa, d_ya, d_xc;
  if (e < 0.5) {
    d_xa = d_ya = d_xc = 0.0;
    double pow_e = 1.0;  // e^(2k-2)
    for (int k = 1; k <= 60; ++k) {
      const double p = 2.0 / (2 * k + 1);
      const double q = 2.0 / (2 * k - 1);
      d_xa += (p + q) * pow_e;
      d_ya += (-p + 3.0 * q) * pow_e;
      d_xc += (-p + q) * pow_e;
      pow_e *= e * e;
    }
  } else {
    const double L = std::log((1.0 + e) / (1.0 - e));
    const double e3 = e * e * e;
    d_xa = (-2.0 * e + (1.0 + e * e) * L) / e3;
    d_ya = (2.0 * e + (3.0 * e * e - 1.0) * L) / e3;
    d_xc = (2.0 * e - (1.0 - e * e) * L) / e3;
  }
  const double XA = (8.0 / 3.0) / d_xa;
  const double YA = (16.0 / 3.0) / d_ya;
  const double XC = (4.0 / 3.0) * (1.0 - e * e) / d_xc;
  const double YC = (4.0 / 3.0) * (2.0 - e * e) / d_xa;

  GrandResistanceMatrix A;
  const double trans = 6.0 * pi * mu * a;
  const double rot = 8.0 * pi * mu * a * a * a;
  A.m.diagonal() << trans * XA, trans * YA, trans * YA, rot * XC, rot * YC, rot * YC;
  return A;
}

}  // namespace regstokes
