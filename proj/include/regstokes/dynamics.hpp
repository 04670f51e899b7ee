#pragma once

// Rigid-body mobility dynamics: x0' = U, b1' = Omega x b1, b2' = Omega x b2,
// integrated with the Dormand-Prince 5(4) pair.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "regstokes/errors.hpp"
#include "regstokes/geometry.hpp"
#include "regstokes/nearest.hpp"
#include "regstokes/richardson.hpp"
#include "regstokes/stokes_core.hpp"

namespace regstokes {

enum class Method { ny, nyr, nearest };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::ny: return "ny";
    case Method::nyr: return "nyr";
    case Method::nearest: return "nearest";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "ny") return Method::ny;
  if (s == "nyr") return Method::nyr;
  if (s == "nearest") return Method::nearest;
  throw InvalidParameter("unknown method: " + s);
}

struct MethodConfig {
  Method method = Method::nyr;
  double epsilon = 0.4;  // eps for ny and nearest, eps_base for nyr
  ExtrapolationRule rule;
  double mu = 1.0;
  double quad_refine = 4.0;  // nearest: h_q = h / quad_refine
  double filter_fraction = 0.1;
  double tie_tolerance = 1e-12;
  bool drop_empty = false;
  // Factorise once in the body frame and rotate loads and velocities,
  // instead of reassembling the moved discretisation at every evaluation.
  bool reuse_factorisation = true;
  SolveOptions solve;
};

struct RigidBodyState {
  Vec3 x0 = Vec3::Zero();
  Vec3 b1 = Vec3::UnitX();
  Vec3 b2 = Vec3::UnitY();
  double t = 0.0;

  Vec3 b3() const { return b1.cross(b2); }

  Mat3 basis() const {
    Mat3 B;
    B << b1, b2, b3();
    return B;
  }

  double orthonormality_drift() const {
    return std::max({std::abs(b1.norm() - 1.0), std::abs(b2.norm() - 1.0), std::abs(b1.dot(b2))});
  }

  /// Normalise b1, then Gram-Schmidt b2 against it.
  void reorthonormalise() {
    b1.normalize();
    b2 -= b1.dot(b2) * b1;
    b2.normalize();
  }
};

struct RigidRates {
  Vec3 U = Vec3::Zero();
  Vec3 Omega = Vec3::Zero();
};

struct TrajectorySample {
  double t = 0.0;
  RigidBodyState state;
  Vec3 U = Vec3::Zero();
  Vec3 Omega = Vec3::Zero();
};

struct Trajectory {
  std::vector<TrajectorySample> samples;

  const TrajectorySample& back() const { return samples.back(); }
  double max_orthonormality_drift() const {
    double d = 0.0;
    for (const auto& s : samples) d = std::max(d, s.state.orthonormality_drift());
    return d;
  }
};

/// Integration stopped early; the trajectory up to the failure is kept.
class IntegrationFailure : public Error {
 public:
  IntegrationFailure(const std::string& what, double t, Trajectory partial, bool near_singular = false)
      : Error(what), t_(t), partial_(std::move(partial)), near_singular_(near_singular) {}

  double time() const noexcept { return t_; }
  const Trajectory& partial() const noexcept { return partial_; }
  /// The failure came from a near-singular mobility solve.
  bool near_singular() const noexcept { return near_singular_; }

 private:
  double t_;
  Trajectory partial_;
  bool near_singular_;
};

using StateVector = Eigen::Matrix<double, 9, 1>;

inline StateVector pack(const RigidBodyState& s) {
  StateVector y;
  y << s.x0, s.b1, s.b2;
  return y;
}

inline RigidBodyState unpack(const StateVector& y, double t) {
  return RigidBodyState{y.segment<3>(0), y.segment<3>(3), y.segment<3>(6), t};
}

/// (U, Omega x b1, Omega x b2).
inline StateVector rigid_body_rhs(const RigidBodyState& s, const RigidRates& r) {
  StateVector d;
  d << r.U, r.Omega.cross(s.b1), r.Omega.cross(s.b2);
  return d;
}

/// Mobility of one rigid body under a fixed external load, for any placement
/// (x0, b1, b2) of its body-frame discretisation. Moments are about x0.
class BodyMobility {
 public:
  /// Builds the body-frame discretisation (a nearest pair for Method::nearest) at spacing h.
  BodyMobility(const Shape& shape, double h, MethodConfig config, Vec3 F_ext, Vec3 M_ext)
      : BodyMobility(discretise_for(shape, h, config), std::move(config), std::move(F_ext), std::move(M_ext)) {}

  /// Ny or NyR on a prepared body-frame discretisation.
  BodyMobility(SurfaceDiscretisation disc, MethodConfig config, Vec3 F_ext, Vec3 M_ext)
      : BodyMobility(Prepared{std::move(disc), std::nullopt}, std::move(config), std::move(F_ext), std::move(M_ext)) {}

  /// Nearest on a prepared body-frame pair.
  BodyMobility(NearestPair pair, MethodConfig config, Vec3 F_ext, Vec3 M_ext)
      : BodyMobility(Prepared{{}, std::move(pair)}, std::move(config), std::move(F_ext), std::move(M_ext)) {}

  RigidRates rates(const RigidBodyState& s) const {
    const Mat3 B = s.basis();
    std::array<MobilityResult, 3> r;
    try {
      if (config_.reuse_factorisation) {
        const Vec3 Fb = B.transpose() * F_ext_;
        const Vec3 Mb = B.transpose() * M_ext_;
        for (std::size_t i = 0; i < n_solves_; ++i) r[i] = solvers_[i]->solve(Fb, Mb);
        for (std::size_t i = 0; i < n_solves_; ++i) {
          r[i].U = B * r[i].U;
          r[i].Omega = B * r[i].Omega;
        }
      } else {
        SolveOptions inner = config_.solve;
        inner.workers = 1;
        parallel_for(n_solves_, std::min<unsigned>(n_solves_, resolve_workers(config_.solve.workers)),
                     [&](std::size_t i) {
                       r[i] = MobilitySolver(assemble_at(s.x0, B, eps_[i], inner), s.x0, inner).solve(F_ext_, M_ext_);
                     });
      }
    } catch (const NearSingularSystem& e) {
      throw NearSingularSystem("mobility solve failed: " + std::string(e.what()), e.rcond(), e.epsilon());
    }
    if (n_solves_ == 1) return {r[0].U, r[0].Omega};
    return {weights_.combine(r[0].U, r[1].U, r[2].U), weights_.combine(r[0].Omega, r[1].Omega, r[2].Omega)};
  }

  const MethodConfig& config() const { return config_; }
  /// Force points of the body-frame discretisation.
  std::size_t force_points() const { return pair_ ? map_.n_force() : disc_.size(); }
  std::size_t quad_points() const { return pair_ ? pair_->quad.size() : 0; }
  /// Achieved spacing of the (force) discretisation.
  double h() const { return pair_ ? pair_->force.h : disc_.h; }

 private:
  struct Prepared {
    SurfaceDiscretisation disc;
    std::optional<NearestPair> pair;
  };

  static Prepared discretise_for(const Shape& shape, double h, const MethodConfig& config) {
    if (config.method == Method::nearest) {
      return {{}, make_nearest_pair(shape, h, config.quad_refine, config.filter_fraction)};
    }
    return {discretise(shape, h), std::nullopt};
  }

  BodyMobility(Prepared prepared, MethodConfig config, Vec3 F_ext, Vec3 M_ext)
      : config_(std::move(config)), F_ext_(std::move(F_ext)), M_ext_(std::move(M_ext)) {
    RegParam{config_.epsilon, config_.mu}.validate();
    if (config_.method == Method::nyr) {
      config_.rule.validate();
      eps_ = config_.rule.epsilons(config_.epsilon);
      weights_ = extrapolation_weights(eps_);
      n_solves_ = 3;
    } else {
      eps_ = {config_.epsilon, 0.0, 0.0};
      n_solves_ = 1;
    }
    if (config_.method == Method::nearest) {
      if (!prepared.pair) throw InvalidInput("nearest method needs a force/quadrature pair");
      pair_ = std::move(prepared.pair);
      map_ = build_nearest_map(pair_->force.points, pair_->quad.points, config_.tie_tolerance,
                               config_.drop_empty ? EmptyPointPolicy::drop : EmptyPointPolicy::error);
    } else {
      if (prepared.pair) throw InvalidInput("a force/quadrature pair needs the nearest method");
      disc_ = std::move(prepared.disc);
      detail::check_discretisation(disc_);
    }
    if (config_.reuse_factorisation) {
      SolveOptions inner = config_.solve;
      inner.workers = 1;
      solvers_.resize(n_solves_);
      try {
        parallel_for(n_solves_, std::min<unsigned>(n_solves_, resolve_workers(config_.solve.workers)),
                     [&](std::size_t i) {
                       solvers_[i] = std::make_unique<MobilitySolver>(
                           assemble_at(Vec3::Zero(), Mat3::Identity(), eps_[i], inner), Vec3::Zero(), inner);
                     });
      } catch (const NearSingularSystem& e) {
        throw NearSingularSystem("mobility solve failed: " + std::string(e.what()), e.rcond(), e.epsilon());
      }
    }
  }

  StokesSystem assemble_at(const Vec3& x0, const Mat3& B, double eps, const SolveOptions& opts) const {
    const RegParam p{eps, config_.mu};
    if (pair_) {
      const auto force = rigidly_transformed(pair_->force, x0, B);
      const auto quad = rigidly_transformed(pair_->quad, x0, B);
      return assemble_nearest(force.points, quad, map_, p, opts);
    }
    return assemble_nystrom(rigidly_transformed(disc_, x0, B), p, opts);
  }

  MethodConfig config_;
  Vec3 F_ext_, M_ext_;
  Triple eps_{};
  ExtrapolationWeights weights_;
  std::size_t n_solves_ = 1;
  SurfaceDiscretisation disc_;
  std::optional<NearestPair> pair_;
  NearestMap map_;
  std::vector<std::unique_ptr<MobilitySolver>> solvers_;
};

inline StateVector rigid_body_rhs(const RigidBodyState& s, const BodyMobility& body) {
  return rigid_body_rhs(s, body.rates(s));
}

struct IntegrationOptions {
  double rtol = 1e-6;
  double atol = 1e-8;
  double initial_step = 0.0;  // 0: automatic
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 100000;
  double reorthonormalise_above = 1e-9;
};

/// Adaptive Dormand-Prince 5(4) integration of the rigid-body ODE from
/// state0.t to t_end. `rates(state)` returns (U, Omega); every accepted step
/// is recorded.
template <class Rates>
Trajectory integrate(Rates&& rates, RigidBodyState state0, double t_end, const IntegrationOptions& opt = {}) {
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0)) throw InvalidParameter("rtol and atol must be positive");
  if (!(t_end >= state0.t)) throw InvalidParameter("t_end must not precede the initial time");
  if (state0.orthonormality_drift() > 1e-6) throw InvalidInput("initial basis is not orthonormal");

  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  Trajectory traj;
  auto eval = [&](const RigidBodyState& st) -> RigidRates {
    try {
      return rates(st);
    } catch (const Error& e) {
      const bool singular = dynamic_cast<const NearSingularSystem*>(&e) != nullptr;
      throw IntegrationFailure("solver failed at t=" + format_real(st.t) + ": " + e.what(), st.t, traj, singular);
    }
  };
  RigidBodyState s = state0;
  RigidRates r = eval(s);
  traj.samples.push_back({s.t, s, r.U, r.Omega});
  if (t_end == state0.t) return traj;

  auto f = [&](const StateVector& y, double t) -> StateVector {
    const RigidBodyState st = unpack(y, t);
    return rigid_body_rhs(st, eval(st));
  };
  auto err_norm = [&](const StateVector& e, const StateVector& y0, const StateVector& y1) {
    double sum = 0.0;
    for (int i = 0; i < 9; ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
      sum += (e[i] / sc) * (e[i] / sc);
    }
    return std::sqrt(sum / 9.0);
  };

  StateVector y = pack(s);
  StateVector k1 = rigid_body_rhs(s, r);
  const double span = t_end - state0.t;

  double h = opt.initial_step;
  if (!(h > 0.0)) {
    // Hairer-Norsett-Wanner starting step.
    StateVector sc;
    for (int i = 0; i < 9; ++i) sc[i] = opt.atol + opt.rtol * std::abs(y[i]);
    const double d0 = (y.array() / sc.array()).matrix().norm() / 3.0;
    const double d1 = (k1.array() / sc.array()).matrix().norm() / 3.0;
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    const StateVector k2 = f(y + h0 * k1, s.t + h0);
    const double d2 = ((k2 - k1).array() / sc.array()).matrix().norm() / 3.0 / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    h = std::min({100.0 * h0, h1, span});
  }
  h = std::min(h, opt.max_step);

  std::size_t steps = 0;
  double last_err = 0.0;
  while (s.t < t_end) {
    if (++steps > opt.max_steps) {
      std::ostringstream os;
      os << "step limit " << opt.max_steps << " reached at t=" << format_real(s.t);
      throw IntegrationFailure(os.str(), s.t, std::move(traj));
    }
    if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(s.t))) {
      std::ostringstream os;
      os << "step size underflow at t=" << format_real(s.t) << " (h=" << format_real(h)
         << ", last error norm " << format_real(last_err) << ")";
      throw IntegrationFailure(os.str(), s.t, std::move(traj));
    }
    bool last = false;
    if (s.t + h >= t_end) {
      h = t_end - s.t;
      last = true;
    }
    const StateVector k2 = f(y + h * a21 * k1, s.t + c2 * h);
    const StateVector k3 = f(y + h * (a31 * k1 + a32 * k2), s.t + c3 * h);
    const StateVector k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3), s.t + c4 * h);
    const StateVector k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), s.t + c5 * h);
    const StateVector k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), s.t + h);
    const StateVector y1 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const RigidRates r1 = eval(unpack(y1, s.t + h));
    const StateVector k7 = rigid_body_rhs(unpack(y1, s.t + h), r1);
    const StateVector err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = err_norm(err, y, y1);
    last_err = en;
    if (!std::isfinite(en)) {
      throw IntegrationFailure("non-finite state near t=" + format_real(s.t), s.t, std::move(traj));
    }
    if (en <= 1.0) {
      s = unpack(y1, last ? t_end : s.t + h);
      r = r1;
      k1 = k7;
      if (s.orthonormality_drift() > opt.reorthonormalise_above) {
        s.reorthonormalise();
        r = eval(s);
        k1 = rigid_body_rhs(s, r);
      }
      y = pack(s);
      traj.samples.push_back({s.t, s, r.U, r.Omega});
      const double grow = en == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
      h = std::min(h * grow, opt.max_step);
    } else {
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
    }
  }
  return traj;
}

inline Trajectory integrate(const BodyMobility& body, RigidBodyState state0, double t_end,
                            const IntegrationOptions& opt = {}) {
  return integrate([&body](const RigidBodyState& s) { return body.rates(s); }, std::move(state0), t_end, opt);
}

/// Torus released from rest at the origin with its axis along z, pulled by
/// a unit force in -z and no external moment.
inline Trajectory sediment_torus(double R, double r, double h, const MethodConfig& config, double t_end = 98.7,
                                 const IntegrationOptions& opt = {}) {
  const BodyMobility body(Shape{Torus{R, r}}, h, config, Vec3(0.0, 0.0, -1.0), Vec3::Zero());
  return integrate(body, RigidBodyState{}, t_end, opt);
}

/// Total rotation angle of the basis between two states.
inline double rotation_angle(const RigidBodyState& a, const RigidBodyState& b) {
  const Mat3 R = b.basis() * a.basis().transpose();
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

/// Columns t, x0, b1, b2, U, Omega; one row per sample, 17 significant digits.
inline void write_trajectory(std::ostream& os, const Trajectory& traj) {
  const auto old = os.precision(17);
  os << "# t x y z b1x b1y b1z b2x b2y b2z Ux Uy Uz Ox Oy Oz\n";
  for (const auto& s : traj.samples) {
    os << s.t;
    for (const Vec3* v : {&s.state.x0, &s.state.b1, &s.state.b2, &s.U, &s.Omega}) {
      os << ' ' << v->x() << ' ' << v->y() << ' ' << v->z();
    }
    os << '\n';
  }
  os.precision(old);
}

inline Trajectory read_trajectory(std::istream& is) {
  Trajectory traj;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::array<double, 16> v{};
    for (auto& x : v) {
      if (!(ls >> x)) throw InvalidInput("malformed trajectory row: " + line);
    }
    TrajectorySample s;
    s.t = v[0];
    s.state = RigidBodyState{{v[1], v[2], v[3]}, {v[4], v[5], v[6]}, {v[7], v[8], v[9]}, v[0]};
    s.U = {v[10], v[11], v[12]};
    s.Omega = {v[13], v[14], v[15]};
    traj.samples.push_back(s);
  }
  return traj;
}

}  // namespace regstokes
