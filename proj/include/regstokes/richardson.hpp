#pragma once

// Richardson extrapolation in the regularisation parameter. Three solves at
// eps_i = c_i * eps are combined with the weights that annihilate the O(eps)
// and O(eps^2) terms, i.e. the first row of the inverse Vandermonde matrix
// [1, eps_i, eps_i^2], evaluated as the Lagrange basis at eps = 0.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "regstokes/errors.hpp"
#include "regstokes/geometry.hpp"
#include "regstokes/parallel.hpp"
#include "regstokes/stokes_core.hpp"

namespace regstokes {

using Triple = std::array<double, 3>;

struct ExtrapolationRule {
  Triple multipliers{1.0, std::numbers::sqrt2, 2.0};

  void validate() const {
    const auto& c = multipliers;
    for (const double v : c) {
      if (!std::isfinite(v)) throw InvalidRule("extrapolation multipliers must be finite");
    }
    if (!(0.0 < c[0] && c[0] < c[1] && c[1] < c[2])) {
      throw InvalidRule("extrapolation multipliers must satisfy 0 < c1 < c2 < c3");
    }
  }

  Triple epsilons(double eps_base) const {
    return {multipliers[0] * eps_base, multipliers[1] * eps_base, multipliers[2] * eps_base};
  }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << multipliers[0] << ',' << multipliers[1] << ',' << multipliers[2];
    return os.str();
  }

  /// Parses "c1,c2,c3".
  static ExtrapolationRule parse(const std::string& text) {
    ExtrapolationRule rule;
    std::istringstream is(text);
    std::string item;
    std::size_t i = 0;
    while (std::getline(is, item, ',')) {
      if (i >= 3) throw InvalidRule("extrapolation rule needs exactly three multipliers: " + text);
      try {
        std::size_t used = 0;
        rule.multipliers[i] = std::stod(item, &used);
        if (item.find_first_not_of(" \t", used) != std::string::npos) throw InvalidRule("bad multiplier: " + item);
      } catch (const std::logic_error&) {
        throw InvalidRule("bad multiplier: " + item);
      }
      ++i;
    }
    if (i != 3) throw InvalidRule("extrapolation rule needs exactly three multipliers: " + text);
    rule.validate();
    return rule;
  }
};

/// (1, sqrt2, 2), (1, 1.5, 2), (1, 2, 3), (1, 1.25, 1.5), (1, sqrt1.5, 1.5).
inline std::vector<ExtrapolationRule> standard_rules() {
  return {ExtrapolationRule{{1.0, std::numbers::sqrt2, 2.0}}, ExtrapolationRule{{1.0, 1.5, 2.0}},
          ExtrapolationRule{{1.0, 2.0, 3.0}}, ExtrapolationRule{{1.0, 1.25, 1.5}},
          ExtrapolationRule{{1.0, std::sqrt(1.5), 1.5}}};
}

struct ExtrapolationWeights {
  Triple w{};

  template <class T>
  T combine(const T& v1, const T& v2, const T& v3) const {
    return w[0] * v1 + w[1] * v2 + w[2] * v3;
  }
};

inline ExtrapolationWeights extrapolation_weights(const Triple& eps) {
  for (const double e : eps) {
    if (!(e > 0.0) || !std::isfinite(e)) throw InvalidRule("extrapolation points must be positive");
  }
  if (eps[0] == eps[1] || eps[0] == eps[2] || eps[1] == eps[2]) {
    throw InvalidRule("extrapolation points must be distinct");
  }
  ExtrapolationWeights out;
  for (int i = 0; i < 3; ++i) {
    double w = 1.0;
    for (int j = 0; j < 3; ++j) {
      if (j != i) w *= eps[j] / (eps[j] - eps[i]);
    }
    out.w[i] = w;
  }
  return out;
}

inline double extrapolate(const Triple& values, const Triple& eps) {
  return extrapolation_weights(eps).combine(values[0], values[1], values[2]);
}

namespace detail {

template <class Result, class Solve>
std::array<Result, 3> solve_three(const Triple& eps, unsigned workers, Solve&& solve) {
  std::array<Result, 3> out;
  try {
    parallel_for(3, workers, [&](std::size_t i) { out[i] = solve(eps[i]); });
  } catch (const NearSingularSystem& e) {
    throw NearSingularSystem("extrapolation solve failed: " + std::string(e.what()), e.rcond(), e.epsilon());
  }
  return out;
}

inline unsigned inner_workers(const SolveOptions& opts) { return std::min(3u, resolve_workers(opts.workers)); }

}  // namespace detail

/// Grand resistance matrices at the three rule epsilons on one discretisation,
/// extrapolated entrywise.
inline GrandResistanceMatrix nyr_grand_resistance(const SurfaceDiscretisation& disc, double eps_base,
                                                  const ExtrapolationRule& rule, double mu = 1.0,
                                                  const SolveOptions& opts = {}) {
  rule.validate();
  const Triple eps = rule.epsilons(eps_base);
  const auto weights = extrapolation_weights(eps);
  const Vec3 x0 = disc.centroid();
  SolveOptions inner = opts;
  inner.workers = 1;
  const auto grm = detail::solve_three<GrandResistanceMatrix>(eps, detail::inner_workers(opts), [&](double e) {
    return grand_resistance(disc, RegParam{e, mu}, x0, inner);
  });
  GrandResistanceMatrix out;
  out.m = weights.combine(grm[0].m, grm[1].m, grm[2].m);
  return out;
}

/// Extrapolated U and Omega; tractions come from the smallest epsilon.
inline MobilityResult nyr_mobility(const SurfaceDiscretisation& disc, double eps_base, const ExtrapolationRule& rule,
                                   const Vec3& F_ext, const Vec3& M_ext, const Vec3& x0, double mu = 1.0,
                                   const SolveOptions& opts = {}) {
  rule.validate();
  const Triple eps = rule.epsilons(eps_base);
  const auto weights = extrapolation_weights(eps);
  SolveOptions inner = opts;
  inner.workers = 1;
  auto res = detail::solve_three<MobilityResult>(eps, detail::inner_workers(opts), [&](double e) {
    return solve_mobility(disc, RegParam{e, mu}, F_ext, M_ext, x0, inner);
  });
  MobilityResult out;
  out.U = weights.combine(res[0].U, res[1].U, res[2].U);
  out.Omega = weights.combine(res[0].Omega, res[1].Omega, res[2].Omega);
  out.tractions = std::move(res[0].tractions);
  return out;
}

}  // namespace regstokes
