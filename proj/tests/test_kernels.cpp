#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "regstokes/kernels.hpp"

using namespace regstokes;

namespace {

constexpr double pi = std::numbers::pi;

// Adaptive Simpson on [a, b].
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6 * (fa + 4 * flm + fm);
  const double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
  return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, 50);
}

// Total mass of the blob by radial quadrature with s = eps tan(theta), theta in [0, pi/2).
double blob_mass(double eps) {
  auto integrand = [eps](double theta) {
    if (theta >= pi / 2) return 0.0;
    const double s = eps * std::tan(theta);
    const double ds = eps / (std::cos(theta) * std::cos(theta));
    return 4 * pi * s * s * blob(Vec3(s, 0, 0), eps) * ds;
  };
  return integrate(integrand, 0.0, pi / 2, 1e-13);
}

}  // namespace

TEST(Blob, CentreValues) {
  EXPECT_NEAR(blob(Vec3::Zero(), 1.0), 15.0 / (8 * pi), 1e-15);
  EXPECT_NEAR(blob(Vec3::Zero(), 0.5), 15.0 / pi, 1e-14);
}

TEST(Blob, UnitMass) {
  for (double eps : {0.1, 0.3, 1.0}) EXPECT_NEAR(blob_mass(eps), 1.0, 1e-8) << "eps=" << eps;
}

TEST(Blob, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(blob(Vec3::Zero(), 0.0), InvalidParameter);
  EXPECT_THROW(blob(Vec3::Zero(), -1.0), InvalidParameter);
  EXPECT_THROW(reg_stokeslet(Vec3::Zero(), Vec3::UnitX(), 0.0), InvalidParameter);
  EXPECT_THROW(reg_pressure(Vec3::Zero(), Vec3::UnitX(), std::nan("")), InvalidParameter);
}

TEST(Oseen, Values) {
  Mat3 s = singular_stokeslet(Vec3(1, 0, 0), Vec3::Zero());
  EXPECT_TRUE(s.isApprox(Vec3(2, 1, 1).asDiagonal().toDenseMatrix(), 1e-15));
  s = singular_stokeslet(Vec3(0, 2, 0), Vec3::Zero());
  EXPECT_TRUE(s.isApprox(Vec3(0.5, 1, 0.5).asDiagonal().toDenseMatrix(), 1e-15));
  s = singular_stokeslet(Vec3(2, 3, 4), Vec3(1, 2, 3));
  const long double r = std::sqrt(3.0L);
  EXPECT_NEAR(s(0, 1), static_cast<double>(1 / (r * r * r)), 1e-15);
  EXPECT_NEAR(s(0, 1), 0.19245008972987526, 1e-15);
  EXPECT_NEAR(s(2, 2), static_cast<double>(1 / r + 1 / (r * r * r)), 1e-15);
}

TEST(Oseen, CoincidentPointsThrow) {
  EXPECT_THROW(singular_stokeslet(Vec3(1, 2, 3), Vec3(1, 2, 3)), SingularEvaluation);
  EXPECT_NO_THROW(singular_stokeslet(Vec3(1, 2, 3), Vec3(1, 2, 3 + 1e-9)));
}

TEST(RegStokeslet, DiagonalLimit) {
  for (double eps : {0.01, 0.5, 3.0}) {
    const Vec3 x(0.3, -1.2, 7.0);
    const Mat3 s = reg_stokeslet(x, x, eps);
    EXPECT_LE((s - (2.0 / eps) * Mat3::Identity()).norm(), 4 * std::numeric_limits<double>::epsilon() * (2.0 / eps));
  }
  EXPECT_TRUE(reg_stokeslet(Vec3::Zero(), Vec3::Zero(), 0.5).isApprox(4.0 * Mat3::Identity(), 1e-15));
}

TEST(RegStokeslet, SmallEpsilonReducesToOseen) {
  const Mat3 s = reg_stokeslet(Vec3(1, 0, 0), Vec3::Zero(), 1e-8);
  EXPECT_TRUE(s.isApprox(Vec3(2, 1, 1).asDiagonal().toDenseMatrix(), 1e-12));
}

TEST(RegStokeslet, ClosedFormEntry) {
  const Mat3 s = reg_stokeslet(Vec3(1, 2, 3), Vec3::Zero(), 0.5);
  const long double d = 14.25L;
  EXPECT_NEAR(s(0, 1), static_cast<double>(2 / (d * std::sqrt(d))), 1e-16);
  EXPECT_NEAR(s(0, 1), 0.037178, 5e-6);
  EXPECT_NEAR(s(2, 2), static_cast<double>((14 + 0.5L + 9) / (d * std::sqrt(d))), 1e-15);
}

TEST(RegStokeslet, SecondOrderConvergence) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 x(u(rng), u(rng), u(rng)), y(u(rng), u(rng), u(rng));
    const double r = (x - y).norm();
    const Mat3 S = singular_stokeslet(x, y);
    for (double eps : {r / 10, r / 40}) {
      const double e1 = (reg_stokeslet(x, y, eps) - S).norm();
      const double e2 = (reg_stokeslet(x, y, eps / 2) - S).norm();
      EXPECT_NEAR(e1 / e2, 4.0, 0.2) << "r=" << r << " eps=" << eps;
    }
  }
}

TEST(RegStokeslet, ExactSymmetries) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 x(u(rng), u(rng), u(rng)), y(u(rng), u(rng), u(rng));
    const double eps = std::abs(u(rng)) + 1e-3;
    const Mat3 a = reg_stokeslet(x, y, eps);
    const Mat3 b = reg_stokeslet(y, x, eps);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, a.transpose());
  }
}

TEST(RegPressure, Values) {
  EXPECT_EQ(reg_pressure(Vec3(1, 1, 1), Vec3(1, 1, 1), 0.3), Vec3::Zero());
  // The regularised form tends to 2 r / |r|^3: it carries the 1/(8 pi) pressure
  // normalisation, against 1/(4 pi) for the singular P_k = r_k / |r|^3.
  EXPECT_TRUE(reg_pressure(Vec3(1, 0, 0), Vec3::Zero(), 1e-9).isApprox(Vec3(2, 0, 0), 1e-12));
  const Vec3 p = reg_pressure(Vec3(0, 0, 2), Vec3::Zero(), 1.0);
  EXPECT_NEAR(p.z(), static_cast<double>(2 * 13 / std::pow(5.0L, 2.5L)), 1e-15);
  EXPECT_NEAR(p.z(), 0.46511, 1e-5);
  EXPECT_EQ(p.x(), 0.0);
}

TEST(RegPressure, Odd) {
  const Vec3 x(0.4, -0.2, 1.1), y(-0.3, 0.9, 0.2);
  EXPECT_TRUE(reg_pressure(x, y, 0.2).isApprox(-reg_pressure(y, x, 0.2), 1e-15));
}
