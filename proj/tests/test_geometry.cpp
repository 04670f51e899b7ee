#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "regstokes/geometry.hpp"

using namespace regstokes;

namespace {

constexpr double pi = std::numbers::pi;

double brute_min(const std::vector<Vec3>& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double dx = p[i][0] - p[j][0], dy = p[i][1] - p[j][1], dz = p[i][2] - p[j][2];
      best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
  return best;
}

// Prolate spheroid area by composite Simpson over the polar angle of the x-axis parametrisation x = a cos t, rho = c sin t.
double spheroid_area_quadrature(double a, double c) {
  const int n = 200000;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = pi * i / n;
    const double f = 2 * pi * c * std::sin(t) * std::sqrt(a * a * std::sin(t) * std::sin(t) + c * c * std::cos(t) * std::cos(t));
    s += (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2)) * f;
  }
  return s * pi / n / 3;
}

void expect_valid(const SurfaceDiscretisation& d, const Shape& shape, double area_tol = 0.005) {
  ASSERT_EQ(d.points.size(), d.weights.size());
  for (const double w : d.weights) EXPECT_GT(w, 0.0);
  EXPECT_NEAR(d.total_weight() / surface_area(shape), 1.0, area_tol);
  double worst = 0.0;
  for (const auto& p : d.points) worst = std::max(worst, std::abs(surface_residual(shape, p)));
  EXPECT_LE(worst, 1e-12);
  EXPECT_EQ(d.shape_tag, shape_tag(shape));
}

}  // namespace

TEST(MinSpacing, SmallSets) {
  std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}};
  EXPECT_EQ(min_spacing(p), 1.0);
  p = {{0, 0, 0}, {3, 4, 0}, {0, 0, 2}};
  EXPECT_EQ(min_spacing(p), 2.0);
  p = {{0, 0, 0}};
  EXPECT_THROW(min_spacing(p), InvalidInput);
}

TEST(MinSpacing, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t n : {500u, 2000u, 6000u}) {
    std::vector<Vec3> p(n);
    for (auto& v : p) v = Vec3(u(rng), u(rng), u(rng));
    EXPECT_EQ(min_spacing(p), brute_min(p)) << n;
  }
  // clustered cloud with a near-duplicate pair forces the bucketed path to find tiny distances
  std::vector<Vec3> p(8000);
  for (auto& v : p) v = Vec3(u(rng), u(rng), 1e-3 * u(rng));
  p[4321] = p[17] + Vec3(1e-9, 0, 0);
  EXPECT_EQ(min_spacing(p), brute_min(p));
}

TEST(Sphere, CoarsestGridIsCubeCorners) {
  const auto d = discretise_sphere_grid(1);
  EXPECT_EQ(d.size(), 8u);
  expect_valid(d, Sphere{});
  for (const auto& p : d.points) EXPECT_NEAR(std::abs(p.x()), 1 / std::sqrt(3.0), 1e-15);
}

TEST(Sphere, CountsAreasAndSpacing) {
  for (int k : {2, 5, 8, 13}) {
    const auto d = discretise_sphere_grid(k);
    EXPECT_EQ(d.size(), static_cast<std::size_t>(6 * k * k + 2));
    expect_valid(d, Sphere{}, 1e-12);
    EXPECT_EQ(d.h, brute_min(d.points));
  }
}

TEST(Sphere, TargetSpacing) {
  const auto d = discretise_sphere(0.1);
  EXPECT_LE(d.h, 0.1);
  EXPECT_EQ(d.h, brute_min(d.points));
  // the next coarser grid would miss the target
  const int k = static_cast<int>(std::lround(std::sqrt((d.size() - 2) / 6.0)));
  EXPECT_GT(discretise_sphere_grid(k - 1).h, 0.1);
  EXPECT_THROW(discretise_sphere(2.5), InvalidParameter);
  EXPECT_THROW(discretise_sphere(1e-4, DiscretisationLimits{1000}), ResourceError);
}

TEST(Sphere, Deterministic) {
  const auto a = discretise_sphere(0.2), b = discretise_sphere(0.2);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.weights, b.weights);
}

TEST(Spheroid, PolesAndSurface) {
  const auto d = discretise_spheroid(5, 1, 0.3);
  expect_valid(d, Spheroid{5, 1});
  EXPECT_EQ(d.points.front(), Vec3(5, 0, 0));
  EXPECT_EQ(d.points.back(), Vec3(-5, 0, 0));
  EXPECT_NEAR(std::sqrt(5.0 * 5.0 - 1.0) * std::cosh(std::acosh(5 / std::sqrt(24.0))), 5.0, 1e-12);
}

TEST(Spheroid, AreaMatchesQuadrature) {
  const double exact = spheroid_area_quadrature(5, 1);
  EXPECT_NEAR(exact, 50.19251, 1e-4);
  EXPECT_NEAR(surface_area(Spheroid{5, 1}), exact, 1e-9);
  for (double h : {0.5, 0.2, 0.1}) EXPECT_NEAR(discretise_spheroid(5, 1, h).total_weight(), exact, 1e-9 * exact);
}

TEST(Spheroid, RingCounts) {
  const double h = 0.25;
  const auto d = discretise_spheroid(5, 1, h);
  std::map<double, int> rings;
  for (const auto& p : d.points) ++rings[p.x()];
  const std::size_t n = rings.size();
  const double dnu = pi / (n - 1);
  std::size_t i = n - 1;  // map is ordered by x ascending, i.e. nu descending
  for (const auto& [x, m] : rings) {
    const double expected = (i == 0 || i == n - 1) ? 1 : std::ceil(2 * pi * 1.0 * std::sin(dnu * i) / h - 1e-12);
    EXPECT_EQ(m, expected) << "ring " << i;
    --i;
  }
  EXPECT_EQ(d.h, brute_min(d.points));
}

TEST(Spheroid, RejectsOblate) {
  EXPECT_THROW(discretise_spheroid(1, 1, 0.1), InvalidGeometry);
  EXPECT_THROW(discretise_spheroid(1, 2, 0.1), InvalidGeometry);
}

TEST(Torus, RingCountAndArea) {
  const auto d = discretise_torus(2.5, 1, 1.0);
  std::set<long long> rings;
  for (const auto& p : d.points) rings.insert(std::llround(1e9 * p.z()) * 1000003 + std::llround(1e6 * std::hypot(p.x(), p.y())));
  EXPECT_EQ(rings.size(), 7u);
  expect_valid(d, Torus{2.5, 1});
  EXPECT_NEAR(surface_area(Torus{2.5, 1}), 98.696, 1e-3);
}

TEST(Torus, SpacingAndPointCounts) {
  const double h = 0.25;
  const auto d = discretise_torus(2.5, 1, h);
  expect_valid(d, Torus{2.5, 1}, 1e-12);
  EXPECT_EQ(d.h, brute_min(d.points));
  const std::size_t n = static_cast<std::size_t>(std::ceil(2 * pi / h));
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) total += static_cast<std::size_t>(std::ceil(2 * pi * (2.5 + std::cos(2 * pi * i / n)) / h - 1e-12));
  EXPECT_EQ(d.size(), total);
  EXPECT_THROW(discretise_torus(1, 1, 0.1), InvalidGeometry);
}

TEST(Shapes, ParseRoundTrip) {
  for (const Shape s : {Shape{Sphere{}}, Shape{Spheroid{5, 1}}, Shape{Torus{2.5, 1}}, Shape{Torus{3.25, 0.5}}}) {
    EXPECT_EQ(shape_tag(parse_shape(shape_tag(s))), shape_tag(s));
  }
  EXPECT_EQ(shape_tag(parse_shape("torus")), "torus(R=2.5,r=1)");
  EXPECT_THROW(parse_shape("cube"), InvalidParameter);
  EXPECT_THROW(parse_shape("torus(q=1)"), InvalidParameter);
}

TEST(NearestPair, ReductionCase) {
  const auto p = make_nearest_pair(Torus{2.5, 1}, 0.5, 1.0, 0.0);
  EXPECT_EQ(p.force.points, p.quad.points);
  EXPECT_EQ(p.force.weights, p.quad.weights);
  EXPECT_THROW(make_nearest_pair(Sphere{}, 0.3, 0.5, 0.1), InvalidParameter);
}

TEST(NearestPair, FilterRemovesExactlyTheClosePoints) {
  for (const Shape shape : {Shape{Sphere{}}, Shape{Spheroid{5, 1}}, Shape{Torus{2.5, 1}}}) {
    const double hf = std::holds_alternative<Sphere>(shape) ? 0.3 : 0.6;
    const auto pair = make_nearest_pair(shape, hf, 4.0, 0.1);
    const auto full = discretise(shape, hf / 4.0);
    const double thr = 0.1 * hf / 4.0;
    EXPECT_EQ(pair.filter_distance, thr);
    std::vector<Vec3> kept;
    for (const auto& q : full.points) {
      double d = std::numeric_limits<double>::infinity();
      for (const auto& f : pair.force.points) d = std::min(d, (q - f).norm());
      if (d > thr) kept.push_back(q);
    }
    EXPECT_EQ(kept, pair.quad.points) << shape_tag(shape);
    EXPECT_NEAR(pair.quad.total_weight(), surface_area(shape), 1e-9 * surface_area(shape));
  }
}

TEST(Transform, RigidMotion) {
  const auto d = discretise_torus(2.5, 1, 0.8);
  const Mat3 B = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Vec3 x0(1, -2, 0.5);
  const auto t = rigidly_transformed(d, x0, B);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_TRUE(t.points[i].isApprox(x0 + B * d.points[i], 1e-15));
  EXPECT_EQ(t.weights, d.weights);
}

TEST(Io, RoundTrip) {
  const auto d = discretise_spheroid(5, 1, 0.7);
  std::stringstream ss;
  write_discretisation(ss, d);
  const auto e = read_discretisation(ss);
  EXPECT_EQ(e.points, d.points);
  EXPECT_EQ(e.weights, d.weights);
  EXPECT_EQ(e.h, d.h);
  EXPECT_EQ(e.shape_tag, d.shape_tag);
}
