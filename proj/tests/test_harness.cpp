#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "regstokes/harness.hpp"
#include "regstokes/reference.hpp"

using namespace regstokes;

namespace {

SweepConfig sphere_sweep(std::vector<double> eps, std::vector<double> h) {
  SweepConfig c;
  c.shape = Sphere{};
  c.method = Method::ny;
  c.eps = std::move(eps);
  c.h = std::move(h);
  return c;
}

ResultRow row_at(double h, double err) {
  ResultRow r;
  r.h = h;
  r.rel_error = err;
  return r;
}

void expect_same(const std::optional<double>& a, const std::optional<double>& b) {
  ASSERT_EQ(a.has_value(), b.has_value());
  if (a) {
    EXPECT_EQ(*a, *b);
  }
}

}  // namespace

TEST(Sweep, SingleCellMatchesDirectComputation) {
  const auto rows = run_sweep(sphere_sweep({0.2}, {0.4}));
  ASSERT_EQ(rows.size(), 1u);
  const auto& r = rows[0];
  EXPECT_EQ(r.status, CellStatus::ok);
  const auto d = discretise_sphere(0.4);
  const double direct = relative_error_2norm(grand_resistance(d, RegParam{0.2, 1}), analytic_sphere_grm());
  EXPECT_NEAR(*r.rel_error, direct, 1e-14);
  EXPECT_EQ(r.h, d.h);
  EXPECT_EQ(r.sdof, d.sdof());
  EXPECT_EQ(r.shape, "sphere");
  EXPECT_EQ(r.method, "ny");
  EXPECT_NEAR(*r.reference, 8 * std::numbers::pi, 1e-12);
  EXPECT_GE(r.wall_seconds, 0.0);
}

TEST(Sweep, OrderedAndDeduplicated) {
  const auto rows = run_sweep(sphere_sweep({0.3, 0.1, 0.3}, {0.5, 0.4, 0.5}));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].h_target, 0.4);
  EXPECT_EQ(rows[0].eps1, 0.1);
  EXPECT_EQ(rows[1].eps1, 0.3);
  EXPECT_EQ(rows[3].h_target, 0.5);
}

TEST(Sweep, WorkerCountDoesNotChangeResults) {
  auto cfg = sphere_sweep({0.1, 0.2, 0.4}, {0.3, 0.5});
  cfg.method = Method::nyr;
  const auto serial = run_sweep(cfg);
  cfg.workers = 8;
  const auto parallel = run_sweep(cfg);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    expect_same(serial[i].value, parallel[i].value);
    expect_same(serial[i].rel_error, parallel[i].rel_error);
    EXPECT_EQ(serial[i].eps3, parallel[i].eps3);
  }
}

TEST(Sweep, NearSingularCellIsIsolated) {
  const auto rows = run_sweep(sphere_sweep({0.2, 1000}, {0.062}));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].status, CellStatus::ok);
  EXPECT_TRUE(rows[0].rel_error.has_value());
  EXPECT_EQ(rows[1].status, CellStatus::near_singular);
  EXPECT_FALSE(rows[1].value.has_value());
  EXPECT_NE(rows[1].message.find("singular"), std::string::npos);
  EXPECT_FALSE(all_ok(rows));
}

TEST(Sweep, NearestCellsRecordQuadraturePoints) {
  auto cfg = sphere_sweep({1e-6}, {0.4});
  cfg.method = Method::nearest;
  const auto rows = run_sweep(cfg);
  ASSERT_EQ(rows[0].status, CellStatus::ok);
  ASSERT_TRUE(rows[0].quad_points.has_value());
  EXPECT_GT(*rows[0].quad_points, rows[0].sdof / 3);
  EXPECT_LT(*rows[0].rel_error, 0.06);
}

TEST(Sweep, InvalidConfigurations) {
  auto torus = sphere_sweep({0.2}, {0.5});
  torus.shape = Torus{2.5, 1};
  EXPECT_THROW(run_sweep(torus), InvalidInput);
  auto z = sphere_sweep({0.2}, {0.5});
  z.observable = Observable::torus_z;
  z.reference = ReferenceSource::none;
  EXPECT_THROW(run_sweep(z), InvalidInput);
  EXPECT_THROW(run_sweep(sphere_sweep({}, {0.5})), InvalidInput);
  EXPECT_THROW(run_sweep(sphere_sweep({-1}, {0.5})), InvalidParameter);
  auto rule = sphere_sweep({0.2}, {0.5});
  rule.method = Method::nyr;
  rule.rule.multipliers = {1, 1, 2};
  EXPECT_THROW(run_sweep(rule), InvalidRule);
}

TEST(TorusSweep, ReferenceFileAndNyrModes) {
  const auto path = std::filesystem::temp_directory_path() / "regstokes_test_torus.ref";
  ReferenceOptions ro;
  ro.t_end = 5.0;
  const auto rec = nearest_reference_run(Torus{2.5, 1}, 0.8, RegParam{1e-4, 1}, ro);
  EXPECT_EQ(rec.observable, "torus_z");
  EXPECT_LT(rec.value, 0.0);
  {
    std::ofstream out(path);
    write_reference(out, rec);
  }
  SweepConfig cfg;
  cfg.shape = Torus{2.5, 1};
  cfg.method = Method::nyr;
  cfg.eps = {0.3};
  cfg.h = {0.8};
  cfg.t_end = 5.0;
  cfg.observable = Observable::torus_z;
  cfg.reference = ReferenceSource::file;
  cfg.reference_file = path.string();
  const auto per_step = run_sweep(cfg);
  ASSERT_EQ(per_step[0].status, CellStatus::ok) << per_step[0].message;
  EXPECT_EQ(*per_step[0].reference, rec.value);
  EXPECT_NEAR(*per_step[0].rel_error, std::abs(*per_step[0].value - rec.value) / std::abs(rec.value), 1e-15);
  cfg.nyr_post_hoc = true;
  const auto post_hoc = run_sweep(cfg);
  // U is constant under axial load, so both modes extrapolate the same linear quantity
  EXPECT_NEAR(*post_hoc[0].value, *per_step[0].value, 1e-8 * std::abs(*per_step[0].value));

  cfg.shape = Torus{3, 1};
  EXPECT_THROW(run_sweep(cfg), InvalidInput);
  std::filesystem::remove(path);
}

TEST(Csv, RoundTripIsExact) {
  auto cfg = sphere_sweep({0.1, 0.2}, {0.5});
  cfg.method = Method::nyr;
  auto rows = run_sweep(cfg);
  rows.push_back(rows[0]);
  rows.back().status = CellStatus::failed;
  rows.back().value = rows.back().reference = rows.back().rel_error = std::nullopt;
  rows.back().message = "a \"quoted\", message";
  rows.back().quad_points = 1234;
  std::stringstream ss;
  write_csv(ss, cfg, rows);
  const auto table = read_csv(ss);
  ASSERT_EQ(table.rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto &a = rows[i], &b = table.rows[i];
    EXPECT_EQ(a.shape, b.shape);
    EXPECT_EQ(a.method, b.method);
    EXPECT_EQ(a.eps1, b.eps1);
    expect_same(a.eps2, b.eps2);
    expect_same(a.eps3, b.eps3);
    EXPECT_EQ(a.h_target, b.h_target);
    EXPECT_EQ(a.h, b.h);
    EXPECT_EQ(a.sdof, b.sdof);
    EXPECT_EQ(a.quad_points, b.quad_points);
    EXPECT_EQ(a.observable, b.observable);
    expect_same(a.value, b.value);
    expect_same(a.reference, b.reference);
    expect_same(a.rel_error, b.rel_error);
    EXPECT_EQ(a.wall_seconds, b.wall_seconds);
    EXPECT_EQ(a.status, b.status);
    EXPECT_EQ(a.message, b.message);
  }
  EXPECT_NE(table.config_line.find("method=nyr"), std::string::npos);
  std::stringstream bad("shape,method\n");
  EXPECT_THROW(read_csv(bad), InvalidInput);
}

TEST(Config, RoundTrip) {
  SweepConfig cfg;
  cfg.shape = Spheroid{5, 1};
  cfg.method = Method::nearest;
  cfg.eps = {1e-6, 0.25};
  cfg.h = {0.1, 0.30000000000000004};
  cfg.rule = ExtrapolationRule::parse("1,1.5,2");
  cfg.workers = 3;
  cfg.t_end = 12.5;
  cfg.quad_refine = 3;
  cfg.drop_empty = true;
  cfg.solve.output_tolerance = 0;
  std::stringstream ss;
  write_config(ss, cfg);
  const auto back = read_config(ss);
  EXPECT_EQ(config_entries(back), config_entries(cfg));
  EXPECT_EQ(back.h, cfg.h);

  std::stringstream defaults("shape = torus(R=2.5,r=1)\n# comment\nmethod = nyr  # trailing\n");
  const auto d = read_config(defaults);
  EXPECT_EQ(d.observable, Observable::torus_z);
  EXPECT_EQ(d.reference, ReferenceSource::none);
  EXPECT_EQ(d.method, Method::nyr);

  for (const char* bad : {"colour = red\n", "eps = 0.1,x\n", "no equals sign\n", "nyr_mode = sometimes\n",
                          "shape = cube\n", "drop_empty = maybe\n"}) {
    std::stringstream b(bad);
    EXPECT_THROW(read_config(b), Error) << bad;
  }
}

TEST(ErrorDipTest, VShapedCurve) {
  const std::vector<ResultRow> rows{row_at(0.05, 0.2), row_at(0.07, 0.15), row_at(0.1, 0.02), row_at(0.2, 0.05),
                                    row_at(0.4, 0.1)};
  const auto dip = detect_error_dip(rows);
  EXPECT_EQ(dip.h_dip, 0.1);
  EXPECT_EQ(dip.min_error, 0.02);
  EXPECT_NEAR(dip.plateau_error, 0.175, 1e-15);
  EXPECT_FALSE(dip.monotone);
}

TEST(ErrorDipTest, MonotoneAndDegenerateInputs) {
  const std::vector<ResultRow> rows{row_at(0.05, 0.01), row_at(0.1, 0.02), row_at(0.2, 0.04), row_at(0.4, 0.08)};
  const auto dip = detect_error_dip(rows);
  EXPECT_TRUE(dip.monotone);
  EXPECT_EQ(dip.h_dip, 0.05);
  EXPECT_THROW(detect_error_dip({rows.begin(), rows.begin() + 3}), InvalidInput);
  auto repeated = rows;
  repeated.push_back(row_at(0.1, 0.5));
  EXPECT_THROW(detect_error_dip(repeated), InvalidInput);
  auto failed = rows;
  failed.push_back(row_at(0.8, 0.0));
  failed.back().status = CellStatus::near_singular;
  EXPECT_EQ(detect_error_dip(failed).min_error, 0.01);
}

TEST(RuleTable, SingleAndInvalidRules) {
  const auto table = compare_rules(Sphere{}, 0.2, 0.4, {ExtrapolationRule{}});
  ASSERT_EQ(table.size(), 1u);
  ASSERT_TRUE(table[0].error.has_value());
  const double direct = relative_error_2norm(nyr_grand_resistance(discretise_sphere(0.4), 0.2, ExtrapolationRule{}),
                                             analytic_sphere_grm());
  EXPECT_NEAR(*table[0].error, direct, 1e-14);
  EXPECT_THROW(compare_rules(Sphere{}, 0.2, 0.4, {ExtrapolationRule{{1, 1, 2}}}), InvalidRule);
  EXPECT_THROW(compare_rules(Sphere{}, 0.2, 0.4, {}), InvalidInput);
  std::ostringstream os;
  write_rule_table(os, table);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "rule,eps1,eps2,eps3,rel_error,status");
}

TEST(Reference, SphereRecordIsDeterministic) {
  const auto a = nearest_reference_run(Sphere{}, 0.4, RegParam{1e-6, 1});
  const auto b = nearest_reference_run(Sphere{}, 0.4, RegParam{1e-6, 1});
  EXPECT_EQ(a.observable, "grm_norm");
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.checksum, b.checksum);
  EXPECT_EQ(a.checksum.size(), 16u);
  EXPECT_NEAR(a.value, 8 * std::numbers::pi, 0.06 * 8 * std::numbers::pi);
}
