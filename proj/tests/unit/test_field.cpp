#include <gtest/gtest.h>

#include <cmath>

#include "freeform/error.hpp"
#include "freeform/field.hpp"

using namespace freeform;

namespace {

const Domain kSquare = Domain::rectangle({-1.0, -1.0}, {1.0, 1.0});

}  // namespace

TEST(PointSource, Examples) {
  const IncidentField f = point_source_field({0, 0, -1}, kSquare);
  EXPECT_EQ(f({0, 0}), kE3);
  const Vec3 e = f({1, 0});
  EXPECT_NEAR(e.x, 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(e.z, 1 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(point_source_field({0, 0, 0.5}, kSquare), Error);
  f.validate(Grid(kSquare, 33));
}

TEST(PointSource, AnalyticJacobianMatchesDifferences) {
  const IncidentField f = point_source_field({0.2, -0.1, -1.3}, kSquare);
  for (const Vec2 x : {Vec2{0.1, 0.4}, Vec2{-0.8, 0.9}}) {
    const Mat2 a = f.jacobian(x);
    const Mat2 n = f.jacobian_fd(x, 1e-5);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) EXPECT_NEAR(a(i, j), n(i, j), 1e-9);
  }
}

TEST(CurlCheck, ConservativeFieldsPass) {
  const Grid g(kSquare, 65);
  const CurlReport c = curl_check(constant_field(kE3, kSquare), g);
  EXPECT_EQ(c.max_residual, 0.0);
  EXPECT_TRUE(c.conservative);
  CurlOptions o;
  o.h_fd = 1e-4;
  const CurlReport p = curl_check(point_source_field({0, 0, -1}, kSquare), g, o);
  EXPECT_LT(p.max_residual, 1e-8);
  EXPECT_TRUE(p.conservative);
}

TEST(CurlCheck, SwirlIsRejected) {
  const Grid g(kSquare, 65);
  const double s = 0.3;
  const IncidentField f = swirl_field(s, kSquare);
  const CurlReport c = curl_check(f, g);
  EXPECT_FALSE(c.conservative);
  EXPECT_GT(c.max_residual, 1e-3);
  // At the origin the analytic curl of the normalized swirl is 2s.
  const std::size_t k = g.nearest({0, 0});
  EXPECT_NEAR(c.samples.values[k], 2 * s, 1e-8);
}

TEST(CurlCheck, GridOutsideDomainIsAnError) {
  const Grid g(Domain::rectangle({-2, -2}, {2, 2}), 9);
  try {
    curl_check(constant_field(kE3, kSquare), g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DomainError);
  }
}

TEST(Potential, ConstantFieldGivesZero) {
  const Grid g(kSquare, 17);
  const Potential h = build_potential(constant_field(kE3, kSquare), {0, 0}, g);
  EXPECT_EQ(h({0.3, -0.8}), 0.0);
}

TEST(Potential, PointSourceMatchesDistance) {
  const Grid g(kSquare, 33);
  const Potential h = build_potential(point_source_field({0, 0, -1}, kSquare), {0, 0}, g);
  EXPECT_LT(h.max_path_residual(), 1e-8);
  for (std::size_t k : g.active_indices()) {
    const Vec2 x = g.point(k);
    EXPECT_NEAR(h(x), std::sqrt(norm2(x) + 1.0) - 1.0, 1e-13);
  }
}

TEST(Potential, GradientMatchesFieldOnInteriorNodes) {
  const Domain d = Domain::disk({0, 0}, 1.0);
  const IncidentField f = gradient_field(Expression::parse("0.2*x1*x2 + 0.1*x1^2"), d);
  const Grid g(d, 33);
  const Potential h = build_potential(f, {0, 0}, g);
  const double step = 1e-4;
  for (std::size_t k : g.active_indices()) {
    const Vec2 x = g.point(k);
    if (norm(x) > 0.9) continue;
    const Vec2 e = f.planar(x);
    const double g1 = (h(x + Vec2{step, 0}) - h(x - Vec2{step, 0})) / (2 * step);
    const double g2 = (h(x + Vec2{0, step}) - h(x - Vec2{0, step})) / (2 * step);
    EXPECT_LE(std::abs(g1 - e.x1), 10 * step * step);
    EXPECT_LE(std::abs(g2 - e.x2), 10 * step * step);
  }
}

TEST(Potential, SwirlFailsPathIndependence) {
  const Grid g(kSquare, 17);
  try {
    build_potential(swirl_field(0.3, kSquare), {0, 0}, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotConservative);
  }
}

TEST(Field, ValidateRejectsNonUnitOrDownward) {
  const Grid g(kSquare, 5);
  IncidentField bad("bad", kSquare, [](const Vec2&) { return Vec3{0, 0, 2}; });
  EXPECT_THROW(bad.validate(g), Error);
  EXPECT_THROW(constant_field({0, 0, -1}, kSquare), Error);
}
