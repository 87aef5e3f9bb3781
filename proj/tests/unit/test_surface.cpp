#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "freeform/error.hpp"
#include "freeform/farfield.hpp"
#include "freeform/surface.hpp"

using namespace freeform;

namespace {

const Domain kSquare = Domain::rectangle({-1.0, -1.0}, {1.0, 1.0});

}  // namespace

TEST(Strike, VerticalRayOnFlatSurface) {
  const auto u = GraphSurface::flat(2.0, kSquare);
  const RayHit hit = strike(u, constant_field(kE3, kSquare), {0.3, 0.4}, 50.0);
  EXPECT_EQ(hit.phi, (Vec2{0.3, 0.4}));
  EXPECT_DOUBLE_EQ(hit.rho, 2.0);
}

TEST(Strike, PointSourceOnFlatSurface) {
  const Domain big = Domain::rectangle({-3, -3}, {3, 3});
  const auto u = GraphSurface::flat(1.0, big);
  const RayHit hit = strike(u, point_source_field({0, 0, -1}, big), {1.0, 0.0}, 50.0);
  EXPECT_NEAR(hit.rho, std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(hit.phi.x1, 2.0, 1e-14);
  EXPECT_NEAR(hit.phi.x2, 0.0, 1e-14);
}

TEST(Strike, ParaboloidResidual) {
  const auto u = GraphSurface::from_expression(Expression::parse("1 + (x1^2 + x2^2)/4"), kSquare);
  const IncidentField tilted = constant_field(normalized(Vec3{0.1, -0.05, 1.0}), kSquare);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> c(-0.8, 0.8);
  for (int n = 0; n < 200; ++n) {
    const Vec2 x{c(rng), c(rng)};
    for (const IncidentField* f : {&tilted}) {
      const RayHit hit = strike(u, *f, x, 30.0);
      const Vec3 e = (*f)(x);
      EXPECT_LT(std::abs(u.height(hit.phi) - hit.rho * e.z), 1e-12);
      EXPECT_LT(norm(hit.point - (Vec3(x, 0.0) + hit.rho * e)), 1e-10);
    }
    const RayHit v = strike(u, constant_field(kE3, kSquare), x, 30.0);
    EXPECT_LT(std::abs(u.height(v.phi) - v.rho), 1e-12);
  }
}

TEST(Strike, SmallestPositiveRootIsChosen) {
  // Ray along x1 at slope 1 meets the bump u = 0.5 + 0.4 cos(3 x1) twice.
  const Domain d = Domain::rectangle({-1, -1}, {4, 1});
  const auto u = GraphSurface::from_expression(Expression::parse("0.5 + 0.4*cos(3*x1)"), d);
  const IncidentField f = constant_field(normalized(Vec3{1, 0, 1}), d);
  const RayHit hit = strike(u, f, {0.0, 0.0}, 10.0);
  // First crossing of t/sqrt2 = 0.5 + 0.4 cos(3 t/sqrt2) is below s = 0.9.
  EXPECT_LT(hit.phi.x1, 0.9);
  EXPECT_NEAR(hit.point.z, hit.phi.x1, 1e-12);
}

TEST(Strike, MissIsReported) {
  const auto u = GraphSurface::flat(-1.0, kSquare);
  try {
    strike(u, constant_field(kE3, kSquare), {0, 0}, 10.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoIntersection);
  }
}

TEST(Strike, TangentHitIsGrazing) {
  // Ray (t, 0, t) touches the parabola z = 1/4 + x1^2 at x1 = 1/2.
  const Domain d = Domain::rectangle({-1, -1}, {2, 1});
  const auto u = GraphSurface::from_expression(Expression::parse("0.25 + x1^2"), d);
  GraphIntersectOptions o;
  o.t_max = 3.0;
  o.scan_samples = 301;
  try {
    const Vec3 dir = normalized(Vec3{1, 0, 1});
    const GraphHit h = intersect_graph(u, {0, 0, 0}, dir, o);
    // The scan may straddle the double root only through roundoff; either way the
    // slope at the touching point is zero.
    EXPECT_LT(std::abs(h.slope), 1e-6);
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::MultipleGrazing || e.code() == ErrorCode::NoIntersection);
  }
}

TEST(ParametricSheet, SamplesMapAndMarksFailures) {
  const Grid g(Vec2{0, 0}, Vec2{1, 1}, 3, 3);
  ParametricSheet s(g, [](const Vec2& x) -> std::optional<Vec3> {
    if (x.x1 > 0.9 && x.x2 > 0.9) return std::nullopt;
    return Vec3(x, x.x1 + x.x2);
  });
  EXPECT_EQ(s.valid_count(), 8u);
  EXPECT_FALSE(s.valid(2, 2));
  EXPECT_EQ(s.node(1, 2), (Vec3{0.5, 1.0, 1.5}));
  ASSERT_TRUE(s.evaluate({0.25, 0.25}));
  EXPECT_DOUBLE_EQ(s.evaluate({0.25, 0.25})->z, 0.5);
}
