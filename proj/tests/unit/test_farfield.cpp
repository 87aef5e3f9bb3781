#include <gtest/gtest.h>

#include <cmath>

#include "freeform/error.hpp"
#include "freeform/farfield.hpp"
#include "freeform/geometry.hpp"
#include "freeform/tracer.hpp"

using namespace freeform;

namespace {

const Domain kDisk = Domain::disk({0, 0}, 1.0);
const Media kGlass{1.0, 1.52, 1.0};
const Media kWaterToAir{1.33, 1.7, 1.0};

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;  // nothing thrown
}

}  // namespace

TEST(FarField, FlatWindowMatchesVerticalFormula) {
  const Grid g(kDisk, 17);
  const double u0 = 1.0;
  const double C = 3.0;
  const auto u = GraphSurface::flat(u0, kDisk);
  const LensDesign a = design_far_field(u, constant_field(kE3, kDisk), kE3, C, kGlass, g);
  const double k1 = kGlass.kappa1(), k2 = kGlass.kappa2();
  // Same lens from the vertical formula, whose constant has the opposite sign.
  const double expected = -((1 - k1 * k2) * u0 - C) / (k1 - k1 * k2);
  const LensDesign b = vertical_design(u, -C, kGlass, g);
  for (std::size_t k : g.active_indices()) {
    const DesignNode& n = a.nodes.values[k];
    EXPECT_NEAR(n.d, expected, 1e-14);
    EXPECT_NEAR(b.nodes.values[k].d, expected, 1e-14);
    EXPECT_NEAR(n.f.z, u0 + expected, 1e-14);
    EXPECT_LT(norm(n.m1 - kE3), 1e-15);
  }
  EXPECT_TRUE(a.collimated);
}

TEST(FarField, PointSourceLensCollimates) {
  const Grid g(kDisk, 33);
  const IncidentField f = point_source_field({0, 0, -1}, kDisk);
  const auto u = GraphSurface::from_expression(Expression::parse("1 + 0.05*(x1^2 + x2^2)"), kDisk);
  for (const Media& m : {kGlass, kWaterToAir}) {
    const LensDesign lens = design_far_field(u, f, kE3, 4.0, m, g);
    EXPECT_LT(lens.tangency_residual, 1e-8);
    EXPECT_LT(lens.eikonal_spread, 1e-8);
    EXPECT_GE(lens.min_denominator, m.kappa1() * (1 - m.kappa2()) - 1e-12);
    EXPECT_GT(lens.min_thickness(), 0.0);
    const auto sources = sample_points(kDisk, 500);
    TraceTarget t;
    t.direction = kE3;
    const TraceReport r = trace_field(f, sources, lens_elements(lens, SheetMode::Exact), t);
    EXPECT_EQ(r.failures, 0u);
    EXPECT_LT(r.max_direction_error, 1e-8);
  }
}

TEST(FarField, TiltedTargetDirection) {
  const Grid g(kDisk, 33);
  const IncidentField f = point_source_field({0.1, 0, -2}, kDisk);
  const auto u = GraphSurface::flat(0.5, kDisk);
  const Vec3 w = normalized(Vec3{0.2, 0.1, 1.0});
  const LensDesign lens = design_far_field(u, f, w, 3.0, kGlass, g);
  EXPECT_FALSE(lens.collimated);
  TraceTarget t;
  t.direction = w;
  const TraceReport r =
      trace_field(f, sample_points(kDisk, 300), lens_elements(lens, SheetMode::Exact), t);
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_direction_error, 1e-8);
}

TEST(FarField, SwirlIsRejected) {
  const Grid g(kDisk, 17);
  EXPECT_EQ(code_of([&] {
              design_far_field(GraphSurface::flat(1, kDisk), swirl_field(0.3, kDisk), kE3, 3.0,
                               kGlass, g);
            }),
            ErrorCode::CurlViolation);
}

TEST(FarField, ThicknessAndCompatibilityErrors) {
  const Grid g(kDisk, 17);
  const IncidentField f = constant_field(kE3, kDisk);
  const auto u = GraphSurface::flat(1.0, kDisk);
  EXPECT_EQ(code_of([&] { design_far_field(u, f, kE3, -5.0, kGlass, g); }),
            ErrorCode::NonpositiveThickness);
  // Target direction so oblique that m1.w < kappa2.
  const Vec3 w = normalized(Vec3{3, 0, 1});
  EXPECT_EQ(code_of([&] { design_far_field(u, f, w, 5.0, kGlass, g); }),
            ErrorCode::CompatibilityViolation);
  EXPECT_EQ(code_of([&] { design_far_field(u, f, kE3, 5.0, Media{1.0, 0.9, 1.0}, g); }),
            ErrorCode::InvalidInput);
}

TEST(FarField, AdmissibleIntervalIsSharp) {
  const Grid g(kDisk, 17);
  const IncidentField f = point_source_field({0, 0, -1}, kDisk);
  const auto u = GraphSurface::flat(1.0, kDisk);
  const LensDesign lens = design_far_field(u, f, kE3, 4.0, kGlass, g);
  const double lo = lens.admissible_C.lo;
  EXPECT_NO_THROW(design_far_field(u, f, kE3, lo + 1e-9, kGlass, g));
  EXPECT_THROW(design_far_field(u, f, kE3, lo - 1e-9, kGlass, g), Error);
}

TEST(OrthogonalFront, ConstantFieldGivesPlane) {
  const Grid g(kDisk, 17);
  const IncidentField f = constant_field(kE3, kDisk);
  const Potential h = build_potential(f, {0, 0}, g);
  const LensDesign lens = orthogonal_front(f, h, 0.7, kE3, 3.0, kGlass, g);
  for (std::size_t k : g.active_indices()) {
    const DesignNode& n = lens.nodes.values[k];
    EXPECT_DOUBLE_EQ(n.P.z, 0.7);
    EXPECT_EQ(n.m1, kE3);
    EXPECT_DOUBLE_EQ(n.lambda1, 1 - kGlass.kappa1());
  }
}

TEST(OrthogonalFront, PointSourceSphereAndOrthogonality) {
  const Grid g(kDisk, 33);
  const Vec3 V{0, 0, -1};
  const IncidentField f = point_source_field(V, kDisk);
  const Potential h = build_potential(f, {0, 0}, g);
  const double Ct = 1.5;
  const LensDesign lens = orthogonal_front(f, h, Ct, kE3, 4.0, kGlass, g);
  const auto& sigma1 = std::get<ParametricSheet>(lens.sigma1);
  const double step = 1e-6;
  for (std::size_t k : g.active_indices()) {
    const Vec2 x = g.point(k);
    const DesignNode& n = lens.nodes.values[k];
    EXPECT_NEAR(norm(n.P - V), Ct + norm(V), 1e-10);
    for (int i = 0; i < 2; ++i) {
      const Vec2 dx = i == 0 ? Vec2{step, 0} : Vec2{0, step};
      const Vec3 t = (*sigma1.evaluate(x + dx) - *sigma1.evaluate(x - dx)) / (2 * step);
      EXPECT_NEAR(dot(n.e, t), 0.0, 1e-9);
    }
    // Closed form agrees with the general thickness formula at the same entry point.
    const double k1 = kGlass.kappa1(), k2 = kGlass.kappa2();
    const double general = (4.0 - n.h + dot(n.e, Vec3(x, 0)) - dot(n.e - k1 * k2 * kE3, n.P)) /
                           (k1 - k2 * dot(kE3, n.e - n.lambda1 * n.nu1));
    EXPECT_NEAR(n.d, general, 1e-12);
  }
  TraceTarget t;
  t.direction = kE3;
  const TraceReport r =
      trace_field(f, sample_points(kDisk, 300), lens_elements(lens, SheetMode::Exact), t);
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_direction_error, 1e-8);
}

TEST(OrthogonalFront, NonpositiveLambda) {
  const Grid g(kDisk, 9);
  const IncidentField f = point_source_field({0, 0, -1}, kDisk);
  const Potential h = build_potential(f, {0, 0}, g);
  EXPECT_EQ(code_of([&] { orthogonal_front(f, h, 0.2, kE3, 4.0, kGlass, g); }),
            ErrorCode::NonpositiveLambda);
}

TEST(Vertical, DeltaExamplesAndIdentity) {
  EXPECT_NEAR(vertical_delta({0, 0}, 1.52), -0.52, 1e-15);
  for (double s : {0.0, 0.1, 0.5, 1.0, 3.0}) {
    const Vec2 du{s, -0.5 * s};
    EXPECT_LT(vertical_identity_residual(du, 1.52), 1e-12);
    const double delta = vertical_delta(du, 1.52);
    const Vec3 m1 = Vec3(delta * du, 1 - delta) / 1.52;
    EXPECT_NEAR(norm(m1), 1.0, 1e-12);
  }
}

TEST(Vertical, SameIndexThickness) {
  const Grid g(kDisk, 17);
  const auto u = GraphSurface::from_expression(Expression::parse("2 - 0.1*(x1^2+x2^2)"), kDisk);
  const LensDesign lens = vertical_design(u, -1.0, kGlass, g);
  for (std::size_t k : g.active_indices()) {
    const DesignNode& n = lens.nodes.values[k];
    EXPECT_NEAR(n.d, 1.0 / (kGlass.kappa1() - n.m1.z), 1e-13);
  }
  EXPECT_EQ(code_of([&] { vertical_design(u, 0.5, kGlass, g); }),
            ErrorCode::NonpositiveThickness);
}

TEST(Vertical, SteepFaceViolatesCondition) {
  const Grid g(kDisk, 17);
  const auto u = GraphSurface::from_expression(Expression::parse("2 + 3*x1"), kDisk);
  // With n3 > n1 the refracted ray can fall below the compatibility cone.
  EXPECT_EQ(code_of([&] { vertical_design(u, -20.0, Media{1.0, 1.5, 1.4}, g); }),
            ErrorCode::CompatibilityViolation);
}

TEST(Mirrors, FlatPair) {
  const Grid g(kDisk, 17);
  const double u0 = 3.0, C = 2.0;
  const MirrorDesign m = design_far_field_mirrors(GraphSurface::flat(u0, kDisk),
                                                  constant_field(kE3, kDisk), kE3, C, g);
  for (std::size_t k : g.active_indices()) {
    EXPECT_DOUBLE_EQ(m.nodes.values[k].d, C / 2);
    EXPECT_DOUBLE_EQ(m.nodes.values[k].f.z, u0 - C / 2);
  }
}

TEST(Mirrors, PointSourceReflectsIntoW) {
  const Grid g(kDisk, 33);
  const IncidentField f = point_source_field({0, 0, -1}, kDisk);
  const auto u = GraphSurface::from_expression(Expression::parse("3 + 0.05*(x1^2+x2^2)"), kDisk);
  const MirrorDesign m = design_far_field_mirrors(u, f, kE3, 3.0, g);
  EXPECT_LT(m.tangency_residual, 1e-8);
  EXPECT_LT(m.eikonal_spread, 1e-8);
  TraceTarget t;
  t.direction = kE3;
  const TraceReport r =
      trace_field(f, sample_points(kDisk, 300), mirror_elements(m, SheetMode::Exact), t);
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_direction_error, 1e-8);
}

TEST(Mirrors, DegenerateDirection) {
  const Grid g(kDisk, 9);
  const double eps = 0.05;
  const auto u = GraphSurface::from_expression(Expression::parse("1 + 0.05*x1"), kDisk);
  // w equal to the reflected direction everywhere: 1 - w.m1 = 0.
  const Vec3 w = reflect(kE3, graph_normal({eps, 0}));
  EXPECT_EQ(code_of([&] {
              design_far_field_mirrors(u, constant_field(kE3, kDisk), w, 2.0, g);
            }),
            ErrorCode::DegenerateDirection);
  EXPECT_EQ(code_of([&] {
              design_far_field_mirrors(u, swirl_field(0.3, kDisk), kE3, 2.0, g);
            }),
            ErrorCode::CurlViolation);
}

TEST(Injectivity, ShallowDesignIsInjective) {
  const Domain d = Domain::disk({0, 0}, 0.5);
  const auto u = GraphSurface::from_expression(Expression::parse("0.2 + 0.01*(x1^2+x2^2)"), d);
  for (std::size_t n : {17u, 33u}) {
    const Grid g(d, n);
    const LensDesign lens = vertical_design(u, -0.25, kGlass, g);
    const LipschitzEstimate L = estimate_lipschitz(u, g);
    EXPECT_NEAR(L.LDu, 0.02, 1e-12);
    const InjectivityBound b = injectivity_check(lens, L.Lu, L.LDu);
    EXPECT_TRUE(b.analytic_injective) << "alpha " << b.alpha_bound << " beta " << b.beta_bound;
    EXPECT_TRUE(b.verdict_grid);
    EXPECT_GT(b.min_ratio, 0.5);
  }
}

TEST(Injectivity, RequiresCollimatedDesign) {
  const Grid g(kDisk, 9);
  const LensDesign lens = design_far_field(GraphSurface::flat(1, kDisk),
                                           point_source_field({0, 0, -1}, kDisk), kE3, 4, kGlass, g);
  EXPECT_EQ(code_of([&] { injectivity_check(lens, 0, 0); }), ErrorCode::NotCollimated);
  EXPECT_GT(pairwise_min_ratio(lens.sigma2), 0.0);
}
