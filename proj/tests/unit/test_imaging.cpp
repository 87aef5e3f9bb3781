#include <gtest/gtest.h>

#include <cmath>

#include "freeform/error.hpp"
#include "freeform/imaging.hpp"
#include "freeform/legendre.hpp"
#include "freeform/tracer.hpp"

using namespace freeform;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

const Domain kUnit = Domain::disk({0, 0}, 1.0);
const Mat2 kShear{{{{1.0, 0.3}, {0.0, 1.0}}}};

// Lens that magnifies by 2 between n = 1 media (the near-field magnification example).
constexpr double kK1 = 1.52;
constexpr double kC = -1.04;
const Domain kFig = Domain::disk({0, 0}, 0.7);

double sup_diff(const GraphSurface& a, const GraphSurface& b, const Grid& g) {
  double worst = 0.0;
  for (std::size_t k : g.active_indices()) {
    worst = std::max(worst, std::abs(a.height(g.point(k)) - b.height(g.point(k))));
  }
  return worst;
}

TraceTarget imaging_target(const ImagingMap& map) {
  TraceTarget t;
  t.plane = map.a();
  t.direction = kE3;
  auto m = std::make_shared<ImagingMap>(map);
  t.landing = [m](const Vec2& x) { return (*m)(x); };
  return t;
}

// Quasilinear example: n = 1.5 / 1.7 / 1.33, C = -1, delta0 = 2.
const Media kDown{1.5, 1.7, 1.33};

}  // namespace

TEST(MapChecks, SameIndexCatalog) {
  const Grid g(kUnit, 33);
  EXPECT_TRUE(check_map_same_index(ImagingMap::magnification(0.5), -3.0, kK1, g).pass);
  EXPECT_TRUE(check_map_same_index(ImagingMap::identity(), -3.0, kK1, g).pass);
  const CompatibilityReport shear =
      check_map_same_index(ImagingMap::affine(kShear, {0, 0}), -3.0, kK1, g);
  EXPECT_FALSE(shear.pass);
  EXPECT_GT(shear.combo_residual, 1e-2);
  // curl S = -beta everywhere.
  EXPECT_NEAR(shear.I.values[g.nearest({0.2, 0.1})], 0.3, 1e-8);
}

TEST(MapChecks, BoundViolation) {
  const Grid g(kUnit, 17);
  EXPECT_EQ(code_of([&] { check_map_same_index(ImagingMap::magnification(10.0), -1.0, kK1, g); }),
            ErrorCode::BoundViolation);
}

TEST(MapChecks, StrictCatalog) {
  const Grid g(kUnit, 33);
  EXPECT_TRUE(check_map_strict(ImagingMap::magnification(0.3), g).pass);
  EXPECT_TRUE(check_map_strict(ImagingMap::axis(Expression::parse("x1 + 0.1*sin(x1)")), g).pass);
  EXPECT_FALSE(check_map_strict(ImagingMap::affine(kShear, {0, 0}), g).pass);
  // Anisotropic magnification: curl S = 0 but S x D|S|^2 != 0.
  const Mat2 aniso{{{{1.2, 0.0}, {0.0, 1.5}}}};
  const CompatibilityReport r = check_map_strict(ImagingMap::affine(aniso, {0, 0}), g);
  EXPECT_FALSE(r.pass);
}

TEST(MapChecks, JacobianAgreesWithDifferences) {
  const Grid g(kUnit, 17);
  const ImagingMap m =
      ImagingMap::custom(Expression::parse("x1 + 0.2*x1*x2"), Expression::parse("x2 - 0.1*x1^2"));
  EXPECT_LT(m.jacobian_mismatch(g, 1e-4), 10 * 1e-8);
}

TEST(MapInverse, NewtonMatchesClosedForm) {
  const Grid seeds(kUnit, 17);
  const ImagingMap m = ImagingMap::custom(Expression::parse("2*x1 + 0.1*x2"),
                                          Expression::parse("2*x2"));
  const Vec2 x{0.3, -0.4};
  EXPECT_LT(norm(m.inverse(m(x), seeds) - x), 1e-12);
  const ImagingMap inv = m.inverted(seeds);
  EXPECT_LT(norm(inv(m(x)) - x), 1e-12);
}

TEST(SameIndex, IdentityGivesFlatWindow) {
  const Grid g(kUnit, 17);
  const ImagingLens L =
      solve_same_index(ImagingMap::identity(4.0), -1.0, Media{1, 1.5, 1}, {0, 0}, 1.0, g);
  for (std::size_t k : g.active_indices()) EXPECT_EQ(L.u.height(g.point(k)), 1.0);
  const TraceReport r = trace_field(constant_field(kE3, kUnit), sample_points(kUnit, 50, 3),
                                    lens_elements(L.lens, SheetMode::Exact),
                                    imaging_target(ImagingMap::identity(4.0)));
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_position_error, 1e-12);
}

TEST(SameIndex, MagnificationMatchesClosedForm) {
  const Grid g(kFig, 33);
  const ImagingMap T = ImagingMap::magnification(1.0, 6.0);
  const ImagingLens L = solve_same_index(T, kC, Media{1, kK1, 1}, {0, 0}, 1.0, g);
  EXPECT_TRUE(L.compatibility.pass);
  EXPECT_LT(L.path_residual, 1e-8);
  EXPECT_LT(L.pde_residual, 1e-6);
  const double A = 1.0 - kK1 * std::abs(kC) / (kK1 * kK1 - 1.0);
  const GraphSurface closed = magnification_closed_form(1.0, kC, kK1, A, kFig);
  EXPECT_LT(sup_diff(L.u, closed, g), 1e-8);

  const TraceReport r =
      trace_field(constant_field(kE3, kFig), sample_points(kFig, 200, 5),
                  lens_elements(L.lens, SheetMode::Exact), imaging_target(T));
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_direction_error, 1e-7);
  EXPECT_LT(r.max_position_error, 1e-6);
}

TEST(SameIndex, AxisMapQuadratureMatchesLineIntegral) {
  const Domain d = Domain::rectangle({-1, -1}, {1, 1});
  const Grid g(d, 25);
  const ImagingMap T = ImagingMap::axis(Expression::parse("x1 + 0.1*sin(x1)"), 4.0);
  const ImagingLens L = solve_same_index(T, -2.0, Media{1, 1.5, 1}, {0, 0}, 0.5, g);
  const GraphSurface one_d = axis_map_solution(
      [](double t) { return t + 0.1 * std::sin(t); }, -2.0, 1.5, {0, 0}, 0.5, d);
  EXPECT_LT(sup_diff(L.u, one_d, g), 1e-8);
}

TEST(SameIndex, ShearIsRejected) {
  const Grid g(kUnit, 17);
  EXPECT_EQ(code_of([&] {
              solve_same_index(ImagingMap::affine(kShear, {0, 0}), -3.0, Media{1, 1.5, 1},
                               {0, 0}, 1.0, g);
            }),
            ErrorCode::CurlViolation);
  EXPECT_EQ(code_of([&] {
              solve_same_index(ImagingMap::identity(), 1.0, Media{1, 1.5, 1}, {0, 0}, 1.0, g);
            }),
            ErrorCode::InvalidInput);
}

TEST(ClosedForm, ValueAtOriginAndEllipsoid) {
  const Domain d = Domain::disk({0, 0}, 2.0);
  const GraphSurface u = magnification_closed_form(1.0, -3.0, kK1, 0.0, d);
  EXPECT_NEAR(u.height({0, 0}), kK1 * 3.0 / (kK1 * kK1 - 1.0), 1e-14);
  const Grid g(d, 41);
  double worst = 0.0;
  for (std::size_t k : g.active_indices()) {
    const Vec2 x = g.point(k);
    worst = std::max(worst, std::abs(ellipsoid_residual(1.0, -3.0, kK1, 0.0, x, u.height(x))));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(ClosedForm, GradientSatisfiesNormIdentity) {
  const Domain d = Domain::disk({0, 0}, 2.0);
  const GraphSurface u = magnification_closed_form(1.0, -3.0, kK1, 0.0, d);
  const Grid g(d, 21);
  const double h = 1e-3;
  for (std::size_t k : g.active_indices()) {
    const Vec2 x = g.point(k);
    // Five-point stencil keeps the difference error near 1e-12.
    auto diff = [&](const Vec2& e) {
      return (-u.height(x + 2 * h * e) + 8 * u.height(x + h * e) - 8 * u.height(x - h * e) +
              u.height(x - 2 * h * e)) /
             (12 * h);
    };
    const Vec2 du{diff({1, 0}), diff({0, 1})};
    const double s = norm(x);
    const double expect = kK1 * s / std::sqrt(9.0 - (kK1 * kK1 - 1.0) * s * s);
    EXPECT_NEAR(norm(du), expect, 1e-10);
  }
}

TEST(ClosedForm, RejectsDegenerateAndOutOfBound) {
  EXPECT_EQ(code_of([&] { magnification_closed_form(0.0, -3.0, kK1, 0.0, kUnit); }),
            ErrorCode::DegenerateMagnification);
  EXPECT_EQ(code_of([&] {
              magnification_closed_form(5.0, -1.0, kK1, 0.0, Domain::disk({0, 0}, 1.0));
            }),
            ErrorCode::BoundViolation);
}

TEST(Thickness, PlanAndBounds) {
  const ThicknessPlan p = thickness_plan(2.0, 1.0, 0.7, kK1);
  EXPECT_NEAR(p.C, -2.0 * (kK1 - 1.0), 1e-15);
  EXPECT_GT(p.bound_margin, 0.2);
  EXPECT_EQ(code_of([&] { thickness_plan(2.0, 1.0, 1.0, kK1); }), ErrorCode::Infeasible);
  // A tilted normal at the origin keeps |C| inside d0 (k1 - 1) .. d0 (k1 - 1/k1).
  for (double tilt : {0.1, 0.4, 0.8}) {
    const ThicknessPlan q = thickness_plan(2.0, 0.1, 0.5, kK1, normalized(Vec3{tilt, 0, 1}));
    EXPECT_GE(std::abs(q.C), 2.0 * (kK1 - 1.0));
    EXPECT_LE(std::abs(q.C), 2.0 * (kK1 - 1.0 / kK1));
  }
}

TEST(Thickness, DesignRatioBound) {
  const Grid g(kFig, 33);
  const ImagingLens L =
      solve_same_index(ImagingMap::magnification(1.0, 6.0), kC, Media{1, kK1, 1}, {0, 0}, 1.0, g);
  const double ratio = L.lens.max_thickness() / L.lens.min_thickness();
  EXPECT_LE(ratio, std::pow((kK1 + 1.0) / kK1, 2));
}

TEST(Quasilinear, IdentityIsFlat) {
  const Grid g(kUnit, 17);
  const QuasilinearResult q =
      solve_quasilinear(ImagingMap::identity(10.0), -1.0, kDown, {0, 0}, 2.0, g);
  EXPECT_EQ(q.accepted, g.active_count());
  for (std::size_t k : g.active_indices()) EXPECT_NEAR(q.u.height(g.point(k)), 2.0, 1e-14);
}

TEST(Quasilinear, MagnificationTracesOntoImage) {
  const Grid g(kUnit, 33);
  const ImagingMap T = ImagingMap::magnification(0.25, 10.0);
  const QuasilinearResult q = solve_quasilinear(T, -1.0, kDown, {0, 0}, 2.0, g);
  EXPECT_EQ(q.accepted, g.active_count());
  EXPECT_LT(q.pde_residual_fd, 1e-6);
  EXPECT_LT(q.pde_residual_analytic, 1e-9);
  EXPECT_LT(q.transposed_disagreement, 1e-6);
  EXPECT_LT(q.richardson_error, 1e-8);
  EXPECT_GT(q.min_window_margin, 0.0);
  for (std::size_t k : g.active_indices()) {
    const Vec2 x = g.point(k);
    const double v = q.v_grid.values[k];
    EXPECT_LT(q.state->v_lower(), v);
    EXPECT_LT(v, 0.0);
    EXPECT_LT(norm(q.state->Sbar(x)), std::abs(v));
  }
  const TraceReport r =
      trace_field(constant_field(kE3, kUnit), sample_points(Domain::disk({0, 0}, 0.95), 100, 11),
                  lens_elements(q.lens, SheetMode::Exact), imaging_target(T));
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_direction_error, 1e-7);
  EXPECT_LT(r.max_position_error, 1e-5);
}

TEST(Quasilinear, WindowEdgeAndConditions) {
  const Grid g(kUnit, 17);
  const ImagingMap T = ImagingMap::magnification(0.25, 10.0);
  const Interval w = delta0_window(T, -1.0, kDown, {0, 0});
  EXPECT_EQ(code_of([&] { solve_quasilinear(T, -1.0, kDown, {0, 0}, w.hi + 1e-9, g); }),
            ErrorCode::InitialConditionOutOfWindow);
  EXPECT_EQ(code_of([&] { solve_quasilinear(T, -1.0, kDown, {0, 0}, -1e-9, g); }),
            ErrorCode::InitialConditionOutOfWindow);
  EXPECT_EQ(code_of([&] {
              solve_quasilinear(ImagingMap::affine(kShear, {0, 0}), -1.0, kDown, {0, 0}, 2.0, g);
            }),
            ErrorCode::CurlViolation);
  EXPECT_EQ(code_of([&] {
              solve_quasilinear(ImagingMap::magnification(20.0), -1.0, kDown, {1, 0}, 2.0, g);
            }),
            ErrorCode::BoundViolation);
  EXPECT_EQ(code_of([&] { solve_quasilinear(T, -1.0, Media{1.33, 1.7, 1.5}, {0, 0}, 2.0, g); }),
            ErrorCode::InvalidInput);
}

TEST(ReverseIndex, IdentityIsFlatBothWays) {
  const Grid g(kUnit, 17);
  const ImagingMap T = ImagingMap::identity(10.0);
  const ReverseLens R = solve_reverse_index(T, -1.0, Media{1.33, 1.7, 1.5}, {0, 0}, 2.0, g, g);
  const TraceReport r =
      trace_field(constant_field(kE3, kUnit), sample_points(Domain::disk({0, 0}, 0.9), 40, 2),
                  lens_elements(R.lens, SheetMode::Exact), imaging_target(T));
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_position_error, 1e-12);
}

TEST(ReverseIndex, MagnificationTracesForward) {
  const Domain source = Domain::disk({0, 0}, 0.5);
  const Domain image = Domain::disk({0, 0}, 1.0);
  const ImagingMap T = ImagingMap::magnification(1.0, 10.0);
  const ReverseLens R = solve_reverse_index(T, -1.0, Media{1.33, 1.7, 1.5}, {0, 0}, 2.0,
                                            Grid(source, 17), Grid(image, 33));
  EXPECT_LT(R.reversed.transposed_disagreement, 1e-6);
  const TraceReport r =
      trace_field(constant_field(kE3, source), sample_points(Domain::disk({0, 0}, 0.45), 60, 8),
                  lens_elements(R.lens, SheetMode::Exact), imaging_target(T));
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_direction_error, 1e-7);
  EXPECT_LT(r.max_position_error, 1e-5);
}

TEST(ReverseIndex, RejectsBadInverse) {
  const Grid g(kUnit, 17);
  EXPECT_EQ(code_of([&] {
              solve_reverse_index(ImagingMap::affine(kShear, {0, 0}, 10.0), -1.0,
                                  Media{1.33, 1.7, 1.5}, {0, 0}, 2.0, g, g);
            }),
            ErrorCode::CurlViolation);
  EXPECT_EQ(code_of([&] {
              solve_reverse_index(ImagingMap::identity(), -1.0, kDown, {0, 0}, 2.0, g, g);
            }),
            ErrorCode::InvalidInput);
}

TEST(MirrorImaging, IdentityGivesParallelMirrors) {
  const Grid g(kUnit, 17);
  const MirrorImaging m = solve_mirror_imaging(ImagingMap::identity(10.0), 2.0, {0, 0}, 5.0, g);
  for (std::size_t k : g.active_indices()) {
    EXPECT_EQ(m.u.height(g.point(k)), 5.0);
    EXPECT_NEAR(m.mirrors.nodes.values[k].d, 1.0, 1e-14);
    EXPECT_LT(norm(m.mirrors.nodes.values[k].m1 + kE3), 1e-14);
  }
}

TEST(MirrorImaging, MagnificationParaboloid) {
  const Grid g(kUnit, 33);
  const ImagingMap T = ImagingMap::magnification(1.0, 10.0);
  const MirrorImaging m = solve_mirror_imaging(T, 4.0, {0, 0}, 5.0, g);
  for (std::size_t k : g.active_indices()) {
    const Vec2 x = g.point(k);
    EXPECT_NEAR(m.u.height(x), 5.0 + norm2(x) / 8.0, 1e-12);
  }
  const TraceReport r =
      trace_field(constant_field(kE3, kUnit), sample_points(kUnit, 200, 4),
                  mirror_elements(m.mirrors, SheetMode::Exact), imaging_target(T));
  EXPECT_EQ(r.failures, 0u);
  EXPECT_LT(r.max_direction_error, 1e-7);
  EXPECT_LT(r.max_position_error, 1e-7);
}

TEST(MirrorImaging, Rejections) {
  const Grid g(kUnit, 17);
  EXPECT_EQ(code_of([&] {
              solve_mirror_imaging(ImagingMap::affine(kShear, {0, 0}), 4.0, {0, 0}, 5.0, g);
            }),
            ErrorCode::CurlViolation);
  EXPECT_EQ(code_of([&] { solve_mirror_imaging(ImagingMap::identity(), -1.0, {0, 0}, 5.0, g); }),
            ErrorCode::NonpositiveThickness);
}

TEST(Legendre, IdentitiesAndSignLaw) {
  const double k1 = kDown.kappa1(), k2 = kDown.kappa2();
  for (double alpha : {0.25, -0.3}) {
    for (double A : {2.0, -1.5}) {
      const LegendreSolution s = legendre_2d(alpha, -1.0, k1, k2, A, -0.5, 0.5);
      EXPECT_LT(s.q_identity_residual(), 1e-12);
      EXPECT_TRUE(s.sign_law_holds());
      const int want = (A * alpha * (k1 * k2 - 1.0) > 0) ? 1 : -1;
      for (double xi = -0.5; xi <= 0.5; xi += 0.05) {
        EXPECT_EQ(s.d2w(xi) > 0 ? 1 : -1, want);
      }
    }
  }
}

TEST(Legendre, BranchesAndErrors) {
  const double k1 = kDown.kappa1(), k2 = kDown.kappa2();
  const double xi1 = legendre_xi1(0.25, k1, k2);
  ASSERT_GT(xi1, 0.0);
  EXPECT_LT(std::abs(LegendreSolution(0.25, -1, k1, k2, 1, -0.1, 0.1).r(xi1)), 1e-12);
  EXPECT_EQ(code_of([&] { legendre_2d(0.25, -1, k1, k2, 1, 0.0, 2 * xi1); }),
            ErrorCode::BranchCrossing);
  EXPECT_EQ(code_of([&] { legendre_2d(1e-13, -1, k1, k2, 1, -0.1, 0.1); }),
            ErrorCode::DegenerateMagnification);
  EXPECT_EQ(code_of([&] { legendre_2d(0.25, -1, k1, k2, 0.0, -0.1, 0.1); }),
            ErrorCode::NonMonotone);
  EXPECT_EQ(code_of([&] { legendre_2d(0.25, -1, 1.2, 0.9, 1, -0.1, 0.1); }),
            ErrorCode::InvalidInput);
  const LegendreSolution right = legendre_2d(0.25, -1, k1, k2, 1, 1.5 * xi1, 3 * xi1);
  EXPECT_EQ(right.branch(), LegendreSolution::Branch::Right);
  EXPECT_EQ(legendre_2d(-0.25, -1, k1, k2, 1, -5, 5).branch(), LegendreSolution::Branch::Whole);
}

TEST(Legendre, ProfileSolvesOdeAndMatchesQuasilinear) {
  const double k1 = kDown.kappa1(), k2 = kDown.kappa2();
  const double alpha = 0.25, C = -1.0, delta0 = 2.0;
  const double xi1 = legendre_xi1(alpha, k1, k2);
  const double span = std::min(0.9, 0.95 * xi1);
  const LegendreSolution s =
      legendre_2d(alpha, C, k1, k2, legendre_constant(delta0, C, k1, k2), -span, span);
  EXPECT_NEAR(s.u(0.0), delta0, 1e-12);

  const Grid g(kUnit, 33);
  const QuasilinearResult q =
      solve_quasilinear(ImagingMap::magnification(alpha, 10.0), C, kDown, {0, 0}, delta0, g);
  double worst = 0.0, residual = 0.0;
  int compared = 0;
  for (double x = -0.95; x <= 0.95; x += 0.05) {
    if (x < s.x_lo() || x > s.x_hi()) continue;
    residual = std::max(residual, s.pde_residual(x));
    worst = std::max(worst, std::abs(s.u(x) - q.u.height({x, 0.0})));
    ++compared;
  }
  EXPECT_GT(compared, 30);
  EXPECT_LT(residual, 1e-8);
  EXPECT_LT(worst, 1e-6);
}
