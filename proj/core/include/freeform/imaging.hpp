#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "freeform/domain.hpp"
#include "freeform/expression.hpp"
#include "freeform/farfield.hpp"
#include "freeform/quadrature.hpp"
#include "freeform/surface.hpp"
#include "freeform/vec.hpp"

namespace freeform {

/// Bijection T between the source plane z = 0 and the image plane z = a.
class ImagingMap {
 public:
  using Transform = std::function<Vec2(const Vec2&)>;
  using Jacobian = std::function<Mat2(const Vec2&)>;

  /// Without a Jacobian, DT falls back to central differences with fd_step().
  ImagingMap(std::string name, Transform T, Jacobian DT = {}, Transform inverse = {},
             double a = 1.0);

  static ImagingMap identity(double a = 1.0);
  /// T x = (1 + alpha) x.
  static ImagingMap magnification(double alpha, double a = 1.0);
  /// T x = (h(x1), x2).
  static ImagingMap axis(const Expression& h, double a = 1.0);
  /// T x = M x + b.
  static ImagingMap affine(const Mat2& M, const Vec2& b, double a = 1.0);
  static ImagingMap custom(const Expression& t1, const Expression& t2, double a = 1.0);

  const std::string& name() const { return name_; }
  double a() const { return a_; }
  void set_a(double a);

  Vec2 operator()(const Vec2& x) const { return T_(x); }
  Vec2 S(const Vec2& x) const { return T_(x) - x; }
  Mat2 DT(const Vec2& x) const;
  /// DS(i, k) = d S_i / d x_k.
  Mat2 DS(const Vec2& x) const;
  bool analytic_jacobian() const { return static_cast<bool>(DT_); }
  double fd_step() const { return fd_step_; }
  void set_fd_step(double h) { fd_step_ = h; }

  /// Set for the pure magnification map.
  std::optional<double> magnification_alpha() const { return alpha_; }

  /// Max |DS - central-difference DS| over the active nodes.
  double jacobian_mismatch(const Grid& grid, double h) const;

  /// T^{-1}(y): closed form when known, otherwise Newton from the nearest seed node.
  /// Throws NonInvertibleMap.
  Vec2 inverse(const Vec2& y, const Grid& seeds) const;
  /// The map T^{-1} on the image domain (same a).
  ImagingMap inverted(const Grid& seeds) const;

 private:
  std::string name_;
  Transform T_;
  Jacobian DT_;
  Transform inverse_;
  double a_;
  double fd_step_ = 1e-5;
  std::optional<double> alpha_;
};

/// Pointwise compatibility data for a map on a grid. I = dS1/dx2 - dS2/dx1 (= -curl S)
/// and J = S x D|S|^2 / 2, where a x b = a1 b2 - a2 b1.
struct CompatibilityReport {
  explicit CompatibilityReport(const Grid& g) : I(g), J(g) {}

  GridData<double> I;
  GridData<double> J;
  /// Same index: max |(C^2 - (k1^2 - 1)|S|^2) curl S - (k1^2 - 1)/2 S x D|S|^2|.
  /// Strict: max(|I|, |J|).
  double combo_residual = 0.0;
  /// min over the grid of |C|/sqrt(k1^2 - 1) - |S|; +inf for the strict check.
  double bound_margin = 0.0;
  Vec2 worst;
  double tol = 0.0;
  bool pass = false;
};

/// Solvability test when n1 = n3. Throws BoundViolation if |S| reaches |C|/sqrt(k1^2 - 1).
CompatibilityReport check_map_same_index(const ImagingMap& map, double C, double kappa1,
                                         const Grid& grid, double map_tol = 1e-8);

/// curl S = 0 and S x D|S|^2 = 0 at every node.
CompatibilityReport check_map_strict(const ImagingMap& map, const Grid& grid,
                                     double map_tol = 1e-8);

struct ImagingOptions {
  double map_tol = 1e-8;
  /// Allowed disagreement between integration paths.
  double path_tol = 1e-8;
  /// Gauss-Legendre panels per path segment for the pointwise height.
  int gl_panels = 16;
  /// The staircase cross-check runs on every stride-th node.
  std::size_t staircase_stride = 4;
  int staircase_steps = 8;
  QuadratureOptions quad{};
  DesignOptions design{};
};

/// u(x) = u0 + line integral of `gradient` from x0 along the x1-then-x2 path
/// (fixed Gauss-Legendre); Du is `gradient` itself.
struct PathIntegralSurface {
  GraphSurface surface;
  /// Max disagreement with the x2-first path and the staircase path.
  double path_residual = 0.0;
};

PathIntegralSurface integrate_gradient(const PlanarField& gradient, const Vec2& x0, double u0,
                                       const Domain& domain, const Grid& checks,
                                       const ImagingOptions& opts = {});

struct ImagingLens {
  GraphSurface u;
  LensDesign lens;
  CompatibilityReport compatibility;
  double path_residual = 0.0;
  /// Max |Du/sqrt(k1^2 + (k1^2 - 1)|Du|^2) - S/C| with Du by central differences.
  double pde_residual = 0.0;
};

/// n1 = n3: Du = -k1 S / sqrt(C^2 - (k1^2 - 1)|S|^2), u by line integral, then the
/// vertical-in/vertical-out second face.
ImagingLens solve_same_index(const ImagingMap& map, double C, const Media& media,
                             const Vec2& x0, double u0, const Grid& grid,
                             const ImagingOptions& opts = {});

/// Closed-form entry face for T x = (1 + alpha) x; lies on the ellipsoid
/// (z - A)^2 + k1^2 |x|^2 / (k1^2 - 1) = (C k1 / (alpha (k1^2 - 1)))^2.
GraphSurface magnification_closed_form(double alpha, double C, double kappa1, double A,
                                       const Domain& domain);
/// Left side minus right side of the ellipsoid equation.
double ellipsoid_residual(double alpha, double C, double kappa1, double A, const Vec2& x,
                          double u);

/// Entry face for T x = (h(x1), x2) by one-variable adaptive quadrature.
GraphSurface axis_map_solution(std::function<double(double)> h, double C, double kappa1,
                               const Vec2& x0, double u0, const Domain& domain);

struct ThicknessPlan {
  double C = 0.0;
  /// Smallest d(0) for which alpha * gamma stays inside the bound.
  double required_d0 = 0.0;
  /// 1 - alpha gamma sqrt(k1^2 - 1) / |C|.
  double bound_margin = 0.0;
};

/// C = -d0 (k1 - e3.m1(0)) with m1(0) refracted through the normal nu0.
/// Throws Infeasible unless alpha gamma < d0 (k1 - 1) / sqrt(k1^2 - 1).
ThicknessPlan thickness_plan(double d0, double alpha, double gamma, double kappa1,
                             const Vec3& nu0 = kE3);

/// Largest |x| over the domain.
double max_radius(const Domain& domain);

struct QuasilinearOptions {
  double map_tol = 1e-8;
  /// Allowed difference between the row-first and column-first sweeps.
  double path_tol = 1e-6;
  /// RK4 steps per leg for the pointwise evaluator.
  int evaluator_steps = 64;
  /// 0 selects 1e-4 of the domain diameter.
  double pde_fd_step = 0.0;
  DesignOptions design{};
};

/// v = (u + C/(1 - k1 k2)) (k1 - k2) sqrt(k1^2 - 1) solves Dv = F(x, v) with
/// F(x, z) = phi(|Sbar|^2 / z^2) Sbar / z and Sbar = k1 (k1 - k2)^2 / (1 - k1 k2) S.
class QuasilinearState {
 public:
  QuasilinearState(std::shared_ptr<const ImagingMap> map, double C, double kappa1,
                   double kappa2, const Vec2& x0, double delta0, int evaluator_steps);

  double kappa1() const { return k1_; }
  double kappa2() const { return k2_; }
  double C() const { return C_; }
  const Vec2& x0() const { return x0_; }
  double delta0() const { return delta0_; }
  double z0() const { return z0_; }
  /// (k1 - k2) sqrt(k1^2 - 1).
  double v_scale() const { return vs_; }
  double sbar_scale() const { return ss_; }
  /// C (k1 - k2) sqrt(k1^2 - 1) / (1 - k1 k2): v must stay above this.
  double v_lower() const { return v_lower_; }

  Vec2 Sbar(const Vec2& x) const { return ss_ * map_->S(x); }
  double phi(double r) const;
  /// NaN components where |Sbar| >= |z| or the discriminant is not positive.
  Vec2 F(const Vec2& x, double z) const;
  /// Smallest of v - v_lower, -v, |v| - |Sbar| and the discriminant margin.
  double window_margin(const Vec2& x, double v) const;

  /// Integrates Dv = F along the segment with `steps` RK4 steps.
  double rk4(const Vec2& from, const Vec2& to, double v, int steps) const;
  /// v along the x1-then-x2 path from x0 with a fixed step count (smooth in x).
  double v(const Vec2& x) const;
  double v(const Vec2& x, int steps) const;
  double u(const Vec2& x) const;
  Vec2 du(const Vec2& x) const;
  double u_of_v(double v) const;
  /// Residual vector norm of the imaging PDE for given u and Du.
  double pde_residual(const Vec2& x, double u, const Vec2& du) const;

 private:
  std::shared_ptr<const ImagingMap> map_;
  double C_, k1_, k2_;
  Vec2 x0_;
  double delta0_;
  int steps_;
  double vs_, ss_, v_lower_, z0_;
};

struct QuasilinearResult {
  std::shared_ptr<const QuasilinearState> state;
  GraphSurface u;
  LensDesign lens;
  /// Row-first sweep values; valid marks the accepted region.
  GridData<double> v_grid;
  CompatibilityReport strict;
  std::size_t accepted = 0;
  double transposed_disagreement = 0.0;
  /// Max change when the sweep step is halved.
  double richardson_error = 0.0;
  /// Max |pointwise evaluator - sweep| on accepted nodes.
  double evaluator_error = 0.0;
  double pde_residual_fd = 0.0;
  double pde_residual_analytic = 0.0;
  double min_window_margin = 0.0;
};

/// n1 > n3 (k1 k2 < 1): local solution through u(x0) = delta0.
QuasilinearResult solve_quasilinear(const ImagingMap& map, double C, const Media& media,
                                    const Vec2& x0, double delta0, const Grid& grid,
                                    const QuasilinearOptions& opts = {});

/// Open interval of admissible delta0 for the quasilinear solver.
Interval delta0_window(const ImagingMap& map, double C, const Media& media, const Vec2& x0);

struct ReverseLens {
  /// Solution of the swapped problem on the image side (its own frame, z' = a - z).
  QuasilinearResult reversed;
  /// Physical lens: entry sheet over the image-side grid, exit face z = a - u'(y).
  LensDesign lens;
  ImagingMap inverse;
};

/// n1 < n3: solves the swapped problem from the image plane and flips it back.
/// `image_grid` lives on the image domain; y0 is the anchor there.
ReverseLens solve_reverse_index(const ImagingMap& map, double C, const Media& media,
                                const Vec2& y0, double delta0, const Grid& source_seeds,
                                const Grid& image_grid, const QuasilinearOptions& opts = {});

struct MirrorImaging {
  GraphSurface u;
  MirrorDesign mirrors;
  double path_residual = 0.0;
  double curl_residual = 0.0;
};

/// Two mirrors: Du = S / C, d = C (1 + |Du|^2) / 2. Needs curl S = 0 and C > 0.
MirrorImaging solve_mirror_imaging(const ImagingMap& map, double C, const Vec2& x0, double u0,
                                   const Grid& grid, const ImagingOptions& opts = {});

}  // namespace freeform
