#include "freeform/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "freeform/error.hpp"
#include "freeform/field.hpp"
#include "freeform/geometry.hpp"

namespace freeform {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<Mat2> inverse(const Mat2& m) {
  const double det = m.det();
  if (!(std::abs(det) > 1e-14)) return std::nullopt;
  Mat2 out;
  out(0, 0) = m(1, 1) / det;
  out(0, 1) = -m(0, 1) / det;
  out(1, 0) = -m(1, 0) / det;
  out(1, 1) = m(0, 0) / det;
  return out;
}

Domain bounding_box(const Grid& g) { return Domain::rectangle(g.lo(), g.hi()); }

std::string format(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

// --- ImagingMap -------------------------------------------------------------

ImagingMap::ImagingMap(std::string name, Transform T, Jacobian DT, Transform inverse, double a)
    : name_(std::move(name)), T_(std::move(T)), DT_(std::move(DT)), inverse_(std::move(inverse)) {
  set_a(a);
}

void ImagingMap::set_a(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) {
    throw Error(ErrorCode::InvalidInput, "image plane height a must be positive");
  }
  a_ = a;
}

ImagingMap ImagingMap::identity(double a) {
  return ImagingMap(
      "identity", [](const Vec2& x) { return x; }, [](const Vec2&) { return Mat2::identity(); },
      [](const Vec2& y) { return y; }, a);
}

ImagingMap ImagingMap::magnification(double alpha, double a) {
  const double s = 1.0 + alpha;
  Mat2 J = Mat2::identity();
  J(0, 0) = J(1, 1) = s;
  Transform inv;
  if (s != 0.0) inv = [s](const Vec2& y) { return y / s; };
  ImagingMap m(
      "magnification", [s](const Vec2& x) { return s * x; }, [J](const Vec2&) { return J; },
      inv, a);
  m.alpha_ = alpha;
  return m;
}

ImagingMap ImagingMap::axis(const Expression& h, double a) {
  if (!h.derivative(1).is_constant() || h.derivative(1)({0.0, 0.0}) != 0.0) {
    throw Error(ErrorCode::ConfigError, "axis map h may depend on x1 only");
  }
  const DifferentiableExpression dh(h);
  return ImagingMap(
      "axis", [dh](const Vec2& x) { return Vec2{dh.value(x), x.x2}; },
      [dh](const Vec2& x) {
        Mat2 J = Mat2::identity();
        J(0, 0) = dh.gradient(x).x1;
        return J;
      },
      {}, a);
}

ImagingMap ImagingMap::affine(const Mat2& M, const Vec2& b, double a) {
  Transform inv;
  if (const auto Mi = freeform::inverse(M)) {
    inv = [Mi = *Mi, b](const Vec2& y) { return Mi * (y - b); };
  }
  return ImagingMap(
      "affine", [M, b](const Vec2& x) { return M * x + b; }, [M](const Vec2&) { return M; },
      inv, a);
}

ImagingMap ImagingMap::custom(const Expression& t1, const Expression& t2, double a) {
  const DifferentiableExpression f1(t1), f2(t2);
  return ImagingMap(
      "custom", [f1, f2](const Vec2& x) { return Vec2{f1.value(x), f2.value(x)}; },
      [f1, f2](const Vec2& x) {
        const Vec2 g1 = f1.gradient(x), g2 = f2.gradient(x);
        Mat2 J;
        J(0, 0) = g1.x1;
        J(0, 1) = g1.x2;
        J(1, 0) = g2.x1;
        J(1, 1) = g2.x2;
        return J;
      },
      {}, a);
}

Mat2 ImagingMap::DT(const Vec2& x) const {
  if (DT_) return DT_(x);
  const double h = fd_step_;
  Mat2 J;
  for (int k = 0; k < 2; ++k) {
    const Vec2 dx = k == 0 ? Vec2{h, 0.0} : Vec2{0.0, h};
    const Vec2 col = (T_(x + dx) - T_(x - dx)) / (2.0 * h);
    J(0, k) = col.x1;
    J(1, k) = col.x2;
  }
  return J;
}

Mat2 ImagingMap::DS(const Vec2& x) const {
  Mat2 J = DT(x);
  J(0, 0) -= 1.0;
  J(1, 1) -= 1.0;
  return J;
}

double ImagingMap::jacobian_mismatch(const Grid& grid, double h) const {
  double worst = 0.0;
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const Mat2 J = DS(x);
    for (int c = 0; c < 2; ++c) {
      const Vec2 dx = c == 0 ? Vec2{h, 0.0} : Vec2{0.0, h};
      const Vec2 col = (S(x + dx) - S(x - dx)) / (2.0 * h);
      worst = std::max({worst, std::abs(col.x1 - J(0, c)), std::abs(col.x2 - J(1, c))});
    }
  }
  return worst;
}

Vec2 ImagingMap::inverse(const Vec2& y, const Grid& seeds) const {
  if (inverse_) return inverse_(y);
  // Seed: the sampled node whose image lies closest to y.
  const std::size_t stride_x = std::max<std::size_t>(1, seeds.nx() / 32);
  const std::size_t stride_y = std::max<std::size_t>(1, seeds.ny() / 32);
  Vec2 x = seeds.point(0);
  double best = kInf;
  for (std::size_t j = 0; j < seeds.ny(); j += stride_y) {
    for (std::size_t i = 0; i < seeds.nx(); i += stride_x) {
      const Vec2 p = seeds.point(i, j);
      const double d = norm2(T_(p) - y);
      if (d < best) {
        best = d;
        x = p;
      }
    }
  }
  const double scale = 1.0 + norm(seeds.hi() - seeds.lo());
  for (int it = 0; it < 60; ++it) {
    const Vec2 r = T_(x) - y;
    if (norm(r) < 1e-15 * scale) return x;
    const auto Ji = freeform::inverse(DT(x));
    if (!Ji) break;
    Vec2 step = *Ji * r;
    // Backtrack until the residual drops.
    double t = 1.0;
    while (t > 1e-6 && norm(T_(x - t * step) - y) >= norm(r)) t *= 0.5;
    x = x - t * step;
    if (norm(t * step) < 1e-15 * scale) {
      if (norm(T_(x) - y) < 1e-12 * scale) return x;
      break;
    }
  }
  if (norm(T_(x) - y) < 1e-12 * scale) return x;
  throw Error(ErrorCode::NonInvertibleMap, "Newton inversion of T failed", y, norm(T_(x) - y));
}

ImagingMap ImagingMap::inverted(const Grid& seeds) const {
  auto self = std::make_shared<const ImagingMap>(*this);
  auto inv = [self, seeds](const Vec2& y) { return self->inverse(y, seeds); };
  auto jac = [self, inv](const Vec2& y) {
    const auto Ji = freeform::inverse(self->DT(inv(y)));
    if (!Ji) throw Error(ErrorCode::NonInvertibleMap, "DT is singular", y, 0.0);
    return *Ji;
  };
  ImagingMap out(name_ + "^-1", inv, jac, T_, a_);
  if (alpha_ && *alpha_ != -1.0) out.alpha_ = 1.0 / (1.0 + *alpha_) - 1.0;
  return out;
}

// --- compatibility ----------------------------------------------------------

namespace {

struct MapTerms {
  Vec2 S;
  double curl = 0.0;   // dS2/dx1 - dS1/dx2
  double cross = 0.0;  // S x D|S|^2
};

MapTerms map_terms(const ImagingMap& map, const Vec2& x) {
  MapTerms t;
  t.S = map.S(x);
  const Mat2 J = map.DS(x);
  t.curl = J(1, 0) - J(0, 1);
  const Vec2 g{2.0 * (t.S.x1 * J(0, 0) + t.S.x2 * J(1, 0)),
               2.0 * (t.S.x1 * J(0, 1) + t.S.x2 * J(1, 1))};
  t.cross = t.S.x1 * g.x2 - t.S.x2 * g.x1;
  return t;
}

}  // namespace

CompatibilityReport check_map_same_index(const ImagingMap& map, double C, double kappa1,
                                         const Grid& grid, double map_tol) {
  if (!(kappa1 > 1.0)) throw Error(ErrorCode::InvalidInput, "kappa1 must exceed 1");
  const double q = kappa1 * kappa1 - 1.0;
  const double bound = std::abs(C) / std::sqrt(q);
  CompatibilityReport r(grid);
  r.tol = map_tol;
  r.bound_margin = kInf;
  Vec2 bound_worst;
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const MapTerms t = map_terms(map, x);
    r.I.values[k] = -t.curl;
    r.J.values[k] = 0.5 * t.cross;
    r.I.valid[k] = r.J.valid[k] = 1;
    const double margin = bound - norm(t.S);
    if (margin < r.bound_margin) {
      r.bound_margin = margin;
      bound_worst = x;
    }
    const double res = std::abs((C * C - q * norm2(t.S)) * t.curl - 0.5 * q * t.cross);
    if (!(res <= r.combo_residual)) {
      r.combo_residual = res;
      r.worst = x;
    }
  }
  if (!(r.bound_margin > 0.0)) {
    throw Error(ErrorCode::BoundViolation,
                "|S| reaches |C|/sqrt(kappa1^2 - 1) = " + format(bound), bound_worst,
                r.bound_margin);
  }
  r.pass = r.combo_residual <= map_tol;
  return r;
}

CompatibilityReport check_map_strict(const ImagingMap& map, const Grid& grid, double map_tol) {
  CompatibilityReport r(grid);
  r.tol = map_tol;
  r.bound_margin = kInf;
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const MapTerms t = map_terms(map, x);
    r.I.values[k] = -t.curl;
    r.J.values[k] = 0.5 * t.cross;
    r.I.valid[k] = r.J.valid[k] = 1;
    const double res = std::max(std::abs(t.curl), 0.5 * std::abs(t.cross));
    if (!(res <= r.combo_residual)) {
      r.combo_residual = res;
      r.worst = x;
    }
  }
  r.pass = r.combo_residual <= map_tol;
  return r;
}

// --- gradient integration ---------------------------------------------------

PathIntegralSurface integrate_gradient(const PlanarField& gradient, const Vec2& x0, double u0,
                                       const Domain& domain, const Grid& checks,
                                       const ImagingOptions& opts) {
  const int panels = opts.gl_panels;
  auto height = [gradient, x0, u0, panels](const Vec2& x) {
    const auto path = l_path_x1_first(x0, x);
    return u0 + line_integral_fixed(gradient, path, panels);
  };
  PathIntegralSurface out{GraphSurface(domain, height, gradient)};
  const auto nodes = checks.active_indices();
  Vec2 worst;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const Vec2 x = checks.point(nodes[n]);
    const double a = height(x);
    double res = std::abs(a - (u0 + line_integral(gradient, l_path_x2_first(x0, x), opts.quad)));
    if (opts.staircase_stride > 0 && n % opts.staircase_stride == 0) {
      const auto stairs = staircase_path(x0, x, opts.staircase_steps);
      res = std::max(res, std::abs(a - (u0 + line_integral(gradient, stairs, opts.quad))));
    }
    if (!(res <= out.path_residual)) {
      out.path_residual = res;
      worst = x;
    }
  }
  if (!(out.path_residual <= opts.path_tol)) {
    throw Error(ErrorCode::PathInconsistency,
                "line integrals along different paths disagree by " + format(out.path_residual),
                worst, out.path_residual);
  }
  return out;
}

// --- n1 = n3 ------------------------------------------------------------------

namespace {

void warn_if_plane_cuts_lens(PairDesign& d, double a) {
  double top = -kInf;
  for (std::size_t k = 0; k < d.nodes.values.size(); ++k) {
    if (d.nodes.ok(k)) top = std::max(top, d.nodes.values[k].f.z);
  }
  if (top > a) {
    d.warnings.push_back("image plane z = " + format(a) + " cuts the second face (max height " +
                         format(top) + ")");
  }
}

double central_difference_residual(const GraphSurface& u, const Grid& grid, double h,
                                   const std::function<double(const Vec2&, double, const Vec2&)>& res) {
  double worst = 0.0;
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const Vec2 du{(u.height(x + Vec2{h, 0.0}) - u.height(x - Vec2{h, 0.0})) / (2.0 * h),
                  (u.height(x + Vec2{0.0, h}) - u.height(x - Vec2{0.0, h})) / (2.0 * h)};
    const double r = res(x, u.height(x), du);
    if (!(r <= worst)) worst = r;
  }
  return worst;
}

}  // namespace

ImagingLens solve_same_index(const ImagingMap& map, double C, const Media& media,
                             const Vec2& x0, double u0, const Grid& grid,
                             const ImagingOptions& opts) {
  media.validate_lens();
  if (std::abs(media.n1 - media.n3) > 1e-12 * media.n1) {
    throw Error(ErrorCode::InvalidInput, "same-index solver needs n1 = n3");
  }
  if (!(C < 0.0)) throw Error(ErrorCode::InvalidInput, "C must be negative");
  const double k1 = media.kappa1();
  CompatibilityReport compat = check_map_same_index(map, C, k1, grid, opts.map_tol);
  if (!compat.pass) {
    throw Error(ErrorCode::CurlViolation,
                "map fails the same-index compatibility condition (residual " +
                    format(compat.combo_residual) + ")",
                compat.worst, compat.combo_residual);
  }
  const double q = k1 * k1 - 1.0;
  auto shared = std::make_shared<const ImagingMap>(map);
  PlanarField F = [shared, C, k1, q](const Vec2& x) {
    const Vec2 S = shared->S(x);
    const double rad = C * C - q * norm2(S);
    if (!(rad > 0.0)) return Vec2{kNaN, kNaN};
    return (-k1 / std::sqrt(rad)) * S;
  };
  const Domain box = bounding_box(grid);
  PathIntegralSurface u = integrate_gradient(F, x0, u0, box, grid, opts);
  LensDesign lens = vertical_design(u.surface, C, media, grid, opts.design);
  warn_if_plane_cuts_lens(lens, map.a());

  ImagingLens out{u.surface, std::move(lens), std::move(compat)};
  out.path_residual = u.path_residual;
  out.pde_residual = central_difference_residual(
      out.u, grid, 1e-4 * box.diameter(), [&](const Vec2& x, double, const Vec2& du) {
        return norm(du / std::sqrt(k1 * k1 + q * norm2(du)) - shared->S(x) / C);
      });
  return out;
}

double max_radius(const Domain& domain) {
  if (domain.shape() == Domain::Shape::Disk) return norm(domain.center()) + domain.radius();
  const Vec2 lo = domain.lo(), hi = domain.hi();
  return std::sqrt(std::max(lo.x1 * lo.x1, hi.x1 * hi.x1) + std::max(lo.x2 * lo.x2, hi.x2 * hi.x2));
}

GraphSurface magnification_closed_form(double alpha, double C, double kappa1, double A,
                                       const Domain& domain) {
  if (std::abs(alpha) < 1e-12) {
    throw Error(ErrorCode::DegenerateMagnification, "alpha must be nonzero");
  }
  if (!(kappa1 > 1.0)) throw Error(ErrorCode::InvalidInput, "kappa1 must exceed 1");
  const double q = kappa1 * kappa1 - 1.0;
  const double bound = std::abs(C) / std::sqrt(q);
  const double reach = std::abs(alpha) * max_radius(domain);
  if (!(reach < bound)) {
    throw Error(ErrorCode::BoundViolation,
                "alpha * max|x| = " + format(reach) + " must stay below " + format(bound),
                domain.center(), bound - reach);
  }
  const double c = kappa1 / (alpha * q);
  const double b = q * alpha * alpha;
  return GraphSurface(
      domain, [=](const Vec2& x) { return c * std::sqrt(C * C - b * norm2(x)) + A; },
      [=](const Vec2& x) { return (-kappa1 * alpha / std::sqrt(C * C - b * norm2(x))) * x; },
      [=](const Vec2& x) {
        const double s = std::sqrt(C * C - b * norm2(x));
        const double f = -kappa1 * alpha;
        Mat2 H;
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            H(i, j) = f * ((i == j ? 1.0 / s : 0.0) + b * x[i] * x[j] / (s * s * s));
          }
        }
        return H;
      });
}

double ellipsoid_residual(double alpha, double C, double kappa1, double A, const Vec2& x,
                          double u) {
  // The 1/(k1^2 - 1) on |x|^2 follows from squaring the closed form.
  const double q = kappa1 * kappa1 - 1.0;
  const double R = C * kappa1 / (alpha * q);
  return (u - A) * (u - A) + kappa1 * kappa1 * norm2(x) / q - R * R;
}

GraphSurface axis_map_solution(std::function<double(double)> h, double C, double kappa1,
                               const Vec2& x0, double u0, const Domain& domain) {
  const double q = kappa1 * kappa1 - 1.0;
  auto g = [h, C, kappa1, q](double t) {
    const double s = h(t) - t;
    const double rad = C * C - q * s * s;
    if (!(rad > 0.0)) return kNaN;
    return -kappa1 * s / std::sqrt(rad);
  };
  auto height = [g, x0, u0](const Vec2& x) {
    if (x.x1 == x0.x1) return u0;
    using boost::math::quadrature::gauss_kronrod;
    return u0 + gauss_kronrod<double, 31>::integrate(g, x0.x1, x.x1, 10, 1e-12);
  };
  return GraphSurface(domain, height, [g](const Vec2& x) { return Vec2{g(x.x1), 0.0}; });
}

ThicknessPlan thickness_plan(double d0, double alpha, double gamma, double kappa1,
                             const Vec3& nu0) {
  if (!(d0 > 0.0) || !(gamma > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "d0 and gamma must be positive");
  }
  if (!(kappa1 > 1.0)) throw Error(ErrorCode::InvalidInput, "kappa1 must exceed 1");
  const double q = std::sqrt(kappa1 * kappa1 - 1.0);
  const Vec3 m1 = refract(kE3, nu0, kappa1).m;
  ThicknessPlan p;
  p.C = -d0 * (kappa1 - m1.z);
  p.required_d0 = std::abs(alpha) * gamma * q / (kappa1 - 1.0);
  p.bound_margin = 1.0 - std::abs(alpha) * gamma * q / std::abs(p.C);
  if (!(std::abs(alpha) * gamma < d0 * (kappa1 - 1.0) / q)) {
    throw Error(ErrorCode::Infeasible,
                "alpha * gamma too large for d0; need d0 > " + format(p.required_d0));
  }
  return p;
}

// --- n1 > n3 ------------------------------------------------------------------

QuasilinearState::QuasilinearState(std::shared_ptr<const ImagingMap> map, double C,
                                   double kappa1, double kappa2, const Vec2& x0, double delta0,
                                   int evaluator_steps)
    : map_(std::move(map)), C_(C), k1_(kappa1), k2_(kappa2), x0_(x0), delta0_(delta0),
      steps_(std::max(1, evaluator_steps)) {
  const double p = 1.0 - k1_ * k2_;
  vs_ = (k1_ - k2_) * std::sqrt(k1_ * k1_ - 1.0);
  ss_ = k1_ * (k1_ - k2_) * (k1_ - k2_) / p;
  v_lower_ = C_ * vs_ / p;
  z0_ = (delta0_ + C_ / p) * vs_;
}

double QuasilinearState::phi(double r) const {
  const double p = 1.0 - k1_ * k2_;
  const double disc = (k1_ - k2_) * (k1_ - k2_) - (1.0 - k2_ * k2_) * (k1_ * k1_ - 1.0) * r;
  if (!(r < 1.0) || !(disc > 0.0)) return kNaN;
  return k1_ * ((p * r + std::sqrt(disc)) / (1.0 - r) + p);
}

Vec2 QuasilinearState::F(const Vec2& x, double z) const {
  if (!(z < 0.0)) return {kNaN, kNaN};
  const Vec2 sb = Sbar(x);
  return (phi(norm2(sb) / (z * z)) / z) * sb;
}

double QuasilinearState::window_margin(const Vec2& x, double v) const {
  const double sb2 = norm2(Sbar(x));
  const double disc = (k1_ - k2_) * (k1_ - k2_) * v * v - (1.0 - k2_ * k2_) * (k1_ * k1_ - 1.0) * sb2;
  return std::min({v - v_lower_, -v, std::abs(v) - std::sqrt(sb2), disc});
}

double QuasilinearState::rk4(const Vec2& from, const Vec2& to, double v, int steps) const {
  const Vec2 d = to - from;
  if (d.x1 == 0.0 && d.x2 == 0.0) return v;
  const double h = 1.0 / steps;
  auto rate = [&](double s, double z) { return dot(F(from + s * d, z), d); };
  for (int n = 0; n < steps; ++n) {
    const double s = n * h;
    const double a = rate(s, v);
    const double b = rate(s + 0.5 * h, v + 0.5 * h * a);
    const double c = rate(s + 0.5 * h, v + 0.5 * h * b);
    const double e = rate(s + h, v + h * c);
    v += h / 6.0 * (a + 2.0 * b + 2.0 * c + e);
    if (!std::isfinite(v)) return kNaN;
  }
  return v;
}

double QuasilinearState::v(const Vec2& x, int steps) const {
  const Vec2 corner{x.x1, x0_.x2};
  return rk4(corner, x, rk4(x0_, corner, z0_, steps), steps);
}

double QuasilinearState::v(const Vec2& x) const { return v(x, steps_); }

double QuasilinearState::u_of_v(double v) const { return v / vs_ - C_ / (1.0 - k1_ * k2_); }

double QuasilinearState::u(const Vec2& x) const { return u_of_v(v(x)); }

Vec2 QuasilinearState::du(const Vec2& x) const { return F(x, v(x)) / vs_; }

double QuasilinearState::pde_residual(const Vec2& x, double u, const Vec2& du) const {
  const double p = 1.0 - k1_ * k2_;
  const double den = (k1_ * k1_ - k1_ * k2_) * std::sqrt(k1_ * k1_ + (k1_ * k1_ - 1.0) * norm2(du)) +
                     k1_ * k1_ * p;
  return norm((p * u + C_) / den * du - map_->S(x) / (k1_ * k1_ - 1.0));
}

namespace {

// RK4 sweep along one coordinate line: values at `coords` starting from (start, v0).
// `at(c)` maps a coordinate to the point on the line.
std::vector<double> sweep_line(const QuasilinearState& st, const std::vector<double>& coords,
                               double start, double v0, double spacing, int per_cell,
                               const std::function<Vec2(double)>& at) {
  std::vector<double> out(coords.size(), kNaN);
  auto steps_for = [&](double len) {
    return std::max(1, static_cast<int>(std::ceil(std::abs(len) / spacing * per_cell - 1e-9)));
  };
  // Upward from start.
  double c = start, v = v0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (coords[i] < start) continue;
    if (std::isfinite(v)) v = st.rk4(at(c), at(coords[i]), v, steps_for(coords[i] - c));
    c = coords[i];
    out[i] = v;
  }
  c = start;
  v = v0;
  for (std::size_t i = coords.size(); i-- > 0;) {
    if (coords[i] >= start) continue;
    if (std::isfinite(v)) v = st.rk4(at(c), at(coords[i]), v, steps_for(coords[i] - c));
    c = coords[i];
    out[i] = v;
  }
  return out;
}

// v at every node, first along the line through x0 in one axis, then across.
std::vector<double> sweep(const QuasilinearState& st, const Grid& g, bool rows_first,
                          int per_cell) {
  std::vector<double> xs(g.nx()), ys(g.ny());
  for (std::size_t i = 0; i < g.nx(); ++i) xs[i] = g.point(i, 0).x1;
  for (std::size_t j = 0; j < g.ny(); ++j) ys[j] = g.point(0, j).x2;
  const Vec2 x0 = st.x0();
  std::vector<double> out(g.size(), kNaN);
  if (rows_first) {
    const auto base = sweep_line(st, xs, x0.x1, st.z0(), g.dx(), per_cell,
                                 [&](double c) { return Vec2{c, x0.x2}; });
    for (std::size_t i = 0; i < g.nx(); ++i) {
      if (!std::isfinite(base[i])) continue;
      const auto col = sweep_line(st, ys, x0.x2, base[i], g.dy(), per_cell,
                                  [&](double c) { return Vec2{xs[i], c}; });
      for (std::size_t j = 0; j < g.ny(); ++j) out[g.index(i, j)] = col[j];
    }
  } else {
    const auto base = sweep_line(st, ys, x0.x2, st.z0(), g.dy(), per_cell,
                                 [&](double c) { return Vec2{x0.x1, c}; });
    for (std::size_t j = 0; j < g.ny(); ++j) {
      if (!std::isfinite(base[j])) continue;
      const auto row = sweep_line(st, xs, x0.x1, base[j], g.dx(), per_cell,
                                  [&](double c) { return Vec2{c, ys[j]}; });
      for (std::size_t i = 0; i < g.nx(); ++i) out[g.index(i, j)] = row[i];
    }
  }
  return out;
}

}  // namespace

Interval delta0_window(const ImagingMap& map, double C, const Media& media, const Vec2& x0) {
  const double k1 = media.kappa1(), k2 = media.kappa2();
  Interval w;
  w.lo = 0.0;
  w.hi = (-C - k1 * (k1 - k2) * norm(map.S(x0)) / std::sqrt(k1 * k1 - 1.0)) / (1.0 - k1 * k2);
  return w;
}

QuasilinearResult solve_quasilinear(const ImagingMap& map, double C, const Media& media,
                                    const Vec2& x0, double delta0, const Grid& grid,
                                    const QuasilinearOptions& opts) {
  media.validate_lens();
  const double k1 = media.kappa1(), k2 = media.kappa2();
  if (!(k1 * k2 < 1.0)) {
    throw Error(ErrorCode::InvalidInput, "quasilinear solver needs n1 > n3");
  }
  if (!(C < 0.0)) throw Error(ErrorCode::InvalidInput, "C must be negative");
  const double s0 = norm(map.S(x0));
  const double bound = -C * std::sqrt(k1 * k1 - 1.0) / (k1 * (k1 - k2));
  if (!(s0 < bound)) {
    throw Error(ErrorCode::BoundViolation, "|S(x0)| must be below " + format(bound), x0,
                bound - s0);
  }
  const Interval window = delta0_window(map, C, media, x0);
  if (!window.contains(delta0)) {
    throw Error(ErrorCode::InitialConditionOutOfWindow,
                "delta0 must lie in (0, " + format(window.hi) + ")", x0,
                std::min(delta0 - window.lo, window.hi - delta0));
  }
  CompatibilityReport strict = check_map_strict(map, grid, opts.map_tol);
  if (!strict.pass) {
    throw Error(ErrorCode::CurlViolation,
                "map fails curl S = 0 or S x D|S|^2 = 0 (residual " +
                    format(strict.combo_residual) + ")",
                strict.worst, strict.combo_residual);
  }

  auto state = std::make_shared<const QuasilinearState>(std::make_shared<const ImagingMap>(map),
                                                        C, k1, k2, x0, delta0,
                                                        opts.evaluator_steps);
  const auto primary = sweep(*state, grid, true, 4);
  const auto halved = sweep(*state, grid, true, 8);
  const auto transposed = sweep(*state, grid, false, 4);

  GridData<double> vg(grid);
  Grid accepted_grid = grid;
  double transposed_gap = 0.0, richardson = 0.0, min_margin = kInf;
  Vec2 gap_at;
  std::size_t accepted = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Vec2 x = grid.point(k);
    const double v = primary[k];
    const bool ok = grid.active(k) && std::isfinite(v) && std::isfinite(transposed[k]) &&
                    state->window_margin(x, v) > 0.0;
    accepted_grid.set_active(k, ok);
    vg.values[k] = v;
    vg.valid[k] = ok ? 1 : 0;
    if (!ok) continue;
    ++accepted;
    min_margin = std::min(min_margin, state->window_margin(x, v));
    if (std::abs(v - transposed[k]) > transposed_gap) {
      transposed_gap = std::abs(v - transposed[k]);
      gap_at = x;
    }
    if (std::isfinite(halved[k])) richardson = std::max(richardson, std::abs(v - halved[k]));
  }

  // The cell around x0 must survive.
  const std::size_t c = grid.nearest(x0);
  const std::size_t ci = c % grid.nx(), cj = c / grid.nx();
  const std::ptrdiff_t di[5] = {0, 1, -1, 0, 0}, dj[5] = {0, 0, 0, 1, -1};
  for (int n = 0; n < 5; ++n) {
    const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(ci) + di[n];
    const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(cj) + dj[n];
    if (i < 0 || j < 0 || i >= static_cast<std::ptrdiff_t>(grid.nx()) ||
        j >= static_cast<std::ptrdiff_t>(grid.ny())) {
      continue;
    }
    const std::size_t k = grid.index(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    if (grid.active(k) && !vg.ok(k)) {
      throw Error(ErrorCode::DomainCollapse,
                  "the solution leaves its admissible window within one cell of x0", x0, 0.0);
    }
  }
  if (transposed_gap > opts.path_tol) {
    throw Error(ErrorCode::PathInconsistency,
                "row-first and column-first sweeps differ by " + format(transposed_gap), gap_at,
                transposed_gap);
  }

  const Domain box = bounding_box(grid);
  GraphSurface u(
      box,
      [state](const Vec2& x) {
        const double v = state->v(x);
        return std::isfinite(v) ? state->u_of_v(v) : kNaN;
      },
      [state](const Vec2& x) { return state->du(x); });

  double evaluator_error = 0.0, pde_fd = 0.0, pde_an = 0.0;
  const double h = opts.pde_fd_step > 0.0 ? opts.pde_fd_step : 1e-4 * box.diameter();
  for (std::size_t k : accepted_grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const double vx = state->v(x);
    evaluator_error = std::max(evaluator_error, std::abs(vx - vg.values[k]));
    const double ux = state->u_of_v(vx);
    pde_an = std::max(pde_an, state->pde_residual(x, ux, state->F(x, vx) / state->v_scale()));
    const Vec2 du{(u.height(x + Vec2{h, 0.0}) - u.height(x - Vec2{h, 0.0})) / (2.0 * h),
                  (u.height(x + Vec2{0.0, h}) - u.height(x - Vec2{0.0, h})) / (2.0 * h)};
    const double r = state->pde_residual(x, ux, du);
    if (!(r <= pde_fd)) pde_fd = r;
  }

  LensDesign lens = vertical_design(u, C, media, accepted_grid, opts.design);
  warn_if_plane_cuts_lens(lens, map.a());
  QuasilinearResult res{state, u, std::move(lens), std::move(vg), std::move(strict)};
  res.accepted = accepted;
  res.transposed_disagreement = transposed_gap;
  res.richardson_error = richardson;
  res.evaluator_error = evaluator_error;
  res.pde_residual_fd = pde_fd;
  res.pde_residual_analytic = pde_an;
  res.min_window_margin = min_margin;
  return res;
}

// --- n1 < n3 ------------------------------------------------------------------

ReverseLens solve_reverse_index(const ImagingMap& map, double C, const Media& media,
                                const Vec2& y0, double delta0, const Grid& source_seeds,
                                const Grid& image_grid, const QuasilinearOptions& opts) {
  media.validate_lens();
  if (!(media.n1 < media.n3)) {
    throw Error(ErrorCode::InvalidInput, "reverse-index solver needs n1 < n3");
  }
  ImagingMap inv = map.inverted(source_seeds);
  const Media swapped{media.n3, media.n2, media.n1};
  QuasilinearResult rev = solve_quasilinear(inv, C, swapped, y0, delta0, image_grid, opts);

  // Flip z' = a - z: the reversed exit face becomes the physical entry face.
  const double a = map.a();
  auto flip = [a](const Vec3& p) { return Vec3{p.x, p.y, a - p.z}; };
  const ParametricSheet& far = rev.lens.sigma2;
  auto far_map = std::make_shared<const ParametricSheet>(far);
  ParametricSheet entry(far.grid(), [far_map, flip](const Vec2& y) -> std::optional<Vec3> {
    const auto p = far_map->evaluate(y);
    if (!p) return std::nullopt;
    return flip(*p);
  });
  const GraphSurface up = rev.u;
  ParametricSheet exit(far.grid(), [up, a](const Vec2& y) -> std::optional<Vec3> {
    const double h = up.height(y);
    if (!std::isfinite(h)) return std::nullopt;
    return Vec3(y, a - h);
  });
  LensDesign lens(kE3, C, EntryFace{std::move(entry)}, std::move(exit), rev.lens.nodes);
  lens.media = media;
  lens.warnings = rev.lens.warnings;
  lens.admissible_C = rev.lens.admissible_C;
  lens.compatibility_margin = rev.lens.compatibility_margin;
  lens.tangency_residual = rev.lens.tangency_residual;
  lens.min_denominator = rev.lens.min_denominator;
  return ReverseLens{std::move(rev), std::move(lens), std::move(inv)};
}

// --- mirrors ----------------------------------------------------------------

MirrorImaging solve_mirror_imaging(const ImagingMap& map, double C, const Vec2& x0, double u0,
                                   const Grid& grid, const ImagingOptions& opts) {
  if (!(C > 0.0)) {
    throw Error(ErrorCode::NonpositiveThickness, "mirror imaging needs C > 0 for d > 0");
  }
  double curl = 0.0;
  Vec2 worst;
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const Mat2 J = map.DS(x);
    const double c = std::abs(J(1, 0) - J(0, 1));
    if (!(c <= curl)) {
      curl = c;
      worst = x;
    }
  }
  if (!(curl <= opts.map_tol)) {
    throw Error(ErrorCode::CurlViolation, "curl S = " + format(curl) + " is not zero", worst,
                curl);
  }
  auto shared = std::make_shared<const ImagingMap>(map);
  PlanarField grad = [shared, C](const Vec2& x) { return shared->S(x) / C; };
  const Domain box = bounding_box(grid);
  PathIntegralSurface u = integrate_gradient(grad, x0, u0, box, grid, opts);
  MirrorDesign m =
      design_far_field_mirrors(u.surface, constant_field(kE3, box), kE3, C, grid, opts.design);
  warn_if_plane_cuts_lens(m, map.a());
  MirrorImaging out{u.surface, std::move(m)};
  out.path_residual = u.path_residual;
  out.curl_residual = curl;
  return out;
}

}  // namespace freeform
