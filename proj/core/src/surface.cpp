#include "freeform/surface.hpp"

#include <algorithm>
#include <cmath>

#include "freeform/error.hpp"
#include "freeform/geometry.hpp"

namespace freeform {

GraphSurface::GraphSurface(Domain domain, Height u, Gradient du, Hessian d2u)
    : domain_(std::move(domain)), u_(std::move(u)), du_(std::move(du)), d2u_(std::move(d2u)) {}

GraphSurface GraphSurface::flat(double height, const Domain& domain) {
  return GraphSurface(
      domain, [height](const Vec2&) { return height; }, [](const Vec2&) { return Vec2{}; },
      [](const Vec2&) { return Mat2{}; });
}

GraphSurface GraphSurface::from_expression(const Expression& u, const Domain& domain) {
  auto e = std::make_shared<const DifferentiableExpression>(u);
  return GraphSurface(
      domain, [e](const Vec2& x) { return e->value(x); },
      [e](const Vec2& x) { return e->gradient(x); }, [e](const Vec2& x) { return e->hessian(x); });
}

std::optional<Mat2> GraphSurface::hessian(const Vec2& x) const {
  if (!d2u_) return std::nullopt;
  return d2u_(x);
}

Vec3 GraphSurface::normal(const Vec2& x) const { return graph_normal(du_(x)); }

namespace {

struct Residual {
  double g = 0.0;
  double slope = 0.0;
  bool ok = false;
};

Residual graph_residual(const GraphSurface& s, const Vec3& o, const Vec3& d, double t) {
  const Vec2 foot = o.xy() + t * d.xy();
  const double u = s.height(foot);
  if (!std::isfinite(u)) return {};
  const Vec2 du = s.gradient(foot);
  return {u - (o.z + t * d.z), dot(du, d.xy()) - d.z, true};
}

}  // namespace

GraphHit intersect_graph(const GraphSurface& surface, const Vec3& origin, const Vec3& dir,
                         const GraphIntersectOptions& opts) {
  auto finish = [&](double t) {
    const Residual r = graph_residual(surface, origin, dir, t);
    if (std::abs(r.slope) < opts.grazing_tol) {
      throw Error(ErrorCode::MultipleGrazing, "ray is tangent to the surface at the hit",
                  origin.xy() + t * dir.xy(), r.slope);
    }
    const Vec2 foot = origin.xy() + t * dir.xy();
    return GraphHit{t, foot, Vec3(foot, surface.height(foot)), r.slope};
  };

  // Vertical rays meet a graph exactly once.
  if (dir.x == 0.0 && dir.y == 0.0) {
    const double u = surface.height(origin.xy());
    const double t = (u - origin.z) / dir.z;
    if (!std::isfinite(t) || t <= opts.t_min || t > opts.t_max) {
      throw Error(ErrorCode::NoIntersection, "vertical ray does not reach the surface",
                  origin.xy(), t);
    }
    return GraphHit{t, origin.xy(), Vec3(origin.xy(), u), -dir.z};
  }

  const int n = std::max(opts.scan_samples, 2);
  const double span = opts.t_max - opts.t_min;
  double t_prev = opts.t_min;
  Residual r_prev = graph_residual(surface, origin, dir, t_prev);
  for (int k = 1; k <= n; ++k) {
    const double t = opts.t_min + span * static_cast<double>(k) / n;
    const Residual r = graph_residual(surface, origin, dir, t);
    if (r.ok && r.g == 0.0) return finish(t);
    if (r.ok && r_prev.ok && (r.g > 0.0) != (r_prev.g > 0.0)) {
      // Safeguarded Newton inside the bracket [a, b].
      double a = t_prev, b = t;
      double ga = r_prev.g;
      double x = 0.5 * (a + b);
      for (int it = 0; it < 100; ++it) {
        const Residual rx = graph_residual(surface, origin, dir, x);
        if (!rx.ok) {
          x = 0.5 * (a + b);
          continue;
        }
        if (rx.g == 0.0) break;
        if ((rx.g > 0.0) == (ga > 0.0)) {
          a = x;
          ga = rx.g;
        } else {
          b = x;
        }
        double next = rx.slope != 0.0 ? x - rx.g / rx.slope : 0.5 * (a + b);
        if (!(next > a && next < b)) next = 0.5 * (a + b);
        const bool done = std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x));
        x = next;
        if (done || b - a <= 1e-15 * std::max(1.0, std::abs(b))) break;
      }
      return finish(x);
    }
    t_prev = t;
    r_prev = r;
  }
  throw Error(ErrorCode::NoIntersection, "ray does not reach the surface within t_max",
              origin.xy(), opts.t_max);
}

ParametricSheet::ParametricSheet(Grid grid, Map map)
    : grid_(std::move(grid)),
      map_(std::move(map)),
      points_(grid_.size()),
      valid_(grid_.size(), 0) {
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    if (!grid_.active(k)) continue;
    const auto p = map_(grid_.point(k));
    if (p && is_finite(*p)) {
      points_[k] = *p;
      valid_[k] = 1;
    }
  }
}

ParametricSheet::ParametricSheet(Grid grid, std::vector<Vec3> points,
                                 std::vector<unsigned char> valid)
    : grid_(std::move(grid)), points_(std::move(points)), valid_(std::move(valid)) {
  if (points_.size() != grid_.size() || valid_.size() != grid_.size()) {
    throw Error(ErrorCode::InvalidInput, "sheet samples do not match the grid size");
  }
}

std::optional<Vec3> ParametricSheet::evaluate(const Vec2& s) const {
  if (!map_) return std::nullopt;
  auto p = map_(s);
  if (p && !is_finite(*p)) return std::nullopt;
  return p;
}

std::size_t ParametricSheet::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), 1));
}

double ParametricSheet::fd_step() const {
  return 1e-6 * norm(grid_.hi() - grid_.lo());
}

}  // namespace freeform
