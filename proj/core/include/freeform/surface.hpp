#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "freeform/domain.hpp"
#include "freeform/expression.hpp"
#include "freeform/vec.hpp"

namespace freeform {

/// Surface z = u(x) over a planar domain, with gradient (and optional Hessian).
/// u may return NaN where it is undefined; intersection code treats that as no surface.
class GraphSurface {
 public:
  using Height = std::function<double(const Vec2&)>;
  using Gradient = std::function<Vec2(const Vec2&)>;
  using Hessian = std::function<Mat2(const Vec2&)>;

  GraphSurface(Domain domain, Height u, Gradient du, Hessian d2u = {});

  static GraphSurface flat(double height, const Domain& domain);
  static GraphSurface from_expression(const Expression& u, const Domain& domain);

  double height(const Vec2& x) const { return u_(x); }
  Vec2 gradient(const Vec2& x) const { return du_(x); }
  std::optional<Mat2> hessian(const Vec2& x) const;
  Vec3 point(const Vec2& x) const { return {x, u_(x)}; }
  /// Upward unit normal.
  Vec3 normal(const Vec2& x) const;
  const Domain& domain() const { return domain_; }

 private:
  Domain domain_;
  Height u_;
  Gradient du_;
  Hessian d2u_;
};

struct GraphHit {
  double t = 0.0;
  Vec2 foot;
  Vec3 point;
  /// d/dt of u(foot(t)) - z(t) at the root.
  double slope = 0.0;
};

struct GraphIntersectOptions {
  double t_min = 1e-9;
  double t_max = 100.0;
  int scan_samples = 256;
  double grazing_tol = 1e-10;
};

/// First crossing t > t_min of origin + t*dir with the graph, by a sign scan
/// followed by safeguarded Newton. Throws NoIntersection or MultipleGrazing.
GraphHit intersect_graph(const GraphSurface& surface, const Vec3& origin, const Vec3& dir,
                         const GraphIntersectOptions& opts = {});

/// Vector-valued sheet x -> f(x) sampled on a grid, optionally backed by the exact map.
class ParametricSheet {
 public:
  using Map = std::function<std::optional<Vec3>(const Vec2&)>;

  /// Samples `map` at every active node of `grid`; nodes where it fails are invalid.
  ParametricSheet(Grid grid, Map map);
  /// Sample-only sheet (e.g. re-imported mesh).
  ParametricSheet(Grid grid, std::vector<Vec3> points, std::vector<unsigned char> valid);

  bool has_map() const { return static_cast<bool>(map_); }
  std::optional<Vec3> evaluate(const Vec2& s) const;
  const Grid& grid() const { return grid_; }
  const std::vector<Vec3>& points() const { return points_; }
  bool valid(std::size_t k) const { return valid_[k] != 0; }
  bool valid(std::size_t i, std::size_t j) const { return valid(grid_.index(i, j)); }
  const Vec3& node(std::size_t i, std::size_t j) const { return points_[grid_.index(i, j)]; }
  std::size_t valid_count() const;
  /// Step for central differences of the exact map.
  double fd_step() const;

 private:
  Grid grid_;
  Map map_;
  std::vector<Vec3> points_;
  std::vector<unsigned char> valid_;
};

}  // namespace freeform
