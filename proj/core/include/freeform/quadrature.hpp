#pragma once

#include <functional>
#include <span>
#include <vector>

#include "freeform/vec.hpp"

namespace freeform {

struct QuadratureOptions {
  /// Stop once successive Simpson refinements differ by less than this.
  double tol = 1e-12;
  int min_panels = 8;
  int max_panels = 1 << 15;
};

/// Composite Simpson on [a, b] with panel halving; the converged pair is
/// Richardson-combined before returning.
double simpson(const std::function<double(double)>& f, double a, double b,
               const QuadratureOptions& opts = {});

using PlanarField = std::function<Vec2(const Vec2&)>;

/// Integral of field . dr along the polyline through `vertices`.
double line_integral(const PlanarField& field, std::span<const Vec2> vertices,
                     const QuadratureOptions& opts = {});

/// Same integral with a fixed composite Gauss-Legendre rule (`panels` per segment).
/// No adaptivity, so the result is a smooth function of the vertices; used by
/// pointwise evaluators whose output gets differentiated numerically.
double line_integral_fixed(const PlanarField& field, std::span<const Vec2> vertices,
                           int panels = 16);

/// Axis-aligned path from `from` to `to`: first along x1, then along x2.
std::vector<Vec2> l_path_x1_first(const Vec2& from, const Vec2& to);
/// Axis-aligned path from `from` to `to`: first along x2, then along x1.
std::vector<Vec2> l_path_x2_first(const Vec2& from, const Vec2& to);
/// Alternating x1/x2 steps from `from` to `to` in `steps` stairs.
std::vector<Vec2> staircase_path(const Vec2& from, const Vec2& to, int steps);

}  // namespace freeform
