#include "freeform/quadrature.hpp"

#include <cmath>

#include <boost/math/quadrature/gauss.hpp>

namespace freeform {

double simpson(const std::function<double(double)>& f, double a, double b,
               const QuadratureOptions& opts) {
  if (a == b) return 0.0;
  int n = opts.min_panels;
  const double fa = f(a);
  const double fb = f(b);
  // Trapezoid sums reused across halvings: ends + interior nodes.
  double h = (b - a) / n;
  double interior = 0.0;
  for (int k = 1; k < n; ++k) interior += f(a + k * h);
  double trap = h * (0.5 * (fa + fb) + interior);
  double prev_simpson = 0.0;
  bool have_prev = false;
  while (true) {
    double mids = 0.0;
    for (int k = 0; k < n; ++k) mids += f(a + (k + 0.5) * h);
    const double trap2 = 0.5 * trap + 0.5 * h * mids;
    const double s = (4.0 * trap2 - trap) / 3.0;
    interior += mids;
    n *= 2;
    h *= 0.5;
    trap = trap2;
    if (have_prev) {
      const double diff = s - prev_simpson;
      if (std::abs(diff) < opts.tol || n >= opts.max_panels) return s + diff / 15.0;
    }
    prev_simpson = s;
    have_prev = true;
  }
}

double line_integral(const PlanarField& field, std::span<const Vec2> vertices,
                     const QuadratureOptions& opts) {
  double total = 0.0;
  for (std::size_t k = 1; k < vertices.size(); ++k) {
    const Vec2 p = vertices[k - 1];
    const Vec2 d = vertices[k] - p;
    if (d.x1 == 0.0 && d.x2 == 0.0) continue;
    total += simpson([&](double t) { return dot(field(p + d * t), d); }, 0.0, 1.0, opts);
  }
  return total;
}

double line_integral_fixed(const PlanarField& field, std::span<const Vec2> vertices,
                           int panels) {
  using Rule = boost::math::quadrature::gauss<double, 10>;
  double total = 0.0;
  for (std::size_t k = 1; k < vertices.size(); ++k) {
    const Vec2 p = vertices[k - 1];
    const Vec2 d = vertices[k] - p;
    if (d.x1 == 0.0 && d.x2 == 0.0) continue;
    const double w = 1.0 / panels;
    for (int j = 0; j < panels; ++j) {
      total += Rule::integrate([&](double t) { return dot(field(p + d * t), d); }, j * w,
                               (j + 1) * w);
    }
  }
  return total;
}

std::vector<Vec2> l_path_x1_first(const Vec2& from, const Vec2& to) {
  return {from, {to.x1, from.x2}, to};
}

std::vector<Vec2> l_path_x2_first(const Vec2& from, const Vec2& to) {
  return {from, {from.x1, to.x2}, to};
}

std::vector<Vec2> staircase_path(const Vec2& from, const Vec2& to, int steps) {
  std::vector<Vec2> out;
  out.reserve(2 * static_cast<std::size_t>(steps) + 1);
  out.push_back(from);
  const Vec2 step = (to - from) / static_cast<double>(steps);
  Vec2 p = from;
  for (int k = 0; k < steps; ++k) {
    p.x1 += step.x1;
    out.push_back(p);
    p.x2 += step.x2;
    out.push_back(p);
  }
  out.back() = to;
  return out;
}

}  // namespace freeform
