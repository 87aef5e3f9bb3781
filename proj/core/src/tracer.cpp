#include "freeform/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "freeform/geometry.hpp"

namespace freeform {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Vec3> compute_node_normals(const ParametricSheet& s) {
  const Grid& g = s.grid();
  std::vector<Vec3> out(g.size());
  const std::size_t nx = g.nx(), ny = g.ny();
  auto ok = [&](std::size_t i, std::size_t j) { return i < nx && j < ny && s.valid(i, j); };
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      if (!s.valid(i, j)) continue;
      const bool l = i > 0 && ok(i - 1, j), r = ok(i + 1, j);
      const bool b = j > 0 && ok(i, j - 1), t = ok(i, j + 1);
      Vec3 ti, tj;
      if (l && r) {
        ti = s.node(i + 1, j) - s.node(i - 1, j);
      } else if (r) {
        ti = s.node(i + 1, j) - s.node(i, j);
      } else if (l) {
        ti = s.node(i, j) - s.node(i - 1, j);
      }
      if (b && t) {
        tj = s.node(i, j + 1) - s.node(i, j - 1);
      } else if (t) {
        tj = s.node(i, j + 1) - s.node(i, j);
      } else if (b) {
        tj = s.node(i, j) - s.node(i, j - 1);
      }
      const Vec3 n = cross(ti, tj);
      if (norm(n) > 0.0) out[g.index(i, j)] = normalized(n);
    }
  }
  return out;
}

// Squared distance from p to the forward half of the ray's line.
double line_distance2(const Ray& r, const Vec3& p) {
  const Vec3 q = p - r.origin;
  const double t = dot(q, r.direction);
  if (t < -1e-9) return kInf;
  return norm2(q - t * r.direction);
}

// Coarse-to-fine search for the valid node closest to the ray.
std::optional<std::pair<std::size_t, std::size_t>> seed_node(const Ray& r,
                                                             const ParametricSheet& s) {
  const Grid& g = s.grid();
  const std::size_t nx = g.nx(), ny = g.ny();
  std::size_t stride = std::max<std::size_t>(1, std::max(nx, ny) / 32);
  double best = kInf;
  std::size_t bi = 0, bj = 0;
  auto visit = [&](std::size_t i, std::size_t j) {
    if (!s.valid(i, j)) return;
    const double d = line_distance2(r, s.node(i, j));
    if (d < best) {
      best = d;
      bi = i;
      bj = j;
    }
  };
  for (std::size_t j = 0; j < ny; j += stride) {
    for (std::size_t i = 0; i < nx; i += stride) visit(i, j);
    visit(nx - 1, j);
  }
  for (std::size_t i = 0; i < nx; i += stride) visit(i, ny - 1);
  visit(nx - 1, ny - 1);
  if (!std::isfinite(best)) return std::nullopt;
  while (true) {
    const std::size_t ci = bi, cj = bj;
    const std::size_t i0 = ci > 2 * stride ? ci - 2 * stride : 0;
    const std::size_t j0 = cj > 2 * stride ? cj - 2 * stride : 0;
    const std::size_t i1 = std::min(nx - 1, ci + 2 * stride);
    const std::size_t j1 = std::min(ny - 1, cj + 2 * stride);
    const std::size_t step = std::max<std::size_t>(1, stride / 2);
    for (std::size_t j = j0; j <= j1; j += step) {
      for (std::size_t i = i0; i <= i1; i += step) visit(i, j);
    }
    if (stride == 1) break;
    stride = step;
  }
  return std::make_pair(bi, bj);
}

bool near_edge(const ParametricSheet& s, std::ptrdiff_t ci, std::ptrdiff_t cj) {
  const auto nx = static_cast<std::ptrdiff_t>(s.grid().nx());
  const auto ny = static_cast<std::ptrdiff_t>(s.grid().ny());
  for (std::ptrdiff_t j = cj - 1; j <= cj + 2; ++j) {
    for (std::ptrdiff_t i = ci - 1; i <= ci + 2; ++i) {
      if (i < 0 || j < 0 || i >= nx || j >= ny) return true;
      if (!s.valid(static_cast<std::size_t>(i), static_cast<std::size_t>(j))) return true;
    }
  }
  return false;
}

// Solves a*x + b*y + c*z = rhs.
bool solve3(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& rhs, Vec3& out) {
  const double det = dot(a, cross(b, c));
  if (!(std::abs(det) > 1e-300)) return false;
  out = {dot(rhs, cross(b, c)) / det, dot(a, cross(rhs, c)) / det, dot(a, cross(b, rhs)) / det};
  return true;
}

[[noreturn]] void miss(const Ray& r, const char* why) {
  throw Error(ErrorCode::Miss, why, r.origin.xy(), 0.0);
}

SurfaceHit exact_hit(const Ray& r, const ParametricSheet& s, Vec2 p) {
  const double h = s.fd_step();
  auto f = [&](const Vec2& q) {
    auto v = s.evaluate(q);
    if (!v) miss(r, "ray leaves the region where the sheet is defined");
    return *v;
  };
  auto tangents = [&](const Vec2& q, Vec3& a, Vec3& b) {
    a = (f(q + Vec2{h, 0.0}) - f(q - Vec2{h, 0.0})) / (2.0 * h);
    b = (f(q + Vec2{0.0, h}) - f(q - Vec2{0.0, h})) / (2.0 * h);
  };
  const double scale = norm(s.grid().hi() - s.grid().lo());
  double t = dot(f(p) - r.origin, r.direction);
  bool converged = false;
  for (int it = 0; it < 50; ++it) {
    const Vec3 res = f(p) - r.origin - t * r.direction;
    Vec3 a, b, step;
    tangents(p, a, b);
    if (!solve3(a, b, -r.direction, -res, step)) miss(r, "ray parallel to the sheet");
    p = p + Vec2{step.x, step.y};
    t += step.z;
    // Rounding in the difference tangents keeps the steps near 1e-14, so the tight
    // exit rarely fires; a step below 1e-13 after a few iterations is as good as it gets.
    const double ds = std::abs(step.x) + std::abs(step.y);
    if ((ds < 1e-15 * scale && std::abs(step.z) < 1e-15 * (1.0 + std::abs(t))) ||
        (it >= 2 && ds < 1e-13 * scale && std::abs(step.z) < 1e-13 * (1.0 + std::abs(t)))) {
      converged = true;
      break;
    }
  }
  const Vec3 point = f(p);
  if (!converged || norm(point - r.origin - t * r.direction) > 1e-9 * (1.0 + std::abs(t))) {
    miss(r, "sheet intersection did not converge");
  }
  if (t <= 0.0) miss(r, "sheet lies behind the ray");
  Vec3 a, b;
  tangents(p, a, b);
  SurfaceHit hit;
  hit.t = t;
  hit.point = point;
  hit.normal = normalized(cross(a, b));
  hit.param = p;
  const Grid& g = s.grid();
  hit.edge = near_edge(s, static_cast<std::ptrdiff_t>(std::floor((p.x1 - g.lo().x1) / g.dx())),
                       static_cast<std::ptrdiff_t>(std::floor((p.x2 - g.lo().x2) / g.dy())));
  return hit;
}

SurfaceHit mesh_hit(const Ray& r, const ParametricSheet& s, const std::vector<Vec3>& normals,
                    std::size_t si, std::size_t sj) {
  const Grid& g = s.grid();
  auto ci = static_cast<std::ptrdiff_t>(std::min(si, g.nx() - 2));
  auto cj = static_cast<std::ptrdiff_t>(std::min(sj, g.ny() - 2));
  const auto max_i = static_cast<std::ptrdiff_t>(g.nx() - 2);
  const auto max_j = static_cast<std::ptrdiff_t>(g.ny() - 2);
  // Start in whichever of the four cells around the seed node the ray crosses.
  for (int moves = 0; moves < 32; ++moves) {
    const auto i = static_cast<std::size_t>(ci), j = static_cast<std::size_t>(cj);
    if (!(s.valid(i, j) && s.valid(i + 1, j) && s.valid(i, j + 1) && s.valid(i + 1, j + 1))) {
      miss(r, "ray crosses a sheet cell without valid samples");
    }
    const Vec3 p00 = s.node(i, j), p10 = s.node(i + 1, j);
    const Vec3 p01 = s.node(i, j + 1), p11 = s.node(i + 1, j + 1);
    double u = 0.5, v = 0.5;
    double t = dot(0.25 * (p00 + p10 + p01 + p11) - r.origin, r.direction);
    bool solved = false;
    for (int it = 0; it < 40; ++it) {
      const Vec3 B = (1 - u) * (1 - v) * p00 + u * (1 - v) * p10 + (1 - u) * v * p01 + u * v * p11;
      const Vec3 Bu = (1 - v) * (p10 - p00) + v * (p11 - p01);
      const Vec3 Bv = (1 - u) * (p01 - p00) + u * (p11 - p10);
      Vec3 step;
      if (!solve3(Bu, Bv, -r.direction, -(B - r.origin - t * r.direction), step)) break;
      u += step.x;
      v += step.y;
      t += step.z;
      // u, v are cell coordinates; rounding alone leaves steps near 1e-16 |B| / |Bu|.
      if (std::abs(step.x) + std::abs(step.y) < 1e-12 && std::abs(step.z) < 1e-12 * (1 + std::abs(t))) {
        solved = true;
        break;
      }
    }
    if (!solved) miss(r, "bilinear patch intersection did not converge");
    constexpr double eps = 1e-12;
    std::ptrdiff_t di = u < -eps ? -1 : (u > 1 + eps ? 1 : 0);
    std::ptrdiff_t dj = v < -eps ? -1 : (v > 1 + eps ? 1 : 0);
    if (ci + di < 0 || ci + di > max_i) di = 0;
    if (cj + dj < 0 || cj + dj > max_j) dj = 0;
    const bool inside = u >= -eps && u <= 1 + eps && v >= -eps && v <= 1 + eps;
    if (inside) {
      if (t <= 0.0) miss(r, "sheet lies behind the ray");
      SurfaceHit hit;
      hit.t = t;
      hit.point = (1 - u) * (1 - v) * p00 + u * (1 - v) * p10 + (1 - u) * v * p01 + u * v * p11;
      const Vec3 n = (1 - u) * (1 - v) * normals[g.index(i, j)] +
                     u * (1 - v) * normals[g.index(i + 1, j)] +
                     (1 - u) * v * normals[g.index(i, j + 1)] +
                     u * v * normals[g.index(i + 1, j + 1)];
      hit.normal = normalized(n);
      const Vec2 a = g.point(i, j), b = g.point(i + 1, j + 1);
      hit.param = {a.x1 + u * (b.x1 - a.x1), a.x2 + v * (b.x2 - a.x2)};
      hit.edge = near_edge(s, ci, cj);
      return hit;
    }
    if (di == 0 && dj == 0) miss(r, "ray passes outside the sampled sheet");
    ci += di;
    cj += dj;
  }
  miss(r, "bilinear patch walk did not settle");
}

}  // namespace

OpticalElement::OpticalElement(EntryFace geometry, Interaction kind, double n_before,
                               double n_after, SheetMode mode)
    : geometry_(std::move(geometry)),
      kind_(kind),
      n_before_(n_before),
      n_after_(n_after),
      mode_(mode) {
  if (mode_ == SheetMode::Mesh) {
    if (const auto* s = std::get_if<ParametricSheet>(&geometry_)) {
      node_normals_ = std::make_shared<const std::vector<Vec3>>(compute_node_normals(*s));
    }
  }
  if (!node_normals_) node_normals_ = std::make_shared<const std::vector<Vec3>>();
}

OpticalElement OpticalElement::refracting(EntryFace geometry, double n_before, double n_after,
                                          SheetMode mode) {
  MediumPair check(n_before, n_after);
  return OpticalElement(std::move(geometry), Interaction::Refract, n_before, n_after, mode);
}

OpticalElement OpticalElement::reflecting(EntryFace geometry, SheetMode mode) {
  return OpticalElement(std::move(geometry), Interaction::Reflect, 1.0, 1.0, mode);
}

SurfaceHit intersect_sheet(const Ray& ray, const ParametricSheet& sheet, SheetMode mode,
                           const std::vector<Vec3>* node_normals) {
  const auto seed = seed_node(ray, sheet);
  if (!seed) miss(ray, "sheet has no valid samples in front of the ray");
  if (mode == SheetMode::Exact && sheet.has_map()) {
    return exact_hit(ray, sheet, sheet.grid().point(seed->first, seed->second));
  }
  if (node_normals && node_normals->size() == sheet.grid().size()) {
    return mesh_hit(ray, sheet, *node_normals, seed->first, seed->second);
  }
  const auto normals = compute_node_normals(sheet);
  return mesh_hit(ray, sheet, normals, seed->first, seed->second);
}

TraceRow trace(const Ray& input, std::span<const OpticalElement> elements,
               const TraceTarget& target, const Vec2& source) {
  TraceRow row;
  row.source = source;
  Ray ray = input;
  try {
    for (const OpticalElement& el : elements) {
      SurfaceHit hit;
      if (const auto* g = std::get_if<GraphSurface>(&el.geometry())) {
        GraphIntersectOptions o;
        o.t_min = 1e-9;
        o.t_max = 20.0 * (g->domain().diameter() + 1.0 + std::abs(ray.origin.z));
        o.scan_samples = 512;
        const GraphHit gh = intersect_graph(*g, ray.origin, ray.direction, o);
        hit.t = gh.t;
        hit.point = gh.point;
        hit.normal = g->normal(gh.foot);
        hit.param = gh.foot;
      } else {
        const auto& s = std::get<ParametricSheet>(el.geometry());
        hit = intersect_sheet(ray, s, el.mode(), &el.node_normals());
      }
      Vec3 nu = hit.normal;
      if (dot(nu, ray.direction) < 0.0) nu = -nu;
      const Vec3 next = el.kind() == Interaction::Refract
                            ? refract(ray.direction, nu, el.n_after() / el.n_before()).m
                            : reflect(ray.direction, nu);
      row.hits.push_back(hit.point);
      row.edge_hit = row.edge_hit || hit.edge;
      ray = {hit.point, next};
    }
    row.exit_direction = ray.direction;
    row.exit_point = ray.origin;
    if (target.direction) row.direction_error = norm(ray.direction - *target.direction);
    if (target.landing) {
      if (ray.direction.z > 1e-15) {
        const double t = (target.plane - ray.origin.z) / ray.direction.z;
        row.exit_point = ray.origin + t * ray.direction;
        row.extrapolated = t < 0.0;
      } else {
        row.extrapolated = true;
      }
      if (target.footprint && !target.footprint->contains(row.exit_point.xy(), 1e-9)) {
        row.extrapolated = true;
      }
      row.position_error = norm(row.exit_point.xy() - target.landing(source));
    }
    row.ok = true;
  } catch (const Error& e) {
    row.failure = e.code();
    row.message = e.what();
  }
  return row;
}

TraceReport trace_field(const IncidentField& field, std::span<const Vec2> sources,
                        std::span<const OpticalElement> elements, const TraceTarget& target) {
  TraceReport report;
  report.rows.reserve(sources.size());
  std::size_t ok = 0;
  for (const Vec2& x : sources) {
    TraceRow row = trace(Ray{Vec3(x, 0.0), field(x)}, elements, target, x);
    if (row.ok) {
      ++ok;
      report.max_direction_error = std::max(report.max_direction_error, row.direction_error);
      report.max_position_error = std::max(report.max_position_error, row.position_error);
      report.mean_direction_error += row.direction_error;
      report.mean_position_error += row.position_error;
      if (row.edge_hit) ++report.edge_hits;
      if (row.extrapolated) ++report.extrapolated;
    } else {
      ++report.failures;
    }
    report.rows.push_back(std::move(row));
  }
  if (ok > 0) {
    report.mean_direction_error /= static_cast<double>(ok);
    report.mean_position_error /= static_cast<double>(ok);
  }
  return report;
}

std::vector<Vec2> sample_points(const Domain& domain, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(domain.lo().x1, domain.hi().x1);
  std::uniform_real_distribution<double> uy(domain.lo().x2, domain.hi().x2);
  std::vector<Vec2> out;
  out.reserve(count);
  while (out.size() < count) {
    const Vec2 p{ux(rng), uy(rng)};
    if (domain.contains(p, 0.0)) out.push_back(p);
  }
  return out;
}

std::vector<OpticalElement> lens_elements(const LensDesign& design, SheetMode mode) {
  const Media& m = design.media;
  return {OpticalElement::refracting(design.sigma1, m.n1, m.n2, mode),
          OpticalElement::refracting(EntryFace{design.sigma2}, m.n2, m.n3, mode)};
}

std::vector<OpticalElement> mirror_elements(const PairDesign& design, SheetMode mode) {
  return {OpticalElement::reflecting(design.sigma1, mode),
          OpticalElement::reflecting(EntryFace{design.sigma2}, mode)};
}

}  // namespace freeform
