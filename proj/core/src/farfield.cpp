#include "freeform/farfield.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "freeform/error.hpp"
#include "freeform/geometry.hpp"

namespace freeform {

void Media::validate_lens() const {
  for (double n : {n1, n2, n3}) {
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::InvalidInput, "refractive indices must be positive");
    }
  }
  if (!(n2 > std::max(n1, n3))) {
    throw Error(ErrorCode::InvalidInput, "lens index n2 must exceed both n1 and n3");
  }
}

RayHit strike(const GraphSurface& sigma1, const IncidentField& field, const Vec2& x,
              double t_max) {
  const Vec3 e = field(x);
  GraphIntersectOptions o;
  o.t_max = t_max;
  o.t_min = 1e-12 * t_max;
  o.scan_samples = 64;
  const GraphHit hit = intersect_graph(sigma1, Vec3(x, 0.0), e, o);
  return {hit.foot, hit.t, hit.point};
}

GridData<double> PairDesign::thickness() const {
  GridData<double> out(nodes.grid);
  for (std::size_t k = 0; k < nodes.values.size(); ++k) {
    out.values[k] = nodes.values[k].d;
    out.valid[k] = nodes.valid[k];
  }
  return out;
}

double PairDesign::min_thickness() const {
  double v = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nodes.values.size(); ++k) {
    if (nodes.ok(k)) v = std::min(v, nodes.values[k].d);
  }
  return v;
}

double PairDesign::max_thickness() const {
  double v = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nodes.values.size(); ++k) {
    if (nodes.ok(k)) v = std::max(v, nodes.values[k].d);
  }
  return v;
}

double vertical_delta(const Vec2& du, double k1) {
  const double g2 = norm2(du);
  return (1.0 - k1 * std::sqrt(1.0 + (1.0 - 1.0 / (k1 * k1)) * g2)) / (1.0 + g2);
}

double vertical_identity_residual(const Vec2& du, double k1) {
  const double g2 = norm2(du);
  const double delta = vertical_delta(du, k1);
  return std::abs(delta * (1.0 + std::sqrt(k1 * k1 + (k1 * k1 - 1.0) * g2)) - (1.0 - k1 * k1));
}

namespace {

enum class Kind { Lens, Mirror };

// Pointwise description of a design: enough to evaluate the second face anywhere.
struct Model {
  Kind kind = Kind::Lens;
  double k1 = 1.0;
  double k2 = 1.0;
  Vec3 w = kE3;
  std::function<double(const Vec2&)> h;
  std::function<double(const Vec2&, const Vec2&)> dh;
  std::function<DesignNode(const Vec2&, double)> node;

  Vec3 sheet_normal(const DesignNode& n) const {
    return kind == Kind::Lens ? n.m1 - k2 * w : n.m1 - w;
  }

  // Optical path from the incident wavefront to the plane orthogonal to w, over n1.
  double eikonal(const DesignNode& n) const {
    const double d = norm(n.f - n.P);
    if (kind == Kind::Lens) return n.rho + n.h + k1 * d - k1 * k2 * dot(w, n.f);
    return n.rho + n.h + d - dot(w, n.f);
  }
};

DesignNode far_field_node(const GraphSurface& s1, const IncidentField& field, const Vec3& w,
                          double C, double k1, double k2, Kind kind, double t_max, const Vec2& x,
                          double h) {
  DesignNode n;
  n.e = field(x);
  n.h = h;
  const RayHit hit = strike(s1, field, x, t_max);
  n.rho = hit.rho;
  n.P = hit.point;
  n.nu1 = s1.normal(hit.phi);
  const double c = dot(n.e, n.nu1);
  if (c < 0.0) {
    throw Error(ErrorCode::CompatibilityViolation, "ray meets the entry face from behind", x, c);
  }
  const Vec3 base(x, 0.0);
  if (kind == Kind::Lens) {
    const RefractionResult r = refract(n.e, n.nu1, k1);
    n.m1 = r.m;
    n.lambda1 = r.lambda;
    n.numerator = C - h + dot(n.e, base) - dot(n.e - k1 * k2 * w, n.P);
    n.denominator = k1 - k2 * dot(w, n.e - n.lambda1 * n.nu1);
  } else {
    n.m1 = reflect(n.e, n.nu1);
    n.numerator = C - h + dot(n.e, base) - dot(n.e - w, n.P);
    n.denominator = 1.0 - dot(w, n.m1);
  }
  n.d = n.numerator / n.denominator;
  n.f = n.P + n.d * n.m1;
  return n;
}

// Design grid mask grown by `margin` nodes in every direction.
Grid dilated(const Grid& g, int margin) {
  Grid out = g;
  const auto m = static_cast<std::ptrdiff_t>(std::max(margin, 0));
  const auto nx = static_cast<std::ptrdiff_t>(g.nx());
  const auto ny = static_cast<std::ptrdiff_t>(g.ny());
  for (std::ptrdiff_t j = 0; j < ny; ++j) {
    for (std::ptrdiff_t i = 0; i < nx; ++i) {
      bool on = false;
      for (std::ptrdiff_t b = std::max<std::ptrdiff_t>(0, j - m); !on && b <= std::min(ny - 1, j + m);
           ++b) {
        for (std::ptrdiff_t a = std::max<std::ptrdiff_t>(0, i - m);
             a <= std::min(nx - 1, i + m); ++a) {
          if (g.active(static_cast<std::size_t>(a), static_cast<std::size_t>(b))) {
            on = true;
            break;
          }
        }
      }
      out.set_active(g.index(static_cast<std::size_t>(i), static_cast<std::size_t>(j)), on);
    }
  }
  return out;
}

ParametricSheet second_face(const Model& model, const Grid& grid, int margin) {
  return ParametricSheet(dilated(grid, margin), [model](const Vec2& s) -> std::optional<Vec3> {
    try {
      const DesignNode n = model.node(s, model.h(s));
      if (!(n.d > 0.0) || !is_finite(n.f)) return std::nullopt;
      return n.f;
    } catch (const Error&) {
      return std::nullopt;
    }
  });
}

struct Diagnostics {
  double tangency = 0.0;
  double eikonal_spread = 0.0;
};

Diagnostics diagnose(const Model& model, const GridData<DesignNode>& nodes, double step) {
  Diagnostics out;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t k = 0; k < nodes.values.size(); ++k) {
    if (!nodes.ok(k)) continue;
    const DesignNode& n = nodes.values[k];
    const Vec2 x = nodes.grid.point(k);
    const double e = model.eikonal(n);
    lo = std::min(lo, e);
    hi = std::max(hi, e);
    const Vec3 nrm = model.sheet_normal(n);
    for (int i = 0; i < 2; ++i) {
      const Vec2 dx = i == 0 ? Vec2{step, 0.0} : Vec2{0.0, step};
      try {
        const Vec3 fp = model.node(x + dx, n.h + model.dh(x, x + dx)).f;
        const Vec3 fm = model.node(x - dx, n.h + model.dh(x, x - dx)).f;
        const Vec3 t = (fp - fm) / (2.0 * step);
        out.tangency = std::max(out.tangency, std::abs(dot(t, nrm)) / (norm(t) * norm(nrm)));
      } catch (const Error&) {
        // A neighbour just outside the admissible set; the node itself is fine.
      }
    }
  }
  out.eikonal_spread = hi >= lo ? hi - lo : 0.0;
  return out;
}

double max_height(const GraphSurface& s) {
  const Grid g(s.domain(), 33);
  double m = 0.0;
  for (std::size_t k : g.active_indices()) {
    const double u = s.height(g.point(k));
    if (std::isfinite(u)) m = std::max(m, std::abs(u));
  }
  return m;
}

void require_unit_direction(const Vec3& w, const char* what) {
  if (!is_finite(w) || !is_unit(w)) {
    throw Error(ErrorCode::InvalidInput, std::string(what) + " must be a unit vector");
  }
}

std::shared_ptr<const Potential> checked_potential(const IncidentField& field, const Grid& grid,
                                                   const DesignOptions& opts) {
  field.validate(grid);
  const CurlReport curl = curl_check(field, grid, opts.curl);
  if (!curl.conservative) {
    std::ostringstream os;
    os << "curl of e' is " << curl.max_residual << " (tolerance " << curl.tol << ")";
    throw Error(ErrorCode::CurlViolation, os.str(), curl.worst, curl.max_residual);
  }
  return std::make_shared<const Potential>(
      build_potential(field, field.domain().center(), grid, opts.potential));
}

[[noreturn]] void thickness_error(const Interval& range, double C, const char* hint) {
  std::ostringstream os;
  os.precision(12);
  os << "d(x) <= 0 somewhere on the grid for C = " << C << "; admissible C " << hint << " ";
  os << (std::isfinite(range.lo) ? range.lo : range.hi);
  throw Error(ErrorCode::NonpositiveThickness, os.str());
}

template <typename Design>
Design assemble(const Model& model, EntryFace sigma1, double C, GridData<DesignNode> nodes,
                const Grid& grid, const DesignOptions& opts, double fd_step) {
  ParametricSheet sheet = second_face(model, grid, opts.sheet_margin_cells);
  const Diagnostics diag = diagnose(model, nodes, fd_step);
  Design d(model.w, C, std::move(sigma1), std::move(sheet), std::move(nodes));
  d.tangency_residual = diag.tangency;
  d.eikonal_spread = diag.eikonal_spread;
  double min_den = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < d.nodes.values.size(); ++k) {
    if (d.nodes.ok(k)) min_den = std::min(min_den, d.nodes.values[k].denominator);
  }
  d.min_denominator = min_den;
  return d;
}

}  // namespace

LensDesign design_far_field(const GraphSurface& sigma1, const IncidentField& field, const Vec3& w,
                            double C, const Media& media, const Grid& grid,
                            const DesignOptions& opts) {
  media.validate_lens();
  require_unit_direction(w, "target direction w");
  auto potential = checked_potential(field, grid, opts);
  auto shared_field = std::make_shared<const IncidentField>(field);
  const double k1 = media.kappa1();
  const double k2 = media.kappa2();
  const double t_max = opts.t_max > 0.0
                           ? opts.t_max
                           : 10.0 * (field.domain().diameter() + max_height(sigma1));

  Model model;
  model.kind = Kind::Lens;
  model.k1 = k1;
  model.k2 = k2;
  model.w = w;
  model.h = [potential](const Vec2& x) { return (*potential)(x); };
  model.dh = [potential](const Vec2& a, const Vec2& b) { return potential->increment(a, b); };
  model.node = [=](const Vec2& x, double h) {
    return far_field_node(sigma1, *shared_field, w, C, k1, k2, Kind::Lens, t_max, x, h);
  };

  GridData<DesignNode> nodes(grid);
  double margin = std::numeric_limits<double>::infinity();
  Vec2 worst;
  Interval range;
  range.lo = -std::numeric_limits<double>::infinity();
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const DesignNode n = model.node(x, model.h(x));
    const double m = dot(n.m1, w) - k2;
    if (m < margin) {
      margin = m;
      worst = x;
    }
    range.lo = std::max(range.lo, C - n.numerator);
    nodes.values[k] = n;
    nodes.valid[k] = 1;
  }
  if (margin < 0.0) {
    throw Error(ErrorCode::CompatibilityViolation,
                "m1.w < kappa2: rays would be totally reflected at the second face", worst,
                margin);
  }
  if (!range.contains(C)) thickness_error(range, C, "must exceed");

  LensDesign d = assemble<LensDesign>(model, EntryFace{sigma1}, C, std::move(nodes), grid, opts,
                                      field.fd_step());
  d.media = media;
  d.admissible_C = range;
  d.compatibility_margin = margin;
  d.collimated = field.is_vertical() && norm(w - kE3) < 1e-15;
  return d;
}

LensDesign orthogonal_front(const IncidentField& field, const Potential& h, double C_tilde,
                            const Vec3& w, double C, const Media& media, const Grid& grid,
                            const DesignOptions& opts) {
  media.validate_lens();
  require_unit_direction(w, "target direction w");
  field.validate(grid);
  auto shared_field = std::make_shared<const IncidentField>(field);
  auto potential = std::make_shared<const Potential>(h);
  const double k1 = media.kappa1();
  const double k2 = media.kappa2();

  Model model;
  model.kind = Kind::Lens;
  model.k1 = k1;
  model.k2 = k2;
  model.w = w;
  model.h = [potential](const Vec2& x) { return (*potential)(x); };
  model.dh = [potential](const Vec2& a, const Vec2& b) { return potential->increment(a, b); };
  model.node = [=](const Vec2& x, double hx) {
    DesignNode n;
    const double lambda = C_tilde - hx;
    if (!(lambda > 0.0)) {
      throw Error(ErrorCode::NonpositiveLambda, "C_tilde - h(x) must be positive", x, lambda);
    }
    n.e = (*shared_field)(x);
    n.h = hx;
    n.rho = lambda;
    const Vec3 base(x, 0.0);
    n.P = base + lambda * n.e;
    n.nu1 = n.e;
    n.m1 = n.e;
    n.lambda1 = 1.0 - k1;
    n.numerator = C - C_tilde + k1 * k2 * dot(w, n.P);
    n.denominator = k1 - k1 * k2 * dot(w, n.e);
    n.d = n.numerator / n.denominator;
    n.f = base + ((C - C_tilde + k1 * lambda + k1 * k2 * dot(w, base)) / n.denominator) * n.e;
    return n;
  };

  GridData<DesignNode> nodes(grid);
  double margin = std::numeric_limits<double>::infinity();
  Vec2 worst;
  Interval range;
  range.lo = -std::numeric_limits<double>::infinity();
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const DesignNode n = model.node(x, model.h(x));
    const Vec3 e = n.e;
    const Mat2 J = shared_field->jacobian(x);
    Mat2 dphi;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        dphi(i, j) = (i == j ? 1.0 : 0.0) - e[i] * e[j] + n.rho * J(i, j);
      }
    }
    if (std::abs(dphi.det()) < 1e-10) {
      throw Error(ErrorCode::SingularPhi, "the striking map x + lambda e'(x) is singular", x,
                  dphi.det());
    }
    const double m = dot(n.m1, w) - k2;
    if (m < margin) {
      margin = m;
      worst = x;
    }
    range.lo = std::max(range.lo, C - n.numerator);
    nodes.values[k] = n;
    nodes.valid[k] = 1;
  }
  if (margin < 0.0) {
    throw Error(ErrorCode::CompatibilityViolation, "e.w < kappa2 for the orthogonal entry face",
                worst, margin);
  }
  if (!range.contains(C)) thickness_error(range, C, "must exceed");

  auto front = [model](const Vec2& s) -> std::optional<Vec3> {
    try {
      return model.node(s, model.h(s)).P;
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  ParametricSheet sigma1(dilated(grid, opts.sheet_margin_cells), front);
  LensDesign d = assemble<LensDesign>(model, EntryFace{std::move(sigma1)}, C, std::move(nodes),
                                      grid, opts, field.fd_step());
  d.media = media;
  d.admissible_C = range;
  d.compatibility_margin = margin;
  d.collimated = false;
  return d;
}

LensDesign vertical_design(const GraphSurface& u, double C, const Media& media, const Grid& grid,
                           const DesignOptions& opts) {
  media.validate_lens();
  const double k1 = media.kappa1();
  const double k2 = media.kappa2();

  Model model;
  model.kind = Kind::Lens;
  model.k1 = k1;
  model.k2 = k2;
  model.w = kE3;
  model.h = [](const Vec2&) { return 0.0; };
  model.dh = [](const Vec2&, const Vec2&) { return 0.0; };
  model.node = [=](const Vec2& x, double) {
    DesignNode n;
    const double height = u.height(x);
    if (!std::isfinite(height)) {
      throw Error(ErrorCode::DomainError, "entry face undefined at this point", x, 0.0);
    }
    const Vec2 du = u.gradient(x);
    const double delta = vertical_delta(du, k1);
    n.e = kE3;
    n.rho = height;
    n.P = Vec3(x, height);
    n.nu1 = graph_normal(du);
    n.lambda1 = delta * std::sqrt(1.0 + norm2(du));
    n.m1 = Vec3(delta * du, 1.0 - delta) / k1;
    n.numerator = -((1.0 - k1 * k2) * height + C);
    n.denominator = k1 - k2 * (1.0 - delta);
    n.d = n.numerator / n.denominator;
    n.f = n.P + n.d * n.m1;
    return n;
  };

  GridData<DesignNode> nodes(grid);
  double margin = std::numeric_limits<double>::infinity();
  Vec2 worst;
  Interval range;
  range.hi = std::numeric_limits<double>::infinity();
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const DesignNode n = model.node(x, 0.0);
    const double m = (1.0 - k1 * k2) - vertical_delta(u.gradient(x), k1);
    if (m < margin) {
      margin = m;
      worst = x;
    }
    range.hi = std::min(range.hi, -(1.0 - k1 * k2) * n.rho);
    nodes.values[k] = n;
    nodes.valid[k] = 1;
  }
  if (margin < 0.0) {
    throw Error(ErrorCode::CompatibilityViolation,
                "Delta(x) > 1 - kappa1 kappa2: the entry face is too steep", worst, margin);
  }
  if (!range.contains(C)) thickness_error(range, C, "must be below");

  LensDesign d = assemble<LensDesign>(model, EntryFace{u}, C, std::move(nodes), grid, opts,
                                      1e-5 * u.domain().diameter());
  d.media = media;
  d.admissible_C = range;
  d.compatibility_margin = margin;
  d.collimated = true;
  return d;
}

MirrorDesign design_far_field_mirrors(const GraphSurface& sigma1, const IncidentField& field,
                                      const Vec3& w, double C, const Grid& grid,
                                      const DesignOptions& opts) {
  require_unit_direction(w, "target direction w");
  auto potential = checked_potential(field, grid, opts);
  auto shared_field = std::make_shared<const IncidentField>(field);
  const double t_max = opts.t_max > 0.0
                           ? opts.t_max
                           : 10.0 * (field.domain().diameter() + max_height(sigma1));

  Model model;
  model.kind = Kind::Mirror;
  model.w = w;
  model.h = [potential](const Vec2& x) { return (*potential)(x); };
  model.dh = [potential](const Vec2& a, const Vec2& b) { return potential->increment(a, b); };
  model.node = [=](const Vec2& x, double h) {
    return far_field_node(sigma1, *shared_field, w, C, 1.0, 1.0, Kind::Mirror, t_max, x, h);
  };

  GridData<DesignNode> nodes(grid);
  double margin = std::numeric_limits<double>::infinity();
  Vec2 worst;
  Interval range;
  range.lo = -std::numeric_limits<double>::infinity();
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const DesignNode n = model.node(x, model.h(x));
    if (n.denominator < margin) {
      margin = n.denominator;
      worst = x;
    }
    range.lo = std::max(range.lo, C - n.numerator);
    nodes.values[k] = n;
    nodes.valid[k] = 1;
  }
  if (margin < 1e-10) {
    throw Error(ErrorCode::DegenerateDirection,
                "reflected ray already travels along w, thickness undefined", worst, margin);
  }
  if (!range.contains(C)) thickness_error(range, C, "must exceed");

  MirrorDesign d = assemble<MirrorDesign>(model, EntryFace{sigma1}, C, std::move(nodes), grid,
                                          opts, field.fd_step());
  d.admissible_C = range;
  d.compatibility_margin = margin;
  d.collimated = field.is_vertical() && norm(w - kE3) < 1e-15;
  return d;
}

LipschitzEstimate estimate_lipschitz(const GraphSurface& u, const Grid& grid) {
  LipschitzEstimate out;
  out.max_u = -std::numeric_limits<double>::infinity();
  const double step = 1e-5 * u.domain().diameter();
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    out.max_u = std::max(out.max_u, u.height(x));
    out.Lu = std::max(out.Lu, norm(u.gradient(x)));
    Mat2 H;
    if (auto a = u.hessian(x)) {
      H = *a;
    } else {
      for (int j = 0; j < 2; ++j) {
        const Vec2 dx = j == 0 ? Vec2{step, 0.0} : Vec2{0.0, step};
        const Vec2 g = (u.gradient(x + dx) - u.gradient(x - dx)) / (2.0 * step);
        H(0, j) = g.x1;
        H(1, j) = g.x2;
      }
    }
    // Spectral norm: sqrt of the largest eigenvalue of H^T H.
    const double a = H(0, 0) * H(0, 0) + H(1, 0) * H(1, 0);
    const double b = H(0, 0) * H(0, 1) + H(1, 0) * H(1, 1);
    const double c = H(0, 1) * H(0, 1) + H(1, 1) * H(1, 1);
    const double lmax = 0.5 * (a + c) + std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    out.LDu = std::max(out.LDu, std::sqrt(lmax));
  }
  return out;
}

namespace {

double pairwise_ratio(const std::vector<Vec2>& xs, const std::vector<Vec3>& fs) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < xs.size(); ++a) {
    for (std::size_t b = a + 1; b < xs.size(); ++b) {
      const double r2 = norm2(fs[a] - fs[b]) / norm2(xs[a] - xs[b]);
      best = std::min(best, r2);
    }
  }
  return std::sqrt(best);
}

}  // namespace

double pairwise_min_ratio(const ParametricSheet& sheet) {
  std::vector<Vec2> xs;
  std::vector<Vec3> fs;
  for (std::size_t k = 0; k < sheet.grid().size(); ++k) {
    if (!sheet.valid(k)) continue;
    xs.push_back(sheet.grid().point(k));
    fs.push_back(sheet.points()[k]);
  }
  return pairwise_ratio(xs, fs);
}

InjectivityBound injectivity_check(const LensDesign& design, double Lu, double LDu) {
  if (!design.collimated) {
    throw Error(ErrorCode::NotCollimated,
                "the analytic self-intersection bound needs e = w = e3");
  }
  const double k1 = design.media.kappa1();
  const double k2 = design.media.kappa2();
  double max_u = -std::numeric_limits<double>::infinity();
  std::vector<Vec2> xs;
  std::vector<Vec3> fs;
  for (std::size_t k = 0; k < design.nodes.values.size(); ++k) {
    if (!design.nodes.ok(k)) continue;
    max_u = std::max(max_u, design.nodes.values[k].P.z);
    xs.push_back(design.nodes.grid.point(k));
    fs.push_back(design.nodes.values[k].f);
  }

  InjectivityBound out;
  // |nu(x) - nu(y)| <= sqrt5 |Du(x) - Du(y)| combined with the Lipschitz bound of the
  // refraction map nu -> m1 for kappa1 > 1.
  out.M = std::sqrt(5.0) * (1.0 + std::sqrt(k1 * k1 - 1.0)) / k1;
  out.M1 = k1 * k2 * out.M;
  const double q = (1.0 - k2) * (1.0 - k2);
  out.A = (1.0 + k2) * (1.0 + k1 * k2) / (k1 * q);
  out.B = k2 * out.M / (k1 * q);
  const double c = out.M / (k1 * (1.0 - k2)) + out.B;
  out.alpha_bound = c * LDu;
  out.beta_bound = (1.0 + k1 * k2) * max_u * c * LDu + out.A * Lu;
  out.C_max = out.alpha_bound > 0.0 ? 1.0 / (2.0 * out.alpha_bound)
                                    : std::numeric_limits<double>::infinity();
  out.analytic_injective = out.beta_bound < 0.5 && std::abs(design.C) < out.C_max;
  out.min_ratio = pairwise_ratio(xs, fs);
  out.verdict_grid = out.min_ratio > 0.0;
  return out;
}

}  // namespace freeform
