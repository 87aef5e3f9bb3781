#include "freeform/field.hpp"

#include <cmath>
#include <sstream>

#include "freeform/error.hpp"
#include "freeform/geometry.hpp"

namespace freeform {

IncidentField::IncidentField(std::string name, Domain domain, Eval eval, Jacobian jacobian)
    : name_(std::move(name)),
      domain_(std::move(domain)),
      eval_(std::move(eval)),
      jacobian_(std::move(jacobian)) {}

Mat2 IncidentField::jacobian(const Vec2& x) const {
  if (jacobian_) return jacobian_(x);
  return jacobian_fd(x, fd_step());
}

Mat2 IncidentField::jacobian_fd(const Vec2& x, double step) const {
  Mat2 j;
  for (int col = 0; col < 2; ++col) {
    const Vec2 dx = col == 0 ? Vec2{step, 0.0} : Vec2{0.0, step};
    const Vec2 fp = planar(x + dx);
    const Vec2 fm = planar(x - dx);
    j(0, col) = (fp.x1 - fm.x1) / (2.0 * step);
    j(1, col) = (fp.x2 - fm.x2) / (2.0 * step);
  }
  return j;
}

void IncidentField::validate(const Grid& grid) const {
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const Vec3 e = eval_(x);
    if (!is_finite(e) || std::abs(norm(e) - 1.0) > 1e-10 || !(e.z > 0.0)) {
      std::ostringstream os;
      os << "field '" << name_ << "' is not a unit field with e3 > 0 at (" << x.x1 << ", "
         << x.x2 << ")";
      throw Error(ErrorCode::InvalidInput, os.str(), x, e.z);
    }
  }
}

IncidentField constant_field(const Vec3& direction, const Domain& domain) {
  if (!is_unit(direction) || !(direction.z > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "constant field needs a unit direction with e3 > 0");
  }
  const Vec3 e = normalized(direction);
  IncidentField f("constant", domain, [e](const Vec2&) { return e; },
                  [](const Vec2&) { return Mat2{}; });
  if (e.x == 0.0 && e.y == 0.0) f.mark_vertical();
  return f;
}

IncidentField point_source_field(const Vec3& v, const Domain& domain) {
  if (!(v.z < 0.0)) {
    throw Error(ErrorCode::InvalidInput, "virtual point must lie below the source plane");
  }
  auto eval = [v](const Vec2& x) { return normalized(Vec3(x, 0.0) - v); };
  auto jac = [v](const Vec2& x) {
    const Vec3 d = Vec3(x, 0.0) - v;
    const double r = norm(d);
    const double r3 = r * r * r;
    Mat2 j;
    j(0, 0) = 1.0 / r - d.x * d.x / r3;
    j(0, 1) = -d.x * d.y / r3;
    j(1, 0) = j(0, 1);
    j(1, 1) = 1.0 / r - d.y * d.y / r3;
    return j;
  };
  return IncidentField("point_source", domain, eval, jac);
}

IncidentField swirl_field(double s, const Domain& domain) {
  auto eval = [s](const Vec2& x) {
    return normalized(Vec3{-s * x.x2, s * x.x1, 1.0});
  };
  auto jac = [s](const Vec2& x) {
    const double n2 = 1.0 + s * s * norm2(x);
    const double n = std::sqrt(n2);
    const double n3 = n2 * n;
    const double s3 = s * s * s;
    Mat2 j;
    j(0, 0) = s3 * x.x1 * x.x2 / n3;
    j(0, 1) = -s / n + s3 * x.x2 * x.x2 / n3;
    j(1, 0) = s / n - s3 * x.x1 * x.x1 / n3;
    j(1, 1) = -s3 * x.x1 * x.x2 / n3;
    return j;
  };
  return IncidentField("swirl", domain, eval, jac);
}

IncidentField gradient_field(const Expression& potential, const Domain& domain) {
  auto h = std::make_shared<const DifferentiableExpression>(potential);
  auto eval = [h](const Vec2& x) {
    const Vec2 g = h->gradient(x);
    const double s = 1.0 - norm2(g);
    if (!(s > 0.0)) {
      throw Error(ErrorCode::InvalidInput, "gradient field needs |grad h| < 1", x, s);
    }
    return Vec3{g, std::sqrt(s)};
  };
  auto jac = [h](const Vec2& x) { return h->hessian(x); };
  return IncidentField("gradient", domain, eval, jac);
}

CurlReport curl_check(const IncidentField& field, const Grid& grid, const CurlOptions& opts) {
  const double step = opts.h_fd > 0.0 ? opts.h_fd : field.fd_step();
  CurlReport report{0.0, true, {}, opts.tol, GridData<double>(grid)};
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    if (!field.domain().contains(x, 1e-9)) {
      throw Error(ErrorCode::DomainError, "grid node outside the field domain", x, 0.0);
    }
    const Mat2 j = field.jacobian_fd(x, step);
    const double curl = j(1, 0) - j(0, 1);
    report.samples.values[k] = curl;
    report.samples.valid[k] = 1;
    if (std::abs(curl) > report.max_residual) {
      report.max_residual = std::abs(curl);
      report.worst = x;
    }
  }
  report.conservative = report.max_residual <= opts.tol;
  return report;
}

Potential::Potential(std::shared_ptr<const IncidentField> field, Vec2 x0, QuadratureOptions quad,
                     double max_path_residual)
    : field_(std::move(field)), x0_(x0), quad_(quad), max_path_residual_(max_path_residual) {}

double Potential::operator()(const Vec2& x) const {
  const auto path = l_path_x1_first(x0_, x);
  return line_integral_fixed([this](const Vec2& p) { return field_->planar(p); }, path);
}

double Potential::via_x2_first(const Vec2& x) const {
  const auto path = l_path_x2_first(x0_, x);
  return line_integral([this](const Vec2& p) { return field_->planar(p); }, path, quad_);
}

double Potential::via_staircase(const Vec2& x, int steps) const {
  const auto path = staircase_path(x0_, x, steps);
  return line_integral([this](const Vec2& p) { return field_->planar(p); }, path, quad_);
}

double Potential::increment(const Vec2& from, const Vec2& to) const {
  const Vec2 seg[2] = {from, to};
  return line_integral_fixed([this](const Vec2& p) { return field_->planar(p); }, seg, 2);
}

Potential build_potential(const IncidentField& field, const Vec2& x0, const Grid& grid,
                          const PotentialOptions& opts) {
  const double path_tol = opts.path_tol > 0.0 ? opts.path_tol : 1e-8 * field.domain().diameter();
  auto shared = std::make_shared<const IncidentField>(field);
  Potential probe(shared, x0, opts.quadrature, 0.0);
  double worst = 0.0;
  Vec2 worst_x = x0;
  for (std::size_t k : grid.active_indices()) {
    const Vec2 x = grid.point(k);
    const double a = probe(x);
    double r = std::abs(a - probe.via_x2_first(x));
    // The staircase is the expensive path; every few nodes is enough as a curl probe.
    const std::size_t i = k % grid.nx(), j = k / grid.nx();
    if (i % opts.staircase_stride == 0 && j % opts.staircase_stride == 0) {
      r = std::max(r, std::abs(a - probe.via_staircase(x, opts.staircase_steps)));
    }
    if (r > worst) {
      worst = r;
      worst_x = x;
    }
  }
  if (worst > path_tol) {
    throw Error(ErrorCode::NotConservative,
                "line integral of e' depends on the path (residual " + std::to_string(worst) + ")",
                worst_x, worst);
  }
  return Potential(shared, x0, opts.quadrature, worst);
}

}  // namespace freeform
