#include "freeform/geometry.hpp"

#include <cmath>

namespace freeform {

namespace {

// Roundoff allowance when x.nu sits exactly on the critical value.
constexpr double kGrazingSlack = 1e-14;

void require_unit(const Vec3& v, const char* what) {
  if (!is_finite(v) || !is_unit(v)) {
    throw Error(ErrorCode::InvalidInput, std::string(what) + " is not a unit vector");
  }
}

}  // namespace

MediumPair::MediumPair(double n_in, double n_out) : n_in_(n_in), n_out_(n_out) {
  if (!(n_in > 0.0) || !(n_out > 0.0) || !std::isfinite(n_in) || !std::isfinite(n_out)) {
    throw Error(ErrorCode::InvalidInput, "refractive indices must be positive and finite");
  }
  kappa_ = n_out / n_in;
}

bool is_unit(const Vec3& v, double tol) { return std::abs(norm(v) - 1.0) <= tol; }

RefractionResult refract(const Vec3& x, const Vec3& nu, double kappa) {
  require_unit(x, "incident direction");
  require_unit(nu, "normal");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) {
    throw Error(ErrorCode::InvalidInput, "kappa must be positive");
  }
  const double c1 = dot(x, nu);
  if (c1 < -kUnitTolerance) {
    throw Error(ErrorCode::InvalidInput, "incident direction points against the normal");
  }
  const double cos1 = std::max(c1, 0.0);
  double radicand = 1.0 - (1.0 - cos1 * cos1) / (kappa * kappa);
  if (radicand < 0.0) {
    if (radicand < -kGrazingSlack) {
      throw Error(ErrorCode::TotalInternalReflection,
                  "x.nu below sqrt(1 - kappa^2), no refracted ray");
    }
    radicand = 0.0;
  }
  const double lambda = cos1 - kappa * std::sqrt(radicand);
  Vec3 m = (x - lambda * nu) / kappa;
  m = normalized(m);
  return {m, lambda};
}

Vec3 reflect(const Vec3& x, const Vec3& nu) {
  require_unit(x, "incident direction");
  require_unit(nu, "normal");
  return normalized(x - 2.0 * dot(x, nu) * nu);
}

Vec3 graph_normal(const Vec2& du) {
  const double s = std::sqrt(1.0 + norm2(du));
  return {-du.x1 / s, -du.x2 / s, 1.0 / s};
}

}  // namespace freeform
