#pragma once

#include "freeform/error.hpp"
#include "freeform/vec.hpp"

namespace freeform {

/// Unit-length tolerance applied to direction inputs.
inline constexpr double kUnitTolerance = 1e-9;

/// Refractive indices on either side of an interface. kappa = n_out / n_in.
class MediumPair {
 public:
  MediumPair(double n_in, double n_out);

  double n_in() const { return n_in_; }
  double n_out() const { return n_out_; }
  double kappa() const { return kappa_; }
  MediumPair reversed() const { return {n_out_, n_in_}; }

 private:
  double n_in_;
  double n_out_;
  double kappa_;
};

/// Solution of x - kappa*m = lambda*nu.
struct RefractionResult {
  Vec3 m;
  double lambda = 0.0;
};

/// Vector Snell law. `nu` points into the exit medium and x.nu >= 0 is required.
/// Throws TotalInternalReflection when kappa < 1 and x.nu < sqrt(1 - kappa^2);
/// the critical value itself is accepted (grazing exit).
RefractionResult refract(const Vec3& x, const Vec3& nu, double kappa);

/// Mirror law m = x - 2(x.nu)nu. The sign of nu is irrelevant.
Vec3 reflect(const Vec3& x, const Vec3& nu);

/// Upward unit normal (-Du, 1)/sqrt(1 + |Du|^2) of the graph of u.
Vec3 graph_normal(const Vec2& du);

bool is_unit(const Vec3& v, double tol = kUnitTolerance);

}  // namespace freeform
