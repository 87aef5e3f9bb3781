#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "freeform/domain.hpp"
#include "freeform/expression.hpp"
#include "freeform/quadrature.hpp"
#include "freeform/vec.hpp"

namespace freeform {

/// Unit direction field e(x) = (e'(x), e3(x)) emitted from the plane z = 0.
/// Immutable; safe to share across threads.
class IncidentField {
 public:
  using Eval = std::function<Vec3(const Vec2&)>;
  using Jacobian = std::function<Mat2(const Vec2&)>;

  IncidentField(std::string name, Domain domain, Eval eval, Jacobian jacobian = {});

  Vec3 operator()(const Vec2& x) const { return eval_(x); }
  /// Planar part e'(x).
  Vec2 planar(const Vec2& x) const { return eval_(x).xy(); }
  /// d e_i / d x_j for i, j in {1, 2}; analytic when supplied, else central differences.
  Mat2 jacobian(const Vec2& x) const;
  /// Central-difference Jacobian with an explicit step.
  Mat2 jacobian_fd(const Vec2& x, double step) const;
  bool has_analytic_jacobian() const { return static_cast<bool>(jacobian_); }

  const std::string& name() const { return name_; }
  const Domain& domain() const { return domain_; }
  /// Default finite-difference step, 1e-5 of the domain diameter.
  double fd_step() const { return 1e-5 * domain_.diameter(); }
  /// True when e == (0, 0, 1) everywhere (collimated vertical input).
  bool is_vertical() const { return vertical_; }
  void mark_vertical() { vertical_ = true; }

  /// Throws InvalidInput if |e| != 1 or e3 <= 0 at any active node.
  void validate(const Grid& grid) const;

 private:
  std::string name_;
  Domain domain_;
  Eval eval_;
  Jacobian jacobian_;
  bool vertical_ = false;
};

IncidentField constant_field(const Vec3& direction, const Domain& domain);
/// Rays that all pass through the virtual point V below the source plane (V3 < 0).
IncidentField point_source_field(const Vec3& virtual_point, const Domain& domain);
/// e' proportional to strength * (-x2, x1), renormalized; not conservative.
IncidentField swirl_field(double strength, const Domain& domain);
/// e' = grad h, e3 = sqrt(1 - |grad h|^2). Requires |grad h| < 1 on the domain.
IncidentField gradient_field(const Expression& potential, const Domain& domain);

struct CurlOptions {
  double tol = 1e-6;
  /// Central-difference step; 0 selects 1e-5 of the domain diameter.
  double h_fd = 0.0;
};

struct CurlReport {
  double max_residual = 0.0;
  bool conservative = false;
  Vec2 worst;
  double tol = 0.0;
  GridData<double> samples;
};

/// Max |d e2/d x1 - d e1/d x2| over the active grid nodes by central differences.
CurlReport curl_check(const IncidentField& field, const Grid& grid, const CurlOptions& opts = {});

struct PotentialOptions {
  /// 0 selects 1e-8 of the domain diameter.
  double path_tol = 0.0;
  QuadratureOptions quadrature{};
  int staircase_steps = 6;
  /// Staircase cross-check on every n-th node in each direction.
  std::size_t staircase_stride = 4;
};

/// Scalar potential h with grad h = e', anchored at h(x0) = 0.
class Potential {
 public:
  Potential(std::shared_ptr<const IncidentField> field, Vec2 x0, QuadratureOptions quad,
            double max_path_residual);

  /// Line integral of e' along the x1-then-x2 path from x0 (fixed Gauss-Legendre,
  /// smooth in x).
  double operator()(const Vec2& x) const;
  /// Same value along the x2-then-x1 path with adaptive Simpson.
  double via_x2_first(const Vec2& x) const;
  double via_staircase(const Vec2& x, int steps) const;
  /// h(to) - h(from) along the straight segment; exact for a conservative field.
  double increment(const Vec2& from, const Vec2& to) const;
  const Vec2& x0() const { return x0_; }
  double max_path_residual() const { return max_path_residual_; }

 private:
  std::shared_ptr<const IncidentField> field_;
  Vec2 x0_;
  QuadratureOptions quad_;
  double max_path_residual_;
};

/// Builds h and cross-checks both L-path orders plus a staircase at every active
/// node. Throws NotConservative when the disagreement exceeds path_tol.
Potential build_potential(const IncidentField& field, const Vec2& x0, const Grid& grid,
                          const PotentialOptions& opts = {});

}  // namespace freeform
