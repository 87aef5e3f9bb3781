#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "freeform/domain.hpp"
#include "freeform/field.hpp"
#include "freeform/surface.hpp"
#include "freeform/vec.hpp"

namespace freeform {

/// Indices below the lens (n1), inside (n2) and above (n3).
struct Media {
  double n1 = 1.0;
  double n2 = 1.5;
  double n3 = 1.0;

  double kappa1() const { return n2 / n1; }
  double kappa2() const { return n3 / n2; }
  /// Throws InvalidInput unless all indices are positive and n2 > max(n1, n3).
  void validate_lens() const;
};

/// Where the ray from (x, 0) along e(x) meets the entry face.
struct RayHit {
  Vec2 phi;
  double rho = 0.0;
  Vec3 point;
};

/// Smallest positive rho with u(x + rho e'(x)) = rho e3(x).
RayHit strike(const GraphSurface& sigma1, const IncidentField& field, const Vec2& x,
              double t_max);

/// Everything computed for one source point x.
struct DesignNode {
  Vec3 e;
  double h = 0.0;
  double rho = 0.0;
  Vec3 P;       // hit on the entry face
  Vec3 nu1;     // entry-face normal at P
  Vec3 m1;      // direction inside the lens (or after the first mirror)
  double lambda1 = 0.0;
  double numerator = 0.0;
  double denominator = 0.0;
  double d = 0.0;
  Vec3 f;       // point on the second face
};

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double c) const { return c > lo && c < hi; }
};

using EntryFace = std::variant<GraphSurface, ParametricSheet>;

/// Shared shape of lens and mirror-pair designs.
struct PairDesign {
  PairDesign(Vec3 w_, double C_, EntryFace s1, ParametricSheet s2, GridData<DesignNode> n)
      : w(w_), C(C_), sigma1(std::move(s1)), sigma2(std::move(s2)), nodes(std::move(n)) {}

  Vec3 w;
  double C = 0.0;
  EntryFace sigma1;
  ParametricSheet sigma2;
  GridData<DesignNode> nodes;
  /// Values of C for which d > 0 at every node (same sign convention as C).
  Interval admissible_C;
  /// Worst of the direction condition over the grid (>= 0 when satisfied).
  double compatibility_margin = 0.0;
  /// Max |cos| between the second-face tangents and its required normal.
  double tangency_residual = 0.0;
  /// Spread of the optical-path quantity over the grid; zero for an exact design.
  double eikonal_spread = 0.0;
  double min_denominator = 0.0;
  /// e = w = e3, which the analytic self-intersection bound needs.
  bool collimated = false;
  std::vector<std::string> warnings;

  GridData<double> thickness() const;
  double min_thickness() const;
  double max_thickness() const;
};

struct LensDesign : PairDesign {
  using PairDesign::PairDesign;
  Media media;
};

struct MirrorDesign : PairDesign {
  using PairDesign::PairDesign;
};

struct DesignOptions {
  CurlOptions curl{};
  PotentialOptions potential{};
  /// 0 selects 10 * (domain diameter + max u).
  double t_max = 0.0;
  /// Extra rings of sheet nodes sampled around the design grid (keeps mesh tracing
  /// valid up to the domain boundary).
  int sheet_margin_cells = 2;
};

/// Second face of a lens turning the field e into the direction w; thickness from
/// the optical-path constant C: d = (C - h + e.(x,0) - (e - k1 k2 w).P) / (k1 - k2 w.(e - l1 nu1)).
LensDesign design_far_field(const GraphSurface& sigma1, const IncidentField& field, const Vec3& w,
                            double C, const Media& media, const Grid& grid,
                            const DesignOptions& opts = {});

/// Entry face orthogonal to the incident rays, g(x) = (x,0) + (C_tilde - h(x)) e(x),
/// and the matching second face in closed form.
LensDesign orthogonal_front(const IncidentField& field, const Potential& h, double C_tilde,
                            const Vec3& w, double C, const Media& media, const Grid& grid,
                            const DesignOptions& opts = {});

/// Vertical in, vertical out. Uses d = -((1 - k1 k2) u + C) / (k1 - k2 (1 - Delta)),
/// so C here has the opposite sign to design_far_field's.
LensDesign vertical_design(const GraphSurface& u, double C, const Media& media, const Grid& grid,
                           const DesignOptions& opts = {});

/// Residual of Delta (1 + sqrt(k1^2 + (k1^2 - 1)|Du|^2)) = 1 - k1^2.
double vertical_delta(const Vec2& du, double kappa1);
double vertical_identity_residual(const Vec2& du, double kappa1);

/// Mirror pair reflecting e into w: d = (C - h + e.(x,0) - (e - w).P) / (1 - w.m1).
MirrorDesign design_far_field_mirrors(const GraphSurface& sigma1, const IncidentField& field,
                                      const Vec3& w, double C, const Grid& grid,
                                      const DesignOptions& opts = {});

struct LipschitzEstimate {
  double Lu = 0.0;
  double LDu = 0.0;
  double max_u = 0.0;
};

/// Sampled max |Du|, max spectral norm of D2u (analytic Hessian when present) and max u.
LipschitzEstimate estimate_lipschitz(const GraphSurface& u, const Grid& grid);

struct InjectivityBound {
  double M = 0.0;
  double M1 = 0.0;
  double A = 0.0;
  double B = 0.0;
  double alpha_bound = 0.0;
  double beta_bound = 0.0;
  /// 1 / (2 alpha); +inf when alpha == 0.
  double C_max = 0.0;
  bool analytic_injective = false;
  /// min |f(x) - f(y)| / |x - y| over valid node pairs.
  double min_ratio = 0.0;
  bool verdict_grid = false;
};

/// min over node pairs of |f(x) - f(y)| / |x - y| on the sampled second face.
double pairwise_min_ratio(const ParametricSheet& sheet);

/// Self-intersection bound for collimated designs plus the pairwise grid scan.
/// Throws NotCollimated when the design is not e = w = e3.
InjectivityBound injectivity_check(const LensDesign& design, double Lu, double LDu);

}  // namespace freeform
