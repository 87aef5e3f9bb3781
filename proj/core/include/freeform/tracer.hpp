#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freeform/domain.hpp"
#include "freeform/error.hpp"
#include "freeform/farfield.hpp"
#include "freeform/field.hpp"
#include "freeform/surface.hpp"
#include "freeform/vec.hpp"

namespace freeform {

struct Ray {
  Vec3 origin;
  Vec3 direction;
};

enum class Interaction { Refract, Reflect };

/// How a ParametricSheet is intersected: through its exact map (Newton on the
/// map, normals by central differences) or through its sampled nodes (bilinear
/// patches, node normals interpolated across the patch).
enum class SheetMode { Exact, Mesh };

class OpticalElement {
 public:
  static OpticalElement refracting(EntryFace geometry, double n_before, double n_after,
                                   SheetMode mode = SheetMode::Exact);
  static OpticalElement reflecting(EntryFace geometry, SheetMode mode = SheetMode::Exact);

  const EntryFace& geometry() const { return geometry_; }
  Interaction kind() const { return kind_; }
  double n_before() const { return n_before_; }
  double n_after() const { return n_after_; }
  SheetMode mode() const { return mode_; }
  /// Central-difference node normals (mesh mode only).
  const std::vector<Vec3>& node_normals() const { return *node_normals_; }

 private:
  OpticalElement(EntryFace geometry, Interaction kind, double n_before, double n_after,
                 SheetMode mode);
  EntryFace geometry_;
  Interaction kind_;
  double n_before_;
  double n_after_;
  SheetMode mode_;
  std::shared_ptr<const std::vector<Vec3>> node_normals_;
};

struct SurfaceHit {
  double t = 0.0;
  Vec3 point;
  /// Unit normal, sign not yet oriented.
  Vec3 normal;
  Vec2 param;
  /// Hit lies within one cell of the sampled sheet boundary.
  bool edge = false;
};

/// First intersection of the ray with the sheet. Throws Miss.
SurfaceHit intersect_sheet(const Ray& ray, const ParametricSheet& sheet, SheetMode mode,
                           const std::vector<Vec3>* node_normals = nullptr);

/// Where the traced ray should end up.
struct TraceTarget {
  /// Height of the output plane z = a.
  double plane = 0.0;
  std::optional<Vec3> direction;
  /// Expected landing point on the plane for the ray launched from x.
  std::function<Vec2(const Vec2&)> landing;
  /// Landing points outside this region are flagged.
  std::optional<Domain> footprint;
};

struct TraceRow {
  Vec2 source;
  bool ok = false;
  std::optional<ErrorCode> failure;
  std::string message;
  Vec3 exit_direction;
  Vec3 exit_point;
  double direction_error = 0.0;
  double position_error = 0.0;
  bool edge_hit = false;
  /// The plane lies behind the last surface or outside the footprint; the point is
  /// still the line's intersection with z = a.
  bool extrapolated = false;
  std::vector<Vec3> hits;
};

struct TraceReport {
  std::vector<TraceRow> rows;
  std::size_t failures = 0;
  std::size_t edge_hits = 0;
  std::size_t extrapolated = 0;
  double max_direction_error = 0.0;
  double mean_direction_error = 0.0;
  double max_position_error = 0.0;
  double mean_position_error = 0.0;
};

/// Sends one ray through the elements in order. Failures are recorded in the row.
TraceRow trace(const Ray& ray, std::span<const OpticalElement> elements,
               const TraceTarget& target, const Vec2& source);

/// Traces the rays (x, 0) + t e(x) for every source x.
TraceReport trace_field(const IncidentField& field, std::span<const Vec2> sources,
                        std::span<const OpticalElement> elements, const TraceTarget& target);

/// Deterministic pseudo-random points inside the domain.
std::vector<Vec2> sample_points(const Domain& domain, std::size_t count, std::uint64_t seed = 7);

/// Element list for a lens or mirror design (second face traced as `mode`).
std::vector<OpticalElement> lens_elements(const LensDesign& design, SheetMode mode);
std::vector<OpticalElement> mirror_elements(const PairDesign& design, SheetMode mode);

}  // namespace freeform
