#pragma once

#include <cstddef>
#include <vector>

#include "freeform/vec.hpp"

namespace freeform {

/// Simply connected planar region: an axis-aligned rectangle or a disk.
class Domain {
 public:
  enum class Shape { Rectangle, Disk };

  static Domain rectangle(Vec2 lo, Vec2 hi);
  static Domain disk(Vec2 center, double radius);

  Shape shape() const { return shape_; }
  bool contains(const Vec2& p, double slack = 1e-12) const;
  double diameter() const;
  Vec2 center() const;
  /// Bounding box corners.
  Vec2 lo() const { return lo_; }
  Vec2 hi() const { return hi_; }
  double radius() const { return radius_; }
  /// Same shape grown outward by `margin`.
  Domain expanded(double margin) const;

 private:
  Domain() = default;
  Shape shape_ = Shape::Rectangle;
  Vec2 lo_;
  Vec2 hi_;
  double radius_ = 0.0;
};

/// Tensor-product nodes over a bounding box with an activity mask.
/// Node (i, j) sits at lo + (i*dx, j*dy); storage is row-major in j (rows) then i.
class Grid {
 public:
  /// n x n nodes over the domain's bounding box; nodes outside the domain are inactive.
  Grid(const Domain& domain, std::size_t n);
  Grid(Vec2 lo, Vec2 hi, std::size_t nx, std::size_t ny);

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return nx_ * ny_; }
  std::size_t index(std::size_t i, std::size_t j) const { return j * nx_ + i; }
  Vec2 point(std::size_t i, std::size_t j) const;
  Vec2 point(std::size_t k) const { return point(k % nx_, k / nx_); }
  bool active(std::size_t k) const { return active_[k] != 0; }
  bool active(std::size_t i, std::size_t j) const { return active(index(i, j)); }
  void set_active(std::size_t k, bool on) { active_[k] = on ? 1 : 0; }
  std::size_t active_count() const;
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  Vec2 lo() const { return lo_; }
  Vec2 hi() const { return hi_; }
  /// Indices of active nodes in row-major order.
  std::vector<std::size_t> active_indices() const;
  /// Index of the node closest to p (ignores the mask).
  std::size_t nearest(const Vec2& p) const;

 private:
  Vec2 lo_;
  Vec2 hi_;
  std::size_t nx_;
  std::size_t ny_;
  double dx_;
  double dy_;
  std::vector<unsigned char> active_;
};

/// Grid-sampled values with per-node validity.
template <typename T>
struct GridData {
  Grid grid;
  std::vector<T> values;
  std::vector<unsigned char> valid;

  explicit GridData(Grid g) : grid(std::move(g)), values(grid.size()), valid(grid.size(), 0) {}
  bool ok(std::size_t k) const { return valid[k] != 0; }
};

}  // namespace freeform
