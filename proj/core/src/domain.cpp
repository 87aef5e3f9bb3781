#include "freeform/domain.hpp"

#include <algorithm>
#include <cmath>

#include "freeform/error.hpp"

namespace freeform {

Domain Domain::rectangle(Vec2 lo, Vec2 hi) {
  if (!(hi.x1 > lo.x1) || !(hi.x2 > lo.x2)) {
    throw Error(ErrorCode::InvalidInput, "rectangle must have positive extent");
  }
  Domain d;
  d.shape_ = Shape::Rectangle;
  d.lo_ = lo;
  d.hi_ = hi;
  return d;
}

Domain Domain::disk(Vec2 center, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidInput, "disk radius must be positive");
  Domain d;
  d.shape_ = Shape::Disk;
  d.radius_ = radius;
  d.lo_ = {center.x1 - radius, center.x2 - radius};
  d.hi_ = {center.x1 + radius, center.x2 + radius};
  return d;
}

bool Domain::contains(const Vec2& p, double slack) const {
  if (shape_ == Shape::Disk) return norm(p - center()) <= radius_ * (1.0 + slack) + slack;
  const double sx = slack * (hi_.x1 - lo_.x1);
  const double sy = slack * (hi_.x2 - lo_.x2);
  return p.x1 >= lo_.x1 - sx && p.x1 <= hi_.x1 + sx && p.x2 >= lo_.x2 - sy &&
         p.x2 <= hi_.x2 + sy;
}

double Domain::diameter() const {
  if (shape_ == Shape::Disk) return 2.0 * radius_;
  return norm(hi_ - lo_);
}

Vec2 Domain::center() const { return (lo_ + hi_) * 0.5; }

Domain Domain::expanded(double margin) const {
  if (shape_ == Shape::Disk) return disk(center(), radius_ + margin);
  return rectangle(lo_ - Vec2{margin, margin}, hi_ + Vec2{margin, margin});
}

Grid::Grid(const Domain& domain, std::size_t n) : Grid(domain.lo(), domain.hi(), n, n) {
  for (std::size_t k = 0; k < size(); ++k) set_active(k, domain.contains(point(k)));
}

Grid::Grid(Vec2 lo, Vec2 hi, std::size_t nx, std::size_t ny)
    : lo_(lo), hi_(hi), nx_(nx), ny_(ny), active_(nx * ny, 1) {
  if (nx < 2 || ny < 2) throw Error(ErrorCode::InvalidInput, "grid needs at least 2x2 nodes");
  dx_ = (hi.x1 - lo.x1) / static_cast<double>(nx - 1);
  dy_ = (hi.x2 - lo.x2) / static_cast<double>(ny - 1);
}

Vec2 Grid::point(std::size_t i, std::size_t j) const {
  // Pin the last node to hi exactly so extents survive roundoff.
  const double a = (i + 1 == nx_) ? hi_.x1 : lo_.x1 + static_cast<double>(i) * dx_;
  const double b = (j + 1 == ny_) ? hi_.x2 : lo_.x2 + static_cast<double>(j) * dy_;
  return {a, b};
}

std::size_t Grid::active_count() const {
  return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), 1));
}

std::vector<std::size_t> Grid::active_indices() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (std::size_t k = 0; k < size(); ++k) {
    if (active(k)) out.push_back(k);
  }
  return out;
}

std::size_t Grid::nearest(const Vec2& p) const {
  auto clamp_index = [](double t, std::size_t n) {
    const double r = std::round(t);
    if (r <= 0.0) return std::size_t{0};
    return std::min(static_cast<std::size_t>(r), n - 1);
  };
  const std::size_t i = clamp_index((p.x1 - lo_.x1) / dx_, nx_);
  const std::size_t j = clamp_index((p.x2 - lo_.x2) / dy_, ny_);
  return index(i, j);
}

}  // namespace freeform
