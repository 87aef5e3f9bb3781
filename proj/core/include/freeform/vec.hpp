#pragma once

#include <array>
#include <cmath>

namespace freeform {

struct Vec2 {
  double x1 = 0.0;
  double x2 = 0.0;

  constexpr Vec2() = default;
  constexpr Vec2(double a, double b) : x1(a), x2(b) {}

  constexpr double operator[](int i) const { return i == 0 ? x1 : x2; }

  constexpr Vec2 operator+(const Vec2& o) const { return {x1 + o.x1, x2 + o.x2}; }
  constexpr Vec2 operator-(const Vec2& o) const { return {x1 - o.x1, x2 - o.x2}; }
  constexpr Vec2 operator-() const { return {-x1, -x2}; }
  constexpr Vec2 operator*(double s) const { return {x1 * s, x2 * s}; }
  constexpr Vec2 operator/(double s) const { return {x1 / s, x2 / s}; }
  Vec2& operator+=(const Vec2& o) {
    x1 += o.x1;
    x2 += o.x2;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr Vec2 operator*(double s, const Vec2& v) { return v * s; }
constexpr double dot(const Vec2& a, const Vec2& b) { return a.x1 * b.x1 + a.x2 * b.x2; }
/// Scalar 2D cross product a1*b2 - a2*b1.
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x1 * b.x2 - a.x2 * b.x1; }
inline double norm(const Vec2& a) { return std::hypot(a.x1, a.x2); }
constexpr double norm2(const Vec2& a) { return dot(a, a); }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double a, double b, double c) : x(a), y(b), z(c) {}
  /// Lifts a planar point to (p, h).
  constexpr Vec3(const Vec2& p, double h) : x(p.x1), y(p.x2), z(h) {}

  constexpr Vec2 xy() const { return {x, y}; }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
constexpr double norm2(const Vec3& a) { return dot(a, a); }
inline Vec3 normalized(const Vec3& a) { return a / norm(a); }
inline bool is_finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}
inline bool is_finite(const Vec2& a) { return std::isfinite(a.x1) && std::isfinite(a.x2); }

inline constexpr Vec3 kE3{0.0, 0.0, 1.0};

/// Row-major 2x2 matrix; m[i][j] = d(component i)/d(x_j) when used as a Jacobian.
struct Mat2 {
  std::array<std::array<double, 2>, 2> m{};

  constexpr double operator()(int i, int j) const { return m[i][j]; }
  constexpr double& operator()(int i, int j) { return m[i][j]; }
  constexpr double det() const { return m[0][0] * m[1][1] - m[0][1] * m[1][0]; }
  constexpr Vec2 operator*(const Vec2& v) const {
    return {m[0][0] * v.x1 + m[0][1] * v.x2, m[1][0] * v.x1 + m[1][1] * v.x2};
  }
  static constexpr Mat2 identity() { return Mat2{{{{1.0, 0.0}, {0.0, 1.0}}}}; }
};

}  // namespace freeform
