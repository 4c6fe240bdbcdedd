#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace metaplan {

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct Vec3 {
  double x = 0, y = 0, z = 0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;

  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  constexpr Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  constexpr Vec3 cwise_mul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  Vec3 cwise_abs() const { return {std::abs(x), std::abs(y), std::abs(z)}; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0 ? *this * (1.0 / n) : Vec3{};
  }
};

/// Unit quaternion, Hamilton convention, stored (w, x, y, z).
struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  static constexpr Quat identity() { return {}; }

  static Quat from_axis_angle(const Vec3& axis, double angle_rad) {
    Vec3 a = axis.normalized();
    double h = 0.5 * angle_rad;
    double s = std::sin(h);
    return Quat{std::cos(h), a.x * s, a.y * s, a.z * s};
  }

  constexpr bool operator==(const Quat&) const = default;

  constexpr Quat operator*(const Quat& q) const {
    return {w * q.w - x * q.x - y * q.y - z * q.z,
            w * q.x + x * q.w + y * q.z - z * q.y,
            w * q.y - x * q.z + y * q.w + z * q.x,
            w * q.z + x * q.y - y * q.x + z * q.w};
  }

  constexpr Quat conjugate() const { return {w, -x, -y, -z}; }
  constexpr double dot(const Quat& q) const { return w * q.w + x * q.x + y * q.y + z * q.z; }
  double norm() const { return std::sqrt(dot(*this)); }

  Quat normalized() const {
    double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  Vec3 rotate(const Vec3& v) const {
    // v' = v + 2w(u x v) + 2u x (u x v)
    Vec3 u{x, y, z};
    Vec3 t = u.cross(v) * 2.0;
    return v + t * w + u.cross(t);
  }

  /// Rotation angle in [0, pi] between this and q.
  double angle_to(const Quat& q) const {
    double d = std::clamp(std::abs(dot(q)), 0.0, 1.0);
    return 2.0 * std::acos(d);
  }

  /// Row-major rotation matrix.
  std::array<double, 9> matrix() const {
    return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
            2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  }
};

inline Quat slerp(const Quat& a, Quat b, double t) {
  double d = a.dot(b);
  if (d < 0) {
    b = Quat{-b.w, -b.x, -b.y, -b.z};
    d = -d;
  }
  if (d > 0.9995) {
    Quat r{a.w + t * (b.w - a.w), a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z)};
    return r.normalized();
  }
  double theta = std::acos(d);
  double s = std::sin(theta);
  double wa = std::sin((1 - t) * theta) / s;
  double wb = std::sin(t * theta) / s;
  return Quat{wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z}
      .normalized();
}

/// Position in meters plus orientation. Gripper-down is the identity orientation.
struct Pose6D {
  Vec3 position;
  Quat orientation;

  constexpr bool operator==(const Pose6D&) const = default;
};

/// Axis-aligned box given by center and half extents.
struct Aabb {
  Vec3 center;
  Vec3 half;

  constexpr Vec3 min() const { return center - half; }
  constexpr Vec3 max() const { return center + half; }
  constexpr double top() const { return center.z + half.z; }
  constexpr double bottom() const { return center.z - half.z; }
};

/// World-frame AABB of a box with object-frame half extents `half` rotated by `q`.
inline Vec3 rotated_half_extents(const Quat& q, const Vec3& half) {
  auto m = q.matrix();
  return {std::abs(m[0]) * half.x + std::abs(m[1]) * half.y + std::abs(m[2]) * half.z,
          std::abs(m[3]) * half.x + std::abs(m[4]) * half.y + std::abs(m[5]) * half.z,
          std::abs(m[6]) * half.x + std::abs(m[7]) * half.y + std::abs(m[8]) * half.z};
}

/// Strict overlap: boxes that only touch do not overlap.
inline bool overlaps(const Aabb& a, const Aabb& b, double eps = 1e-9) {
  Vec3 d = (a.center - b.center).cwise_abs();
  Vec3 s = a.half + b.half;
  return d.x < s.x - eps && d.y < s.y - eps && d.z < s.z - eps;
}

inline bool contains_point(const Aabb& box, const Vec3& p, double eps = 1e-9) {
  Vec3 d = (p - box.center).cwise_abs();
  return d.x < box.half.x - eps && d.y < box.half.y - eps && d.z < box.half.z - eps;
}

inline double distance_to_box(const Aabb& box, const Vec3& p) {
  Vec3 d = (p - box.center).cwise_abs() - box.half;
  Vec3 outside{std::max(d.x, 0.0), std::max(d.y, 0.0), std::max(d.z, 0.0)};
  return outside.norm();
}

/// Footprints overlap in the xy plane (strict).
inline bool footprint_overlaps(const Aabb& a, const Aabb& b, double eps = 1e-9) {
  return std::abs(a.center.x - b.center.x) < a.half.x + b.half.x - eps &&
         std::abs(a.center.y - b.center.y) < a.half.y + b.half.y - eps;
}

}  // namespace metaplan
