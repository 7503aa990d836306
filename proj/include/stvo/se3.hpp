#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "stvo/errors.hpp"

namespace stvo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat26 = Eigen::Matrix<double, 2, 6>;

inline Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

/**
 * Six pose parameters: axis-angle rotation `u` (radians times unit axis) and
 * translation `v` (meters). Ordering in vector form is [u, v].
 *
 * The rotation magnitude is restricted to |u| < pi so every rotation has a
 * unique principal representative.
 */
class Twist {
 public:
  Twist() = default;
  Twist(const Vec3& rotation, const Vec3& translation) : u_(rotation), v_(translation) {
    validate();
  }
  explicit Twist(const Vec6& uv) : Twist(uv.head<3>(), uv.tail<3>()) {}

  const Vec3& rotation() const noexcept { return u_; }
  const Vec3& translation() const noexcept { return v_; }

  Vec6 vector() const {
    Vec6 out;
    out << u_, v_;
    return out;
  }

  bool operator==(const Twist&) const = default;

 private:
  void validate() const {
    if (!u_.allFinite() || !v_.allFinite()) throw NumericError("Twist: non-finite entry");
    if (u_.norm() >= std::numbers::pi) {
      throw DomainError("Twist: rotation magnitude " + std::to_string(u_.norm()) +
                        " outside the principal range |u| < pi");
    }
  }

  Vec3 u_ = Vec3::Zero();
  Vec3 v_ = Vec3::Zero();
};

/// Rigid transform x -> R x + t.
struct SE3Transform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static SE3Transform identity() { return {}; }

  static SE3Transform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  static SE3Transform from_matrix(const Mat4& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Orthonormality and det(R) = +1 within `tol`.
  bool is_valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// Rodrigues' formula; second-order Taylor expansion below |u| = 1e-8.
inline Mat3 rotation_from_axis_angle(const Vec3& u) {
  const double theta = u.norm();
  const Mat3 k = skew(u);
  if (theta < 1e-8) return Mat3::Identity() + k + 0.5 * k * k;
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

/// Rotation = Rodrigues(u), translation = v (no coupling through the V matrix).
inline SE3Transform twist_to_transform(const Twist& t) {
  return {rotation_from_axis_angle(t.rotation()), t.translation()};
}

inline Vec3 transform_point(const SE3Transform& t, const Vec3& p) {
  return t.rotation * p + t.translation;
}

inline SE3Transform invert(const SE3Transform& t) {
  const Mat3 rt = t.rotation.transpose();
  return {rt, -rt * t.translation};
}

/// Pulls a nearly orthonormal matrix back onto SO(3) with one Newton step.
inline Mat3 reorthonormalize(const Mat3& r) {
  return 0.5 * r * (3.0 * Mat3::Identity() - r.transpose() * r);
}

/// a * b: applies b first, then a.
inline SE3Transform compose(const SE3Transform& a, const SE3Transform& b) {
  return {reorthonormalize(a.rotation * b.rotation), a.rotation * b.translation + a.translation};
}

/**
 * Left Jacobian of SO(3): R(u + d) ~= exp([J_l(u) d]x) R(u).
 */
inline Mat3 so3_left_jacobian(const Vec3& u) {
  const double theta = u.norm();
  const Mat3 k = skew(u);
  if (theta < 1e-5) return Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  const double t2 = theta * theta;
  return Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * k +
         ((theta - std::sin(theta)) / (t2 * theta)) * k * k;
}

/// d(R(u) p + v) / d[u, v]. The translation block is the identity.
inline Mat36 twist_jacobians(const Twist& t, const Vec3& p) {
  Mat36 j;
  const Vec3 rp = rotation_from_axis_angle(t.rotation()) * p;
  j.leftCols<3>() = -skew(rp) * so3_left_jacobian(t.rotation());
  j.rightCols<3>() = Mat3::Identity();
  return j;
}

/// Rotation angle of R in radians, clamped for round-off.
inline double rotation_angle(const Mat3& r) {
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  return std::acos(c);
}

/// Principal axis-angle vector of R (inverse of Rodrigues for |u| < pi).
inline Vec3 axis_angle_from_rotation(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

}  // namespace stvo
