#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "stvo/grid.hpp"
#include "stvo/se3.hpp"

namespace stvo {

/// Points with camera-frame Z at or below this (meters) are not projected.
inline constexpr double kMinProjectionDepth = 1e-3;

/// Pinhole intrinsics in pixel units. Pixel (x, y) refers to the pixel center.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) ||
        !std::isfinite(cx) || !std::isfinite(cy)) {
      throw DomainError("Intrinsics: focal lengths must be positive and all values finite");
    }
  }

  /// Intrinsics after resizing the image by (sx, sy), pixel-center convention.
  Intrinsics scaled(double sx, double sy) const {
    return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5};
  }

  bool operator==(const Intrinsics&) const = default;
};

inline Vec3 backproject(const Vec2& pixel, double depth, const Intrinsics& k) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw DomainError("backproject: depth must be positive and finite, got " + std::to_string(depth));
  }
  return {(pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth};
}

struct Projection {
  Vec2 pixel = Vec2::Zero();
  bool valid = false;
};

inline Projection project(const Vec3& point, const Intrinsics& k) {
  if (!(point.z() > kMinProjectionDepth)) return {Vec2::Zero(), false};
  return {{k.fx * point.x() / point.z() + k.cx, k.fy * point.y() / point.z() + k.cy}, true};
}

/**
 * Per-pixel sampling coordinates into a live image.
 *
 * Coordinates of masked-valid pixels lie in [0, W-1] x [0, H-1] of the live
 * image; nothing is guaranteed for invalid pixels.
 */
struct WarpField {
  int height = 0;
  int width = 0;
  std::vector<double> x;
  std::vector<double> y;
  ValidityMask mask;

  WarpField() = default;
  WarpField(int h, int w)
      : height(h), width(w), x(static_cast<std::size_t>(h) * w, 0.0),
        y(static_cast<std::size_t>(h) * w, 0.0), mask(h, w, false) {}
};

/// Partial derivatives of the warp coordinates for every reference pixel.
struct WarpJacobians {
  int height = 0;
  int width = 0;
  /// d(x, y)/d depth, two entries per pixel.
  std::vector<double> d_depth;
  /// d(x, y)/d[u, v], 2x6 row-major per pixel; empty when the transform is fixed.
  std::vector<double> d_twist;

  Vec2 depth_partial(std::size_t i) const { return {d_depth[2 * i], d_depth[2 * i + 1]}; }
  Mat26 twist_partial(std::size_t i) const {
    return Eigen::Map<const Eigen::Matrix<double, 2, 6, Eigen::RowMajor>>(d_twist.data() + 12 * i);
  }
};

namespace detail {

inline constexpr double kBorderSnap = 1e-9;

inline double snap_to_border(double s, double max) {
  if (s < 0.0 && s > -kBorderSnap) return 0.0;
  if (s > max && s < max + kBorderSnap) return max;
  return s;
}

/// Shared implementation of the warp field and its Jacobians.
/// `twist`, when given, must generate `t`; its partials are then filled.
inline WarpField warp_field_impl(const ImageGrid& depth, const SE3Transform& t, const Intrinsics& k,
                                 int live_height, int live_width, const Twist* twist,
                                 WarpJacobians* jac) {
  if (depth.channels() != 1) throw DimensionMismatchError("warp field: depth must be 1-channel");
  k.validate();
  const int h = depth.height(), w = depth.width();
  if (live_height < 0) live_height = h;
  if (live_width < 0) live_width = w;
  WarpField field(h, w);
  Mat3 rot_jac = Mat3::Identity();
  if (jac) {
    jac->height = h;
    jac->width = w;
    jac->d_depth.assign(2 * field.x.size(), 0.0);
    if (twist) {
      jac->d_twist.assign(12 * field.x.size(), 0.0);
      rot_jac = so3_left_jacobian(twist->rotation());
    } else {
      jac->d_twist.clear();
    }
  }
  const double max_x = live_width - 1, max_y = live_height - 1;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const std::size_t i = static_cast<std::size_t>(py) * w + px;
      const double d = depth(py, px);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Vec3 ray((px - k.cx) / k.fx, (py - k.cy) / k.fy, 1.0);
      const Vec3 rotated = t.rotation * (d * ray);
      const Vec3 p = rotated + t.translation;
      if (!(p.z() > kMinProjectionDepth)) continue;
      const double iz = 1.0 / p.z();
      // Rounding can push an exact border coordinate (row 0 under a pure
      // horizontal shift, say) a few ulps outside; snap it back.
      const double u = snap_to_border(k.fx * p.x() * iz + k.cx, max_x);
      const double v = snap_to_border(k.fy * p.y() * iz + k.cy, max_y);
      field.x[i] = u;
      field.y[i] = v;
      field.mask.set(i, u >= 0.0 && u <= max_x && v >= 0.0 && v <= max_y);
      if (!jac) continue;
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz,
               0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
      const Vec2 dd = dproj * (t.rotation * ray);
      jac->d_depth[2 * i] = dd.x();
      jac->d_depth[2 * i + 1] = dd.y();
      if (twist) {
        Mat36 dp;
        dp.leftCols<3>() = -skew(rotated) * rot_jac;
        dp.rightCols<3>() = Mat3::Identity();
        Eigen::Map<Eigen::Matrix<double, 2, 6, Eigen::RowMajor>>(jac->d_twist.data() + 12 * i) =
            dproj * dp;
      }
    }
  }
  return field;
}

}  // namespace detail

/**
 * Reference-to-live sampling coordinates: backproject each reference pixel
 * with its depth, move it by `t` (reference camera -> live camera) and
 * project into the live image. Pixels behind the live camera or outside
 * the live image are masked out.
 *
 * `live_height`/`live_width` default to the depth grid extent.
 */
inline WarpField epipolar_warp_field(const ImageGrid& depth, const SE3Transform& t,
                                     const Intrinsics& k, int live_height = -1,
                                     int live_width = -1) {
  return detail::warp_field_impl(depth, t, k, live_height, live_width, nullptr, nullptr);
}

/// Warp field plus d(coords)/d(depth) for a fixed transform.
inline WarpField epipolar_warp_field(const ImageGrid& depth, const SE3Transform& t,
                                     const Intrinsics& k, WarpJacobians& jac) {
  return detail::warp_field_impl(depth, t, k, -1, -1, nullptr, &jac);
}

/// Warp field plus partials with respect to depth and the six twist parameters.
inline WarpField epipolar_warp_field(const ImageGrid& depth, const Twist& twist,
                                     const Intrinsics& k, WarpJacobians& jac) {
  return detail::warp_field_impl(depth, twist_to_transform(twist), k, -1, -1, &twist, &jac);
}

inline WarpJacobians warp_field_jacobians(const ImageGrid& depth, const Twist& twist,
                                          const Intrinsics& k) {
  WarpJacobians jac;
  epipolar_warp_field(depth, twist, k, jac);
  return jac;
}

}  // namespace stvo
