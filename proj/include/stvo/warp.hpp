#pragma once

#include <cmath>

#include "stvo/camera.hpp"
#include "stvo/grid.hpp"

namespace stvo {

/// A synthesized grid together with the pixels it is defined on.
struct SampledGrid {
  ImageGrid image;
  ValidityMask mask;
};

/// d(sampled value)/dx and /dy, one channel per source channel.
struct SampleGradient {
  ImageGrid dx;
  ImageGrid dy;
};

namespace detail {

/// Bilinear cell containing coordinate `s` in [0, n-1]. Exact nodes use the
/// cell to their right, except the last node which uses the cell to its left.
struct Cell {
  int i0;
  int i1;
  double frac;
};

inline Cell locate(double s, int n) {
  if (n < 2) return {0, 0, 0.0};
  int i0 = static_cast<int>(std::floor(s));
  if (i0 > n - 2) i0 = n - 2;
  if (i0 < 0) i0 = 0;
  return {i0, i0 + 1, s - i0};
}

inline bool in_bounds(double x, double y, int w, int h) {
  return x >= 0.0 && x <= w - 1 && y >= 0.0 && y <= h - 1;
}

inline void check_field(const ImageGrid& live, const WarpField& field) {
  if (field.mask.height() != field.height || field.mask.width() != field.width ||
      field.x.size() != static_cast<std::size_t>(field.height) * field.width) {
    throw DimensionMismatchError("bilinear_sample: malformed warp field");
  }
  if (live.empty()) throw DimensionMismatchError("bilinear_sample: empty live grid");
}

}  // namespace detail

/**
 * Samples `live` at the field coordinates. A pixel is valid when the field
 * marks it valid and all four interpolation neighbors are inside `live`;
 * invalid output pixels hold zero.
 */
inline SampledGrid bilinear_sample(const ImageGrid& live, const WarpField& field) {
  detail::check_field(live, field);
  const int c = live.channels(), w = live.width(), h = live.height();
  SampledGrid out{ImageGrid(field.height, field.width, c, 0.0, live.value_range()),
                  ValidityMask(field.height, field.width, false)};
  for (std::size_t i = 0; i < field.x.size(); ++i) {
    if (!field.mask.at(i)) continue;
    const double x = field.x[i], y = field.y[i];
    if (!detail::in_bounds(x, y, w, h)) continue;
    const auto cx = detail::locate(x, w);
    const auto cy = detail::locate(y, h);
    const double* p00 = live.pixel(cy.i0, cx.i0);
    const double* p10 = live.pixel(cy.i0, cx.i1);
    const double* p01 = live.pixel(cy.i1, cx.i0);
    const double* p11 = live.pixel(cy.i1, cx.i1);
    const double w00 = (1 - cx.frac) * (1 - cy.frac), w10 = cx.frac * (1 - cy.frac);
    const double w01 = (1 - cx.frac) * cy.frac, w11 = cx.frac * cy.frac;
    double* o = out.image.values().data() + i * c;
    for (int k = 0; k < c; ++k) o[k] = w00 * p00[k] + w10 * p10[k] + w01 * p01[k] + w11 * p11[k];
    out.mask.set(i, true);
  }
  return out;
}

/// Partials of bilinear_sample with respect to the sampling coordinates.
/// Zero on pixels bilinear_sample marks invalid.
inline SampleGradient bilinear_sample_gradient(const ImageGrid& live, const WarpField& field) {
  detail::check_field(live, field);
  const int c = live.channels(), w = live.width(), h = live.height();
  SampleGradient g{ImageGrid(field.height, field.width, c), ImageGrid(field.height, field.width, c)};
  for (std::size_t i = 0; i < field.x.size(); ++i) {
    if (!field.mask.at(i)) continue;
    const double x = field.x[i], y = field.y[i];
    if (!detail::in_bounds(x, y, w, h)) continue;
    const auto cx = detail::locate(x, w);
    const auto cy = detail::locate(y, h);
    const double* p00 = live.pixel(cy.i0, cx.i0);
    const double* p10 = live.pixel(cy.i0, cx.i1);
    const double* p01 = live.pixel(cy.i1, cx.i0);
    const double* p11 = live.pixel(cy.i1, cx.i1);
    double* gx = g.dx.values().data() + i * c;
    double* gy = g.dy.values().data() + i * c;
    for (int k = 0; k < c; ++k) {
      gx[k] = (1 - cy.frac) * (p10[k] - p00[k]) + cy.frac * (p11[k] - p01[k]);
      gy[k] = (1 - cx.frac) * (p01[k] - p00[k]) + cx.frac * (p11[k] - p10[k]);
    }
  }
  return g;
}

/**
 * View synthesis: warps `live` into the reference viewpoint given the
 * reference depth (1-channel, meters) and the reference -> live transform.
 * Works for any channel count, so feature maps go through the same path.
 */
inline SampledGrid synthesize_view(const ImageGrid& live, const ImageGrid& depth,
                                   const SE3Transform& t, const Intrinsics& k) {
  return bilinear_sample(live, epipolar_warp_field(depth, t, k, live.height(), live.width()));
}

}  // namespace stvo
