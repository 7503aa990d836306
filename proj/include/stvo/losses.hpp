#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "stvo/camera.hpp"
#include "stvo/features.hpp"
#include "stvo/grid.hpp"
#include "stvo/instance.hpp"
#include "stvo/se3.hpp"
#include "stvo/warp.hpp"

namespace stvo {

/// Offset in the inverse-depth to depth conversion D = 1 / (d_inv + offset).
inline constexpr double kInverseDepthOffset = 1e-4;

struct LossWeights {
  double lambda_ir = 1.0;
  double lambda_fr = 0.1;
  double lambda_ds = 10.0;

  void validate() const {
    if (!(lambda_ir >= 0.0) || !(lambda_fr >= 0.0) || !(lambda_ds >= 0.0)) {
      throw DomainError("LossWeights: weights must be non-negative");
    }
  }
  bool operator==(const LossWeights&) const = default;
};

/// Which live views contribute reconstruction terms.
struct ViewPairs {
  bool temporal = true;
  bool stereo = true;

  static ViewPairs monocular() { return {true, false}; }
  static ViewPairs stereo_only() { return {false, true}; }
};

struct LossBreakdown {
  double l_ir = 0.0;
  double l_fr = 0.0;
  double l_ds = 0.0;
  double total = 0.0;
  std::size_t valid_temporal = 0;
  std::size_t valid_stereo = 0;
  std::size_t smoothness_terms = 0;
};

inline ImageGrid depth_from_inverse(const ImageGrid& inverse_depth) {
  if (inverse_depth.channels() != 1) {
    throw DimensionMismatchError("depth_from_inverse: inverse depth must be 1-channel");
  }
  ImageGrid depth(inverse_depth.height(), inverse_depth.width(), 1, 0.0, ValueRange::kMeters);
  auto in = inverse_depth.values();
  auto out = depth.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double d = 1.0 / (in[i] + kInverseDepthOffset);
    if (!std::isfinite(d) || !(d > 0.0)) {
      throw NumericError("depth_from_inverse: inverse depth " + std::to_string(in[i]) +
                         " gives a non-positive depth");
    }
    out[i] = d;
  }
  return depth;
}

/// Inverse of depth_from_inverse, clamped at zero for depths beyond 1e4 m.
inline ImageGrid inverse_from_depth(const ImageGrid& depth) {
  ImageGrid inv(depth.height(), depth.width(), 1, 0.0, ValueRange::kInverseMeters);
  auto in = depth.values();
  auto out = inv.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!(in[i] > 0.0)) throw DomainError("inverse_from_depth: depth must be positive");
    out[i] = std::max(0.0, 1.0 / in[i] - kInverseDepthOffset);
  }
  return inv;
}

/// A scalar loss and its gradient with respect to one grid argument.
struct GridLoss {
  double value = 0.0;
  ImageGrid gradient;
  std::size_t count = 0;
};

/// Residuals this small are rounding noise of an exact match and count as ties.
inline constexpr double kResidualTie = 1e-12;

/**
 * Mean L1 difference over valid pixels and all channels. The gradient is
 * taken with respect to `synthesized`: sign(synth - ref) / N, zero at ties
 * (|diff| <= kResidualTie) and on invalid pixels.
 */
inline GridLoss image_reconstruction_loss(const ImageGrid& reference, const ImageGrid& synthesized,
                                          const ValidityMask& mask) {
  if (!reference.same_shape(synthesized)) {
    throw DimensionMismatchError("reconstruction loss: grids differ in shape");
  }
  detail::require_mask(mask, reference, "reconstruction loss");
  const std::size_t valid = mask.count();
  if (valid == 0) throw EmptyOverlapError("reconstruction loss: no valid pixels");
  const int c = reference.channels();
  const double n = static_cast<double>(valid) * c;
  GridLoss out{0.0, ImageGrid(reference.height(), reference.width(), c), valid};
  auto r = reference.values();
  auto s = synthesized.values();
  auto g = out.gradient.values();
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask.at(p)) continue;
    for (int k = 0; k < c; ++k) {
      const std::size_t i = p * c + k;
      const double diff = s[i] - r[i];
      out.value += std::abs(diff);
      g[i] = diff > kResidualTie ? 1.0 / n : (diff < -kResidualTie ? -1.0 / n : 0.0);
    }
  }
  out.value /= n;
  return out;
}

/// Same contract as image_reconstruction_loss, applied to feature channels.
inline GridLoss feature_reconstruction_loss(const ImageGrid& reference_features,
                                            const ImageGrid& synthesized_features,
                                            const ValidityMask& mask) {
  return image_reconstruction_loss(reference_features, synthesized_features, mask);
}

/**
 * Edge-aware smoothness on inverse depth:
 *   mean_x |dx D| exp(-|dx I|) + mean_y |dy D| exp(-|dy I|)
 * where each mean runs over that direction's forward-difference positions
 * and |dI| is the channel mean of the absolute image gradient. A direction
 * with no positions (width or height 1) contributes zero. The gradient is
 * with respect to `inverse_depth`.
 */
inline GridLoss smoothness_loss(const ImageGrid& inverse_depth, const ImageGrid& image) {
  detail::require_extent(inverse_depth, image, "smoothness_loss");
  if (inverse_depth.channels() != 1) {
    throw DimensionMismatchError("smoothness_loss: inverse depth must be 1-channel");
  }
  const int h = inverse_depth.height(), w = inverse_depth.width();
  if (w < 2 && h < 2) throw DegenerateInputError("smoothness_loss: grid has no stencil positions");
  GridLoss out{0.0, ImageGrid(h, w, 1), 0};
  const auto& d = inverse_depth;
  auto& g = out.gradient;
  if (w >= 2) {
    const ImageGrid edge = channel_mean_abs(gradient_x(image));
    const double n = static_cast<double>(h) * (w - 1);
    double sum = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x + 1 < w; ++x) {
        const double wgt = std::exp(-edge(y, x));
        const double diff = d(y, x + 1) - d(y, x);
        sum += std::abs(diff) * wgt;
        const double s = diff > 0.0 ? wgt / n : (diff < 0.0 ? -wgt / n : 0.0);
        g(y, x + 1) += s;
        g(y, x) -= s;
      }
    out.value += sum / n;
    out.count += static_cast<std::size_t>(n);
  }
  if (h >= 2) {
    const ImageGrid edge = channel_mean_abs(gradient_y(image));
    const double n = static_cast<double>(h - 1) * w;
    double sum = 0.0;
    for (int y = 0; y + 1 < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double wgt = std::exp(-edge(y, x));
        const double diff = d(y + 1, x) - d(y, x);
        sum += std::abs(diff) * wgt;
        const double s = diff > 0.0 ? wgt / n : (diff < 0.0 ? -wgt / n : 0.0);
        g(y + 1, x) += s;
        g(y, x) -= s;
      }
    out.value += sum / n;
    out.count += static_cast<std::size_t>(n);
  }
  return out;
}

/// Features of the three instance images under one extractor.
struct FeatureMaps {
  ImageGrid reference;
  ImageGrid temporal_live;
  ImageGrid stereo_live;
};

inline FeatureMaps compute_features(const TrainingInstance& instance, const FeatureExtractor& e) {
  return {e.extract(instance.reference), e.extract(instance.temporal_live),
          e.extract(instance.stereo_live)};
}

struct TotalLoss {
  LossBreakdown breakdown;
  /// d total / d inverse depth, same extent as the inverse-depth grid.
  ImageGrid grad_inverse_depth;
  /// d total / d [u, v] of the temporal twist.
  Vec6 grad_twist = Vec6::Zero();
};

namespace detail {

struct PairTerms {
  double image = 0.0;
  double feature = 0.0;
  std::size_t valid = 0;
};

/// Reconstruction terms of one live view; accumulates weighted gradients
/// with respect to depth (and the twist, when `jac` carries twist partials).
inline PairTerms accumulate_pair(const ImageGrid& reference, const ImageGrid& live,
                                 const ImageGrid* ref_features, const ImageGrid* live_features,
                                 const WarpField& field, const WarpJacobians& jac,
                                 const LossWeights& weights, bool want_gradients,
                                 ImageGrid& grad_depth, Vec6* grad_twist) {
  PairTerms terms;
  const SampledGrid synth = bilinear_sample(live, field);
  terms.valid = synth.mask.count();
  if (terms.valid == 0) return terms;

  const std::size_t npix = field.x.size();
  std::vector<double> gcoord(want_gradients ? 2 * npix : 0, 0.0);

  auto add_term = [&](const ImageGrid& ref, const ImageGrid& src, const SampledGrid& s,
                      double weight) {
    const GridLoss loss = image_reconstruction_loss(ref, s.image, s.mask);
    if (!want_gradients || weight == 0.0) return loss.value;
    const SampleGradient sg = bilinear_sample_gradient(src, field);
    const int c = src.channels();
    auto lg = loss.gradient.values();
    auto gx = sg.dx.values();
    auto gy = sg.dy.values();
    for (std::size_t p = 0; p < npix; ++p) {
      if (!s.mask.at(p)) continue;
      double ax = 0.0, ay = 0.0;
      for (int k = 0; k < c; ++k) {
        ax += lg[p * c + k] * gx[p * c + k];
        ay += lg[p * c + k] * gy[p * c + k];
      }
      gcoord[2 * p] += weight * ax;
      gcoord[2 * p + 1] += weight * ay;
    }
    return loss.value;
  };

  terms.image = add_term(reference, live, synth, weights.lambda_ir);
  if (ref_features && live_features) {
    const SampledGrid fsynth = bilinear_sample(*live_features, field);
    terms.feature = add_term(*ref_features, *live_features, fsynth, weights.lambda_fr);
  }
  if (!want_gradients) return terms;

  for (std::size_t p = 0; p < npix; ++p) {
    const double ax = gcoord[2 * p], ay = gcoord[2 * p + 1];
    if (ax == 0.0 && ay == 0.0) continue;
    const Vec2 g(ax, ay);
    grad_depth.values()[p] += g.dot(jac.depth_partial(p));
    if (grad_twist && !jac.d_twist.empty()) *grad_twist += jac.twist_partial(p).transpose() * g;
  }
  return terms;
}

}  // namespace detail

/**
 * Weighted loss of one instance and its gradients.
 *
 * Both live views are warped into the reference view with the depth
 * D = 1 / (d_inv + 1e-4): the temporal view through `temporal_twist`, the
 * stereo view through the known stereo transform. l_ir and l_fr are the sums
 * of the per-view mean L1 terms, l_ds the edge-aware smoothness of d_inv.
 * Only the temporal twist receives pose gradients. Features are optional;
 * without them l_fr is zero.
 */
inline TotalLoss total_loss(const TrainingInstance& instance, const ImageGrid& inverse_depth,
                            const Twist& temporal_twist, const FeatureMaps* features,
                            const LossWeights& weights, ViewPairs pairs = {},
                            bool want_gradients = true) {
  weights.validate();
  detail::require_extent(inverse_depth, instance.reference, "total_loss");
  const ImageGrid depth = depth_from_inverse(inverse_depth);
  const Intrinsics& k = instance.intrinsics;

  TotalLoss out;
  ImageGrid grad_depth(depth.height(), depth.width(), 1);

  if (pairs.temporal) {
    WarpJacobians jac;
    const WarpField field = epipolar_warp_field(depth, temporal_twist, k, jac);
    const auto t = detail::accumulate_pair(
        instance.reference, instance.temporal_live, features ? &features->reference : nullptr,
        features ? &features->temporal_live : nullptr, field, jac, weights, want_gradients,
        grad_depth, &out.grad_twist);
    out.breakdown.l_ir += t.image;
    out.breakdown.l_fr += t.feature;
    out.breakdown.valid_temporal = t.valid;
  }
  if (pairs.stereo) {
    WarpJacobians jac;
    const WarpField field = epipolar_warp_field(depth, instance.stereo_transform, k, jac);
    const auto s = detail::accumulate_pair(
        instance.reference, instance.stereo_live, features ? &features->reference : nullptr,
        features ? &features->stereo_live : nullptr, field, jac, weights, want_gradients,
        grad_depth, nullptr);
    out.breakdown.l_ir += s.image;
    out.breakdown.l_fr += s.feature;
    out.breakdown.valid_stereo = s.valid;
  }
  if (out.breakdown.valid_temporal + out.breakdown.valid_stereo == 0) {
    throw EmptyOverlapError("total_loss: no valid pixels in any live view");
  }

  const GridLoss smooth = smoothness_loss(inverse_depth, instance.reference);
  out.breakdown.l_ds = smooth.value;
  out.breakdown.smoothness_terms = smooth.count;
  out.breakdown.total = weights.lambda_ir * out.breakdown.l_ir +
                        weights.lambda_fr * out.breakdown.l_fr +
                        weights.lambda_ds * out.breakdown.l_ds;

  if (want_gradients) {
    out.grad_inverse_depth = ImageGrid(depth.height(), depth.width(), 1);
    auto gi = out.grad_inverse_depth.values();
    auto gd = grad_depth.values();
    auto dv = depth.values();
    auto gs = smooth.gradient.values();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      gi[i] = -gd[i] * dv[i] * dv[i] + weights.lambda_ds * gs[i];
    }
  }
  return out;
}

/// Convenience overload that extracts features on the fly.
inline TotalLoss total_loss(const TrainingInstance& instance, const ImageGrid& inverse_depth,
                            const Twist& temporal_twist, const FeatureExtractor& extractor,
                            const LossWeights& weights, ViewPairs pairs = {}) {
  const FeatureMaps f = compute_features(instance, extractor);
  return total_loss(instance, inverse_depth, temporal_twist, &f, weights, pairs);
}

}  // namespace stvo
