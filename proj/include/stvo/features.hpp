#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "stvo/grid.hpp"

namespace stvo {

enum class FeatureKind { kIdentity, kGradientDescriptor, kRandomConv };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::kIdentity: return "identity";
    case FeatureKind::kGradientDescriptor: return "gradient";
    case FeatureKind::kRandomConv: return "random_conv";
  }
  return "unknown";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "identity") return FeatureKind::kIdentity;
  if (s == "gradient" || s == "gradient_descriptor") return FeatureKind::kGradientDescriptor;
  if (s == "random_conv") return FeatureKind::kRandomConv;
  throw DomainError("unknown feature extractor '" + std::string(s) + "'");
}

namespace detail {

inline int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

/// Separable 5-tap Gaussian (sigma = 1) with replicated borders.
inline ImageGrid gaussian_blur5(const ImageGrid& in) {
  std::array<double, 5> k{};
  double sum = 0.0;
  for (int i = -2; i <= 2; ++i) sum += k[i + 2] = std::exp(-0.5 * i * i);
  for (auto& v : k) v /= sum;
  const int h = in.height(), w = in.width(), c = in.channels();
  ImageGrid tmp(h, w, c), out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -2; i <= 2; ++i) s += k[i + 2] * in(y, clamp_index(x + i, w), ch);
        tmp(y, x, ch) = s;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp(clamp_index(y + i, h), x, ch);
        out(y, x, ch) = s;
      }
  return out;
}

/// Per-channel zero mean / unit variance; zero-variance channels untouched.
inline void standardize_channels(ImageGrid& g) {
  const int c = g.channels();
  const auto n = static_cast<double>(g.pixel_count());
  if (g.pixel_count() == 0) return;
  auto vals = g.values();
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t i = ch; i < vals.size(); i += c) mean += vals[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = ch; i < vals.size(); i += c) var += (vals[i] - mean) * (vals[i] - mean);
    const double sd = std::sqrt(var / n);
    if (!(sd > 1e-12)) continue;
    for (std::size_t i = ch; i < vals.size(); i += c) vals[i] = (vals[i] - mean) / sd;
  }
}

}  // namespace detail

/**
 * Fixed dense feature extractors for the feature reconstruction loss.
 *
 *  - identity: the image itself, not standardized.
 *  - gradient: 5-tap Gaussian blur, central x/y gradients, stacked over a
 *    3x3 neighborhood (2 * C * 9 channels), standardized per channel.
 *  - random_conv: one seeded 5x5 convolution with 16 outputs, weights
 *    N(0, 1) / sqrt(fan_in), standardized per channel.
 *
 * Extractors are immutable and never receive gradients.
 */
class FeatureExtractor {
 public:
  static constexpr int kRandomConvOutputs = 16;
  static constexpr int kRandomConvKernel = 5;

  FeatureExtractor() = default;

  static FeatureExtractor identity() { return FeatureExtractor(FeatureKind::kIdentity, 0, 0); }
  static FeatureExtractor gradient_descriptor() {
    return FeatureExtractor(FeatureKind::kGradientDescriptor, 0, 0);
  }
  static FeatureExtractor random_conv(int input_channels, std::uint64_t seed) {
    return FeatureExtractor(FeatureKind::kRandomConv, input_channels, seed);
  }
  static FeatureExtractor make(FeatureKind kind, int input_channels = 3, std::uint64_t seed = 0) {
    return FeatureExtractor(kind, input_channels, seed);
  }

  FeatureKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }

  int output_channels(int input_channels) const {
    switch (kind_) {
      case FeatureKind::kIdentity: return input_channels;
      case FeatureKind::kGradientDescriptor: return 2 * input_channels * 9;
      case FeatureKind::kRandomConv: return kRandomConvOutputs;
    }
    return input_channels;
  }

  /// Same spatial size as `image`; see the class comment for channels.
  ImageGrid extract(const ImageGrid& image) const {
    switch (kind_) {
      case FeatureKind::kIdentity: return image;
      case FeatureKind::kGradientDescriptor: return gradient(image);
      case FeatureKind::kRandomConv: return convolve(image);
    }
    return image;
  }

 private:
  FeatureExtractor(FeatureKind kind, int input_channels, std::uint64_t seed)
      : kind_(kind), input_channels_(input_channels), seed_(seed) {
    if (kind_ != FeatureKind::kRandomConv) return;
    if (input_channels_ < 1) throw DomainError("random_conv: input channel count must be positive");
    const int fan_in = input_channels_ * kRandomConvKernel * kRandomConvKernel;
    weights_.resize(static_cast<std::size_t>(kRandomConvOutputs) * fan_in);
    std::mt19937_64 rng(seed_);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& wv : weights_) wv = normal(rng) * scale;
  }

  static ImageGrid gradient(const ImageGrid& image) {
    const ImageGrid blurred = detail::gaussian_blur5(image);
    const int h = image.height(), w = image.width(), c = image.channels();
    ImageGrid grad(h, w, 2 * c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) {
          grad(y, x, 2 * ch) = 0.5 * (blurred(y, detail::clamp_index(x + 1, w), ch) -
                                      blurred(y, detail::clamp_index(x - 1, w), ch));
          grad(y, x, 2 * ch + 1) = 0.5 * (blurred(detail::clamp_index(y + 1, h), x, ch) -
                                          blurred(detail::clamp_index(y - 1, h), x, ch));
        }
    const int gc = 2 * c;
    ImageGrid out(h, w, 9 * gc);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double* o = out.pixel(y, x);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const double* src =
                grad.pixel(detail::clamp_index(y + dy, h), detail::clamp_index(x + dx, w));
            for (int k = 0; k < gc; ++k) *o++ = src[k];
          }
      }
    detail::standardize_channels(out);
    return out;
  }

  ImageGrid convolve(const ImageGrid& image) const {
    if (image.channels() != input_channels_) {
      throw DimensionMismatchError("random_conv: extractor built for " +
                                   std::to_string(input_channels_) + " channels, image has " +
                                   std::to_string(image.channels()));
    }
    const int h = image.height(), w = image.width(), c = image.channels();
    constexpr int r = kRandomConvKernel / 2;
    ImageGrid out(h, w, kRandomConvOutputs);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int o = 0; o < kRandomConvOutputs; ++o) {
          const double* wk = weights_.data() + static_cast<std::size_t>(o) * c * 25;
          double s = 0.0;
          for (int ky = -r; ky <= r; ++ky)
            for (int kx = -r; kx <= r; ++kx) {
              const double* p = image.pixel(detail::clamp_index(y + ky, h), detail::clamp_index(x + kx, w));
              const int tap = (ky + r) * kRandomConvKernel + (kx + r);
              for (int ch = 0; ch < c; ++ch) s += wk[ch * 25 + tap] * p[ch];
            }
          out(y, x, o) = s;
        }
    detail::standardize_channels(out);
    return out;
  }

  FeatureKind kind_ = FeatureKind::kIdentity;
  int input_channels_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> weights_;
};

/// Cost of matching one left pixel against right pixels along its row.
struct CostProfile {
  std::vector<int> disparities;
  std::vector<double> costs;
  /// Some requested disparities fell outside the right image and were dropped.
  bool truncated = false;

  /// Index of the smallest cost; -1 for an empty profile.
  int argmin() const {
    if (costs.empty()) return -1;
    return static_cast<int>(std::min_element(costs.begin(), costs.end()) - costs.begin());
  }
  double flatness() const {
    if (costs.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(costs.begin(), costs.end());
    return *hi - *lo;
  }
  /// True when the best cost beats every other one by more than `margin`.
  bool unique_minimum(double margin) const {
    const int best = argmin();
    if (best < 0) return false;
    for (std::size_t i = 0; i < costs.size(); ++i) {
      if (static_cast<int>(i) != best && costs[i] - costs[best] <= margin) return false;
    }
    return true;
  }
};

/// Mean absolute channel difference between left(row, pixel) and
/// right(row, pixel - d) for d in [min_disparity, max_disparity].
inline CostProfile matching_cost_profile(const ImageGrid& left_features,
                                         const ImageGrid& right_features, int row, int pixel,
                                         int min_disparity, int max_disparity) {
  if (!left_features.same_shape(right_features)) {
    throw DimensionMismatchError("matching_cost_profile: feature maps differ in shape");
  }
  if (row < 0 || row >= left_features.height() || pixel < 0 || pixel >= left_features.width()) {
    throw DomainError("matching_cost_profile: probe pixel outside the image");
  }
  if (min_disparity > max_disparity) throw DomainError("matching_cost_profile: empty disparity range");
  CostProfile out;
  const int c = left_features.channels();
  const double* l = left_features.pixel(row, pixel);
  for (int d = min_disparity; d <= max_disparity; ++d) {
    const int xr = pixel - d;
    if (xr < 0 || xr >= right_features.width()) {
      out.truncated = true;
      continue;
    }
    const double* r = right_features.pixel(row, xr);
    double s = 0.0;
    for (int k = 0; k < c; ++k) s += std::abs(l[k] - r[k]);
    out.disparities.push_back(d);
    out.costs.push_back(s / c);
  }
  return out;
}

inline CostProfile matching_cost_profile(const ImageGrid& left, const ImageGrid& right,
                                         const FeatureExtractor& e, int row, int pixel,
                                         int min_disparity, int max_disparity) {
  return matching_cost_profile(e.extract(left), e.extract(right), row, pixel, min_disparity,
                               max_disparity);
}

}  // namespace stvo
