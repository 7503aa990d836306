#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stvo/errors.hpp"

namespace stvo {

/// What the values stored in a grid mean. Informational only.
enum class ValueRange {
  kUnspecified,
  kNormalized,  ///< intensities in [0, 1]
  kMeters,      ///< metric depth
  kInverseMeters,
};

/**
 * Dense H x W x C grid of doubles.
 *
 * Storage is row-major with interleaved channels: element (y, x, c) lives at
 * `(y * width + x) * channels + c`. Images, feature maps, depth maps and
 * inverse-depth maps all use this type.
 */
class ImageGrid {
 public:
  ImageGrid() = default;

  ImageGrid(int height, int width, int channels, double fill = 0.0,
            ValueRange range = ValueRange::kUnspecified)
      : height_(height), width_(width), channels_(channels), range_(range) {
    if (height < 0 || width < 0 || channels < 1) {
      throw DimensionMismatchError("ImageGrid: invalid shape " + std::to_string(height) + "x" +
                                   std::to_string(width) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  ImageGrid(int height, int width, int channels, std::vector<double> data,
            ValueRange range = ValueRange::kUnspecified)
      : height_(height), width_(width), channels_(channels), range_(range), data_(std::move(data)) {
    if (height < 0 || width < 0 || channels < 1 ||
        data_.size() != static_cast<std::size_t>(height) * width * channels) {
      throw DimensionMismatchError("ImageGrid: data length does not match shape");
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  ValueRange value_range() const noexcept { return range_; }
  void set_value_range(ValueRange r) noexcept { range_ = r; }

  double& operator()(int y, int x, int c = 0) noexcept { return data_[index(y, x, c)]; }
  double operator()(int y, int x, int c = 0) const noexcept { return data_[index(y, x, c)]; }

  std::size_t index(int y, int x, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  double* pixel(int y, int x) noexcept { return data_.data() + index(y, x); }
  const double* pixel(int y, int x) const noexcept { return data_.data() + index(y, x); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  bool same_extent(const ImageGrid& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }
  bool same_shape(const ImageGrid& o) const noexcept {
    return same_extent(o) && channels_ == o.channels_;
  }

  bool operator==(const ImageGrid& o) const noexcept {
    return same_shape(o) && data_ == o.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  ValueRange range_ = ValueRange::kUnspecified;
  std::vector<double> data_;
};

/// Per-pixel validity flags.
class ValidityMask {
 public:
  ValidityMask() = default;
  ValidityMask(int height, int width, bool fill = true)
      : height_(height), width_(width),
        flags_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

  bool operator()(int y, int x) const noexcept {
    return flags_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int y, int x, bool v) noexcept {
    flags_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }
  bool at(std::size_t i) const noexcept { return flags_[i] != 0; }
  void set(std::size_t i, bool v) noexcept { flags_[i] = v ? 1 : 0; }

  std::size_t size() const noexcept { return flags_.size(); }
  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto f : flags_) n += f;
    return n;
  }

  bool matches(const ImageGrid& g) const noexcept {
    return height_ == g.height() && width_ == g.width();
  }

  /// Elementwise AND; both masks must have the same dimensions.
  ValidityMask operator&(const ValidityMask& o) const {
    if (o.height_ != height_ || o.width_ != width_) {
      throw DimensionMismatchError("ValidityMask: AND of masks with different extents");
    }
    ValidityMask r = *this;
    for (std::size_t i = 0; i < flags_.size(); ++i) r.flags_[i] &= o.flags_[i];
    return r;
  }

  bool operator==(const ValidityMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> flags_;
};

namespace detail {

inline void require_extent(const ImageGrid& a, const ImageGrid& b, const char* what) {
  if (!a.same_extent(b)) {
    throw DimensionMismatchError(std::string(what) + ": grid extents differ (" +
                                 std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                                 " vs " + std::to_string(b.height()) + "x" +
                                 std::to_string(b.width()) + ")");
  }
}

inline void require_mask(const ValidityMask& m, const ImageGrid& g, const char* what) {
  if (!m.matches(g)) {
    throw DimensionMismatchError(std::string(what) + ": mask extent does not match grid");
  }
}

}  // namespace detail

/// Throws NumericError if any element is NaN or infinite.
inline void require_finite(const ImageGrid& g, const std::string& what) {
  for (double v : g.values()) {
    if (!std::isfinite(v)) throw NumericError(what + ": non-finite value");
  }
}

/// Forward difference along x; the last column is dropped.
inline ImageGrid gradient_x(const ImageGrid& grid) {
  if (grid.width() < 2) throw DegenerateInputError("gradient_x: width must be at least 2");
  const int h = grid.height(), w = grid.width() - 1, c = grid.channels();
  ImageGrid out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) out(y, x, k) = grid(y, x + 1, k) - grid(y, x, k);
  return out;
}

/// Forward difference along y; the last row is dropped.
inline ImageGrid gradient_y(const ImageGrid& grid) {
  if (grid.height() < 2) throw DegenerateInputError("gradient_y: height must be at least 2");
  const int h = grid.height() - 1, w = grid.width(), c = grid.channels();
  ImageGrid out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) out(y, x, k) = grid(y + 1, x, k) - grid(y, x, k);
  return out;
}

/// Mean of |value| across channels; single-channel result.
inline ImageGrid channel_mean_abs(const ImageGrid& grid) {
  ImageGrid out(grid.height(), grid.width(), 1);
  const int c = grid.channels();
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      const double* p = grid.pixel(y, x);
      double s = 0.0;
      for (int k = 0; k < c; ++k) s += std::abs(p[k]);
      out(y, x) = s / c;
    }
  }
  return out;
}

/**
 * Central-difference estimate of d f / d grid for every element.
 *
 * `f` must be a pure function of the grid. Each element is perturbed by
 * +-epsilon in a private copy; the input grid is never modified.
 */
template <typename ScalarFn>
ImageGrid finite_difference_probe(ScalarFn&& f, const ImageGrid& grid, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("finite_difference_probe: epsilon must be positive");
  ImageGrid probe = grid;
  ImageGrid out(grid.height(), grid.width(), grid.channels());
  auto vals = probe.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    vals[i] = orig + epsilon;
    const double fp = f(std::as_const(probe));
    vals[i] = orig - epsilon;
    const double fm = f(std::as_const(probe));
    vals[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_difference_probe: non-finite function value at element " +
                         std::to_string(i));
    }
    out.values()[i] = (fp - fm) / (2.0 * epsilon);
  }
  return out;
}

/// Copy of one channel as a single-channel grid.
inline ImageGrid extract_channel(const ImageGrid& grid, int channel) {
  if (channel < 0 || channel >= grid.channels()) {
    throw DimensionMismatchError("extract_channel: channel out of range");
  }
  ImageGrid out(grid.height(), grid.width(), 1, 0.0, grid.value_range());
  for (int y = 0; y < grid.height(); ++y)
    for (int x = 0; x < grid.width(); ++x) out(y, x) = grid(y, x, channel);
  return out;
}

/// Stack grids of equal extent along the channel axis.
inline ImageGrid stack_channels(std::span<const ImageGrid> parts) {
  if (parts.empty()) throw DegenerateInputError("stack_channels: nothing to stack");
  int total = 0;
  for (const auto& p : parts) {
    detail::require_extent(parts.front(), p, "stack_channels");
    total += p.channels();
  }
  ImageGrid out(parts.front().height(), parts.front().width(), total);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      int k = 0;
      for (const auto& p : parts)
        for (int c = 0; c < p.channels(); ++c) out(y, x, k++) = p(y, x, c);
    }
  }
  return out;
}

}  // namespace stvo
