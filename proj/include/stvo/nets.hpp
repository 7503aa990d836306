#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stvo/errors.hpp"
#include "stvo/grid.hpp"
#include "stvo/se3.hpp"

namespace stvo {

enum class LayerKind { kConv, kRelu, kUpsample, kSkipAdd, kFullyConnected, kGlobalAveragePool };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kUpsample: return "upsample";
    case LayerKind::kSkipAdd: return "skip_add";
    case LayerKind::kFullyConnected: return "fc";
    case LayerKind::kGlobalAveragePool: return "gap";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view s) {
  for (auto k : {LayerKind::kConv, LayerKind::kRelu, LayerKind::kUpsample, LayerKind::kSkipAdd,
                 LayerKind::kFullyConnected, LayerKind::kGlobalAveragePool}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown layer kind '" + std::string(s) + "'");
}

/**
 * One layer of a LayerStack. Layer i reads node `input` (and `source` for
 * skip_add) and writes node i + 1; node 0 is the network input.
 */
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int input = 0;
  int source = -1;
  int kernel = 0;
  int stride = 1;
  int in_channels = 0;
  int out_channels = 0;
  int factor = 1;
  std::size_t param_offset = 0;
  std::size_t weight_count = 0;
  std::size_t bias_count = 0;

  std::size_t parameter_count() const { return weight_count + bias_count; }
  bool operator==(const LayerSpec&) const = default;
};

/**
 * A small feed-forward network over ImageGrid activations with exact
 * reverse-mode gradients.
 *
 * Parameters live in one flat vector; conv weights are laid out
 * [out][ky][kx][in], fully-connected weights [out][in], biases follow the
 * weights of their layer. Convolutions use zero padding of kernel / 2.
 * Bilinear upsampling uses half-pixel centers with clamped borders.
 *
 * forward() caches every activation; backward() needs that cache. One
 * instance must not be used from several threads at once.
 */
class LayerStack {
 public:
  LayerStack() = default;

  int add_conv(int in_channels, int out_channels, int kernel, int stride, int input = -1) {
    LayerSpec l;
    l.kind = LayerKind::kConv;
    l.input = resolve(input);
    l.in_channels = in_channels;
    l.out_channels = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    l.weight_count = static_cast<std::size_t>(out_channels) * kernel * kernel * in_channels;
    l.bias_count = out_channels;
    return push(l);
  }
  int add_relu(int input = -1) {
    LayerSpec l;
    l.kind = LayerKind::kRelu;
    l.input = resolve(input);
    return push(l);
  }
  int add_upsample(int factor, int input = -1) {
    LayerSpec l;
    l.kind = LayerKind::kUpsample;
    l.input = resolve(input);
    l.factor = factor;
    return push(l);
  }
  int add_skip_add(int source, int input = -1) {
    LayerSpec l;
    l.kind = LayerKind::kSkipAdd;
    l.input = resolve(input);
    l.source = source;
    return push(l);
  }
  int add_fully_connected(int in_features, int out_features, int input = -1) {
    LayerSpec l;
    l.kind = LayerKind::kFullyConnected;
    l.input = resolve(input);
    l.in_channels = in_features;
    l.out_channels = out_features;
    l.weight_count = static_cast<std::size_t>(in_features) * out_features;
    l.bias_count = out_features;
    return push(l);
  }
  int add_global_average_pool(int input = -1) {
    LayerSpec l;
    l.kind = LayerKind::kGlobalAveragePool;
    l.input = resolve(input);
    return push(l);
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<const double> gradients() const noexcept { return grads_; }

  std::span<double> weights(std::size_t layer) {
    const auto& l = layers_.at(layer);
    return std::span<double>(params_).subspan(l.param_offset, l.weight_count);
  }
  std::span<double> biases(std::size_t layer) {
    const auto& l = layers_.at(layer);
    return std::span<double>(params_).subspan(l.param_offset + l.weight_count, l.bias_count);
  }

  /// Spatial input extents must be multiples of this.
  int input_divisor() const noexcept { return input_divisor_; }
  void set_input_divisor(int d) { input_divisor_ = d; }

  /// He-normal weights (std sqrt(2 / fan_in)), zero biases.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& l : layers_) {
      if (l.weight_count == 0) continue;
      const double fan_in = l.kind == LayerKind::kConv
                                ? static_cast<double>(l.kernel) * l.kernel * l.in_channels
                                : static_cast<double>(l.in_channels);
      const double sd = std::sqrt(2.0 / fan_in);
      for (std::size_t i = 0; i < l.weight_count; ++i) params_[l.param_offset + i] = normal(rng) * sd;
      for (std::size_t i = 0; i < l.bias_count; ++i) params_[l.param_offset + l.weight_count + i] = 0.0;
    }
    clear_cache();
  }

  bool has_cache() const noexcept { return !nodes_.empty(); }
  void clear_cache() { nodes_.clear(); }

  const ImageGrid& forward(const ImageGrid& input) {
    if (input_divisor_ > 1 &&
        (input.height() % input_divisor_ != 0 || input.width() % input_divisor_ != 0)) {
      throw DimensionMismatchError("LayerStack: input extent " + std::to_string(input.height()) +
                                   "x" + std::to_string(input.width()) +
                                   " is not a multiple of " + std::to_string(input_divisor_));
    }
    nodes_.clear();
    nodes_.reserve(layers_.size() + 1);
    nodes_.push_back(input);
    for (const auto& l : layers_) nodes_.push_back(forward_layer(l));
    return nodes_.back();
  }

  /// Output of the last forward pass.
  const ImageGrid& output() const {
    if (nodes_.empty()) throw StateError("LayerStack: no forward pass cached");
    return nodes_.back();
  }

  /**
   * Reverse pass for d loss / d output = `upstream`. Overwrites the
   * parameter gradients and returns d loss / d input.
   */
  ImageGrid backward(const ImageGrid& upstream) {
    if (nodes_.empty()) throw StateError("LayerStack: backward called before forward");
    if (!upstream.same_shape(nodes_.back())) {
      throw DimensionMismatchError("LayerStack: upstream gradient shape differs from output");
    }
    grads_.assign(params_.size(), 0.0);
    std::vector<ImageGrid> g(nodes_.size());
    g.back() = upstream;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (g[i + 1].empty()) continue;
      backward_layer(layers_[i], i, g);
    }
    if (g[0].empty()) return ImageGrid(nodes_[0].height(), nodes_[0].width(), nodes_[0].channels());
    return g[0];
  }

  bool same_architecture(const LayerStack& o) const {
    return layers_ == o.layers_ && input_divisor_ == o.input_divisor_;
  }

 private:
  int resolve(int input) const { return input < 0 ? static_cast<int>(layers_.size()) : input; }

  int push(LayerSpec l) {
    l.param_offset = params_.size();
    params_.resize(params_.size() + l.parameter_count(), 0.0);
    layers_.push_back(l);
    return static_cast<int>(layers_.size());
  }

  static int conv_out(int n, int k, int s) { return (n + 2 * (k / 2) - k) / s + 1; }

  ImageGrid forward_layer(const LayerSpec& l) const {
    const ImageGrid& in = nodes_.at(l.input);
    switch (l.kind) {
      case LayerKind::kConv: return conv_forward(l, in);
      case LayerKind::kRelu: {
        ImageGrid out = in;
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        return out;
      }
      case LayerKind::kUpsample: return upsample_forward(l.factor, in);
      case LayerKind::kSkipAdd: {
        const ImageGrid& other = nodes_.at(l.source);
        if (!other.same_shape(in)) throw DimensionMismatchError("skip_add: operand shapes differ");
        ImageGrid out = in;
        auto o = out.values();
        auto b = other.values();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += b[i];
        return out;
      }
      case LayerKind::kFullyConnected: {
        if (static_cast<int>(in.size()) != l.in_channels) {
          throw DimensionMismatchError("fc: expected " + std::to_string(l.in_channels) + " inputs");
        }
        ImageGrid out(1, 1, l.out_channels);
        const double* w = params_.data() + l.param_offset;
        const double* b = w + l.weight_count;
        auto x = in.values();
        for (int o = 0; o < l.out_channels; ++o) {
          double s = b[o];
          const double* row = w + static_cast<std::size_t>(o) * l.in_channels;
          for (int i = 0; i < l.in_channels; ++i) s += row[i] * x[i];
          out.values()[o] = s;
        }
        return out;
      }
      case LayerKind::kGlobalAveragePool: {
        ImageGrid out(1, 1, in.channels());
        const double n = static_cast<double>(in.pixel_count());
        for (std::size_t p = 0; p < in.pixel_count(); ++p)
          for (int c = 0; c < in.channels(); ++c) out.values()[c] += in.values()[p * in.channels() + c];
        for (double& v : out.values()) v /= n;
        return out;
      }
    }
    throw StateError("unknown layer kind");
  }

  ImageGrid conv_forward(const LayerSpec& l, const ImageGrid& in) const {
    if (in.channels() != l.in_channels) {
      throw DimensionMismatchError("conv: expected " + std::to_string(l.in_channels) +
                                   " input channels, got " + std::to_string(in.channels()));
    }
    const int k = l.kernel, s = l.stride, pad = k / 2, ci = l.in_channels, co = l.out_channels;
    const int ho = conv_out(in.height(), k, s), wo = conv_out(in.width(), k, s);
    ImageGrid out(ho, wo, co);
    const double* w = params_.data() + l.param_offset;
    const double* b = w + l.weight_count;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double* o = out.pixel(oy, ox);
        for (int c = 0; c < co; ++c) o[c] = b[c];
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * s + ky - pad;
          if (iy < 0 || iy >= in.height()) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * s + kx - pad;
            if (ix < 0 || ix >= in.width()) continue;
            const double* ip = in.pixel(iy, ix);
            for (int c = 0; c < co; ++c) {
              const double* wr = w + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * ci;
              double acc = 0.0;
              for (int i = 0; i < ci; ++i) acc += wr[i] * ip[i];
              o[c] += acc;
            }
          }
        }
      }
    return out;
  }

  struct UpTap {
    int i0, i1;
    double frac;
  };
  static UpTap up_tap(int o, int factor, int n) {
    double src = (o + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    if (src > n - 1) src = n - 1;
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, n - 1);
    return {i0, i1, src - i0};
  }

  static ImageGrid upsample_forward(int f, const ImageGrid& in) {
    const int h = in.height() * f, w = in.width() * f, c = in.channels();
    ImageGrid out(h, w, c);
    for (int y = 0; y < h; ++y) {
      const UpTap ty = up_tap(y, f, in.height());
      for (int x = 0; x < w; ++x) {
        const UpTap tx = up_tap(x, f, in.width());
        const double* a = in.pixel(ty.i0, tx.i0);
        const double* b = in.pixel(ty.i0, tx.i1);
        const double* cc = in.pixel(ty.i1, tx.i0);
        const double* d = in.pixel(ty.i1, tx.i1);
        double* o = out.pixel(y, x);
        for (int k = 0; k < c; ++k) {
          o[k] = (1 - ty.frac) * ((1 - tx.frac) * a[k] + tx.frac * b[k]) +
                 ty.frac * ((1 - tx.frac) * cc[k] + tx.frac * d[k]);
        }
      }
    }
    return out;
  }

  static void accumulate(ImageGrid& dst, const ImageGrid& add) {
    if (dst.empty()) {
      dst = add;
      return;
    }
    auto d = dst.values();
    auto a = add.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += a[i];
  }

  void backward_layer(const LayerSpec& l, std::size_t index, std::vector<ImageGrid>& g) {
    const ImageGrid& gout = g[index + 1];
    const ImageGrid& in = nodes_[l.input];
    switch (l.kind) {
      case LayerKind::kConv: {
        accumulate(g[l.input], conv_backward(l, in, gout));
        return;
      }
      case LayerKind::kRelu: {
        ImageGrid gin = gout;
        auto gi = gin.values();
        auto x = in.values();
        for (std::size_t i = 0; i < gi.size(); ++i)
          if (!(x[i] > 0.0)) gi[i] = 0.0;
        accumulate(g[l.input], gin);
        return;
      }
      case LayerKind::kUpsample: {
        ImageGrid gin(in.height(), in.width(), in.channels());
        const int f = l.factor, c = in.channels();
        for (int y = 0; y < gout.height(); ++y) {
          const UpTap ty = up_tap(y, f, in.height());
          for (int x = 0; x < gout.width(); ++x) {
            const UpTap tx = up_tap(x, f, in.width());
            const double* go = gout.pixel(y, x);
            double* a = gin.pixel(ty.i0, tx.i0);
            double* b = gin.pixel(ty.i0, tx.i1);
            double* cc = gin.pixel(ty.i1, tx.i0);
            double* d = gin.pixel(ty.i1, tx.i1);
            for (int k = 0; k < c; ++k) {
              a[k] += (1 - ty.frac) * (1 - tx.frac) * go[k];
              b[k] += (1 - ty.frac) * tx.frac * go[k];
              cc[k] += ty.frac * (1 - tx.frac) * go[k];
              d[k] += ty.frac * tx.frac * go[k];
            }
          }
        }
        accumulate(g[l.input], gin);
        return;
      }
      case LayerKind::kSkipAdd: {
        accumulate(g[l.input], gout);
        accumulate(g[l.source], gout);
        return;
      }
      case LayerKind::kFullyConnected: {
        ImageGrid gin(in.height(), in.width(), in.channels());
        const double* w = params_.data() + l.param_offset;
        double* gw = grads_.data() + l.param_offset;
        double* gb = gw + l.weight_count;
        auto x = in.values();
        auto go = gout.values();
        auto gi = gin.values();
        for (int o = 0; o < l.out_channels; ++o) {
          const std::size_t row = static_cast<std::size_t>(o) * l.in_channels;
          gb[o] += go[o];
          for (int i = 0; i < l.in_channels; ++i) {
            gw[row + i] += go[o] * x[i];
            gi[i] += go[o] * w[row + i];
          }
        }
        accumulate(g[l.input], gin);
        return;
      }
      case LayerKind::kGlobalAveragePool: {
        ImageGrid gin(in.height(), in.width(), in.channels());
        const double n = static_cast<double>(in.pixel_count());
        const int c = in.channels();
        for (std::size_t p = 0; p < in.pixel_count(); ++p)
          for (int k = 0; k < c; ++k) gin.values()[p * c + k] = gout.values()[k] / n;
        accumulate(g[l.input], gin);
        return;
      }
    }
  }

  ImageGrid conv_backward(const LayerSpec& l, const ImageGrid& in, const ImageGrid& gout) {
    const int k = l.kernel, s = l.stride, pad = k / 2, ci = l.in_channels, co = l.out_channels;
    ImageGrid gin(in.height(), in.width(), ci);
    const double* w = params_.data() + l.param_offset;
    double* gw = grads_.data() + l.param_offset;
    double* gb = gw + l.weight_count;
    for (int oy = 0; oy < gout.height(); ++oy)
      for (int ox = 0; ox < gout.width(); ++ox) {
        const double* go = gout.pixel(oy, ox);
        for (int c = 0; c < co; ++c) gb[c] += go[c];
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * s + ky - pad;
          if (iy < 0 || iy >= in.height()) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * s + kx - pad;
            if (ix < 0 || ix >= in.width()) continue;
            const double* ip = in.pixel(iy, ix);
            double* gp = gin.pixel(iy, ix);
            for (int c = 0; c < co; ++c) {
              const double g = go[c];
              if (g == 0.0) continue;
              const std::size_t off = ((static_cast<std::size_t>(c) * k + ky) * k + kx) * ci;
              const double* wr = w + off;
              double* gwr = gw + off;
              for (int i = 0; i < ci; ++i) {
                gwr[i] += g * ip[i];
                gp[i] += g * wr[i];
              }
            }
          }
        }
      }
    return gin;
  }

  std::vector<LayerSpec> layers_;
  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<ImageGrid> nodes_;
  int input_divisor_ = 1;
};

/**
 * Toy depth network: four 3x3 stride-2 conv + ReLU stages (3-16-32-64-64),
 * a 1x1 conv to one channel, x4 bilinear upsampling, a skip connection from
 * the stride-4 stage through its own 1x1 conv, a second x4 upsampling and a
 * final ReLU. Output is inverse depth at input resolution.
 *
 * The two 1x1 decoder convs start at one tenth of the He scale and the main
 * head's bias at `initial_inverse_depth`.
 */
inline LayerStack build_depth_net(std::uint64_t seed, double initial_inverse_depth = 0.25) {
  LayerStack net;
  net.add_conv(3, 16, 3, 2);
  net.add_relu();
  net.add_conv(16, 32, 3, 2);
  const int stride4 = net.add_relu();
  net.add_conv(32, 64, 3, 2);
  net.add_relu();
  net.add_conv(64, 64, 3, 2);
  net.add_relu();
  const int head = net.add_conv(64, 1, 1, 1);
  const int coarse = net.add_upsample(4);
  const int skip = net.add_conv(32, 1, 1, 1, stride4);
  net.add_skip_add(skip, coarse);
  net.add_upsample(4);
  net.add_relu();
  net.set_input_divisor(16);
  net.initialize(seed);
  for (int layer : {head, skip}) {
    for (double& w : net.weights(layer - 1)) w *= 0.1;
  }
  net.biases(head - 1)[0] = initial_inverse_depth;
  return net;
}

/**
 * Toy pose network over the channel concatenation [reference, live]: four
 * 3x3 stride-2 conv + ReLU stages (6-16-32-64-64), global average pooling
 * and fully-connected 64-32-6. The last layer starts at 1% of the He scale
 * so the initial prediction is close to the identity motion.
 */
inline LayerStack build_pose_net(std::uint64_t seed) {
  LayerStack net;
  net.add_conv(6, 16, 3, 2);
  net.add_relu();
  net.add_conv(16, 32, 3, 2);
  net.add_relu();
  net.add_conv(32, 64, 3, 2);
  net.add_relu();
  net.add_conv(64, 64, 3, 2);
  net.add_relu();
  net.add_global_average_pool();
  net.add_fully_connected(64, 32);
  net.add_relu();
  const int last = net.add_fully_connected(32, 6);
  net.set_input_divisor(16);
  net.initialize(seed);
  for (double& w : net.weights(last - 1)) w *= 0.01;
  return net;
}

/// Non-negative inverse depth for `image` (final layer is a ReLU).
inline ImageGrid depth_forward(LayerStack& net, const ImageGrid& image) {
  const ImageGrid& out = net.forward(image);
  if (out.channels() != 1 || !out.same_extent(image)) {
    throw DimensionMismatchError("depth_forward: network does not map to a 1-channel full-size grid");
  }
  ImageGrid inv = out;
  inv.set_value_range(ValueRange::kInverseMeters);
  return inv;
}

inline ImageGrid concat_views(const ImageGrid& reference, const ImageGrid& live) {
  if (!reference.same_extent(live)) throw DimensionMismatchError("pose_forward: views differ in extent");
  const ImageGrid parts[] = {reference, live};
  return stack_channels(parts);
}

/// Twist of the reference -> live motion; inputs concatenated reference first.
inline Twist pose_forward(LayerStack& net, const ImageGrid& reference, const ImageGrid& live) {
  const ImageGrid& out = net.forward(concat_views(reference, live));
  if (out.size() != 6) throw DimensionMismatchError("pose_forward: network must output 6 values");
  Vec6 v;
  for (int i = 0; i < 6; ++i) v[i] = out.values()[i];
  return Twist(v);
}

/// Backward pass of the pose net for d loss / d twist.
inline void pose_backward(LayerStack& net, const Vec6& grad_twist) {
  ImageGrid up(1, 1, 6);
  for (int i = 0; i < 6; ++i) up.values()[i] = grad_twist[i];
  net.backward(up);
}

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamSettings&) const = default;
};

/// Bias-corrected Adam moments for one flat parameter vector.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t n, AdamSettings settings = {})
      : settings_(settings), m_(n, 0.0), v_(n, 0.0) {}

  const AdamSettings& settings() const noexcept { return settings_; }
  void set_learning_rate(double lr) { settings_.learning_rate = lr; }
  long step_count() const noexcept { return steps_; }
  std::size_t size() const noexcept { return m_.size(); }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }

  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw DimensionMismatchError("adam_step: parameter/gradient/state sizes differ");
    }
    ++steps_;
    const auto& s = settings_;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = s.beta1 * m_[i] + (1.0 - s.beta1) * grads[i];
      v_[i] = s.beta2 * v_[i] + (1.0 - s.beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      params[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
    }
  }

  void save(std::ostream& os) const {
    os << "adam 1 " << m_.size() << ' ' << steps_ << '\n' << std::hexfloat;
    os << settings_.learning_rate << ' ' << settings_.beta1 << ' ' << settings_.beta2 << ' '
       << settings_.epsilon << '\n';
    for (std::size_t i = 0; i < m_.size(); ++i) os << m_[i] << ' ' << v_[i] << '\n';
    os << std::defaultfloat;
  }

  static AdamState load(std::istream& is);

 private:
  AdamSettings settings_;
  std::vector<double> m_;
  std::vector<double> v_;
  long steps_ = 0;
};

inline void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  state.step(params, grads);
}

namespace detail {

inline double read_hex(std::istream& is, const char* what) {
  std::string tok;
  if (!(is >> tok)) throw ParseError(std::string("checkpoint: truncated while reading ") + what);
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size() || !std::isfinite(v)) throw ParseError("");
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("checkpoint: bad number '") + tok + "' in " + what);
  }
}

inline void expect_token(std::istream& is, std::string_view want) {
  std::string tok;
  if (!(is >> tok) || tok != want) {
    throw ParseError("checkpoint: expected '" + std::string(want) + "', got '" + tok + "'");
  }
}

}  // namespace detail

inline AdamState AdamState::load(std::istream& is) {
  detail::expect_token(is, "adam");
  detail::expect_token(is, "1");
  std::size_t n = 0;
  long steps = 0;
  if (!(is >> n >> steps)) throw ParseError("checkpoint: bad adam header");
  AdamSettings s;
  s.learning_rate = detail::read_hex(is, "adam settings");
  s.beta1 = detail::read_hex(is, "adam settings");
  s.beta2 = detail::read_hex(is, "adam settings");
  s.epsilon = detail::read_hex(is, "adam settings");
  AdamState st(n, s);
  st.steps_ = steps;
  for (std::size_t i = 0; i < n; ++i) {
    st.m_[i] = detail::read_hex(is, "adam moments");
    st.v_[i] = detail::read_hex(is, "adam moments");
  }
  return st;
}

/**
 * Plain-text network dump, version 1:
 *
 *   stvo-net 1
 *   divisor <d>
 *   layers <n>
 *   <kind> <input> <source> <kernel> <stride> <in> <out> <factor>   (n lines)
 *   params <count>
 *   <hexfloat>                                                    (count lines)
 *
 * Hex floats make the round trip bit-exact.
 */
inline void save_layer_stack(std::ostream& os, const LayerStack& net) {
  os << "stvo-net 1\n";
  os << "divisor " << net.input_divisor() << '\n';
  os << "layers " << net.layers().size() << '\n';
  for (const auto& l : net.layers()) {
    os << to_string(l.kind) << ' ' << l.input << ' ' << l.source << ' ' << l.kernel << ' '
       << l.stride << ' ' << l.in_channels << ' ' << l.out_channels << ' ' << l.factor << '\n';
  }
  os << "params " << net.parameter_count() << '\n' << std::hexfloat;
  for (double p : net.parameters()) os << p << '\n';
  os << std::defaultfloat;
}

inline LayerStack load_layer_stack(std::istream& is) {
  detail::expect_token(is, "stvo-net");
  detail::expect_token(is, "1");
  detail::expect_token(is, "divisor");
  int divisor = 1;
  if (!(is >> divisor) || divisor < 1) throw ParseError("checkpoint: bad divisor");
  detail::expect_token(is, "layers");
  std::size_t n = 0;
  if (!(is >> n)) throw ParseError("checkpoint: bad layer count");
  LayerStack net;
  for (std::size_t i = 0; i < n; ++i) {
    std::string kind;
    int input, source, kernel, stride, in_ch, out_ch, factor;
    if (!(is >> kind >> input >> source >> kernel >> stride >> in_ch >> out_ch >> factor)) {
      throw ParseError("checkpoint: malformed layer record " + std::to_string(i));
    }
    if (input < 0 || input > static_cast<int>(i)) throw ParseError("checkpoint: bad layer input");
    switch (parse_layer_kind(kind)) {
      case LayerKind::kConv: net.add_conv(in_ch, out_ch, kernel, stride, input); break;
      case LayerKind::kRelu: net.add_relu(input); break;
      case LayerKind::kUpsample: net.add_upsample(factor, input); break;
      case LayerKind::kSkipAdd:
        if (source < 0 || source > static_cast<int>(i)) throw ParseError("checkpoint: bad skip source");
        net.add_skip_add(source, input);
        break;
      case LayerKind::kFullyConnected: net.add_fully_connected(in_ch, out_ch, input); break;
      case LayerKind::kGlobalAveragePool: net.add_global_average_pool(input); break;
    }
  }
  net.set_input_divisor(divisor);
  detail::expect_token(is, "params");
  std::size_t count = 0;
  if (!(is >> count) || count != net.parameter_count()) {
    throw ParseError("checkpoint: parameter count does not match the layer records");
  }
  for (double& p : net.parameters()) p = detail::read_hex(is, "parameters");
  return net;
}

}  // namespace stvo
