#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "stvo/grid.hpp"
#include "stvo/se3.hpp"

namespace stvo {

struct TrajectoryPose {
  int frame = 0;
  /// Camera-to-world.
  SE3Transform pose;
};

/// Absolute camera poses ordered by strictly increasing frame index.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajectoryPose> poses) : poses_(std::move(poses)) { validate(); }

  void push_back(int frame, const SE3Transform& pose) {
    if (!poses_.empty() && frame <= poses_.back().frame) {
      throw DomainError("Trajectory: frame indices must increase strictly");
    }
    poses_.push_back({frame, pose});
  }

  std::size_t size() const noexcept { return poses_.size(); }
  bool empty() const noexcept { return poses_.empty(); }
  const TrajectoryPose& operator[](std::size_t i) const { return poses_[i]; }
  TrajectoryPose& operator[](std::size_t i) { return poses_[i]; }
  auto begin() const { return poses_.begin(); }
  auto end() const { return poses_.end(); }
  const std::vector<TrajectoryPose>& poses() const noexcept { return poses_; }

  Vec3 position(std::size_t i) const { return poses_[i].pose.translation; }

 private:
  void validate() const {
    for (std::size_t i = 1; i < poses_.size(); ++i) {
      if (poses_[i].frame <= poses_[i - 1].frame) {
        throw DomainError("Trajectory: frame indices must increase strictly");
      }
    }
  }
  std::vector<TrajectoryPose> poses_;
};

/// Poses whose frame index lies in [first, last]; last < 0 means no upper bound.
inline Trajectory filter_frames(const Trajectory& t, int first, int last = -1) {
  Trajectory out;
  for (const auto& p : t) {
    if (p.frame >= first && (last < 0 || p.frame <= last)) out.push_back(p.frame, p.pose);
  }
  return out;
}

/**
 * Chains reference -> live transforms where the live frame is t and the
 * reference frame t + 1. Such a transform is the pose of camera t + 1
 * expressed in camera t, so C(t + 1) = C(t) * T(t). The first pose is
 * `start` (identity by default) at frame `first_frame`.
 */
inline Trajectory integrate_trajectory(const std::vector<SE3Transform>& relatives,
                                       const SE3Transform& start = SE3Transform::identity(),
                                       int first_frame = 0) {
  if (relatives.empty()) throw DegenerateInputError("integrate_trajectory: no relative poses");
  Trajectory out;
  SE3Transform c = start;
  out.push_back(first_frame, c);
  for (std::size_t i = 0; i < relatives.size(); ++i) {
    if (!relatives[i].is_valid(1e-6)) {
      throw DomainError("integrate_trajectory: relative pose " + std::to_string(i) + " is not rigid");
    }
    c = compose(c, relatives[i]);
    out.push_back(first_frame + static_cast<int>(i) + 1, c);
  }
  return out;
}

/// Inverse of integrate_trajectory: T(k) = inv(C(k)) * C(k + 1).
inline std::vector<SE3Transform> relative_poses(const Trajectory& t) {
  std::vector<SE3Transform> out;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    out.push_back(compose(invert(t[i].pose), t[i + 1].pose));
  }
  return out;
}

struct ScaleAlignment {
  double scale = 1.0;
  Trajectory aligned;
};

/// Least-squares scale s minimizing sum |s p_pred - p_gt|^2, applied to translations.
inline ScaleAlignment align_scale(const Trajectory& pred, const Trajectory& gt) {
  if (pred.size() != gt.size() || pred.size() < 2) {
    throw DimensionMismatchError("align_scale: trajectories must have equal length >= 2");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num += pred.position(i).dot(gt.position(i));
    den += pred.position(i).squaredNorm();
  }
  if (!(den > 0.0)) throw DegenerateInputError("align_scale: predicted trajectory has no motion");
  ScaleAlignment out{num / den, {}};
  for (const auto& p : pred) {
    out.aligned.push_back(p.frame, {p.pose.rotation, out.scale * p.pose.translation});
  }
  return out;
}

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double cap = 0.0;
  std::size_t valid_count = 0;
};

/// Lower clamp applied to predicted depth before metric evaluation (meters).
inline constexpr double kMinEvalDepth = 1e-3;

/**
 * Standard single-view depth metrics over pixels with 0 < gt <= cap (and
 * inside `mask` when given). Predictions are clamped to [1e-3, cap].
 */
inline DepthMetrics depth_metrics(const ImageGrid& pred, const ImageGrid& gt, double cap,
                                  const ValidityMask* mask = nullptr) {
  if (!pred.same_shape(gt) || pred.channels() != 1) {
    throw DimensionMismatchError("depth_metrics: prediction and ground truth must be matching 1-channel grids");
  }
  if (mask) detail::require_mask(*mask, gt, "depth_metrics");
  if (!(cap > 0.0)) throw DomainError("depth_metrics: cap must be positive");
  DepthMetrics m;
  m.cap = cap;
  double sq = 0.0, sq_log = 0.0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  auto p = pred.values();
  auto g = gt.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (mask && !mask->at(i)) continue;
    if (!(g[i] > 0.0) || g[i] > cap) continue;
    const double pi = std::clamp(p[i], kMinEvalDepth, cap);
    const double diff = pi - g[i];
    m.abs_rel += std::abs(diff) / g[i];
    m.sq_rel += diff * diff / g[i];
    sq += diff * diff;
    const double ld = std::log(pi) - std::log(g[i]);
    sq_log += ld * ld;
    const double ratio = std::max(pi / g[i], g[i] / pi);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
    ++m.valid_count;
  }
  if (m.valid_count == 0) throw EmptyOverlapError("depth_metrics: no valid ground-truth pixels");
  const double n = static_cast<double>(m.valid_count);
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(sq / n);
  m.rmse_log = std::sqrt(sq_log / n);
  m.delta1 = d1 / n;
  m.delta2 = d2 / n;
  m.delta3 = d3 / n;
  return m;
}

/// Sub-sequence lengths (meters) of the drift protocol.
inline constexpr std::array<double, 8> kDriftLengths = {100, 200, 300, 400, 500, 600, 700, 800};

/// Default stride between sub-sequence start frames.
inline constexpr int kDriftStartStride = 10;

struct DriftBin {
  double length = 0.0;
  /// Mean translational error, percent.
  double t_err = 0.0;
  /// Mean rotational error, degrees per 100 m.
  double r_err = 0.0;
  std::size_t count = 0;
  /// False when no sub-sequence of this length exists.
  bool present = false;
};

struct OdomMetrics {
  double t_err = 0.0;
  double r_err = 0.0;
  std::size_t segments = 0;
  /// True when no sub-sequence fit into the trajectory; t_err/r_err are then 0.
  bool empty = true;
  std::vector<DriftBin> per_length;
};

namespace detail {

inline std::vector<double> path_distances(const Trajectory& t) {
  std::vector<double> d(t.size(), 0.0);
  for (std::size_t i = 1; i < t.size(); ++i) d[i] = d[i - 1] + (t.position(i) - t.position(i - 1)).norm();
  return d;
}

}  // namespace detail

/**
 * Relative-pose drift over sub-sequences of 100..800 m of ground-truth path
 * length, starting every `stride` frames. For each (start, L) the end frame
 * is the first one more than L meters further along the path, and
 * E = inv(rel_gt) * rel_pred. Translation error is |trans(E)| / L, rotation
 * error is angle(E) / L.
 */
inline OdomMetrics drift_vs_length(const Trajectory& pred, const Trajectory& gt,
                                   int stride = kDriftStartStride) {
  if (pred.size() != gt.size()) {
    throw DimensionMismatchError("odometry_drift: trajectories differ in length");
  }
  if (stride < 1) throw DomainError("odometry_drift: stride must be positive");
  const auto dist = detail::path_distances(gt);
  OdomMetrics m;
  double t_sum = 0.0, r_sum = 0.0;
  for (double len : kDriftLengths) {
    DriftBin bin;
    bin.length = len;
    double bt = 0.0, br = 0.0;
    for (std::size_t first = 0; first < gt.size(); first += stride) {
      std::size_t last = first;
      while (last < gt.size() && dist[last] <= dist[first] + len) ++last;
      if (last >= gt.size()) continue;
      const SE3Transform rel_gt = compose(invert(gt[first].pose), gt[last].pose);
      const SE3Transform rel_pred = compose(invert(pred[first].pose), pred[last].pose);
      const SE3Transform err = compose(invert(rel_gt), rel_pred);
      const double te = err.translation.norm() / len;
      const double re = rotation_angle(err.rotation) / len;
      bt += te;
      br += re;
      ++bin.count;
    }
    if (bin.count > 0) {
      bin.present = true;
      bin.t_err = 100.0 * bt / bin.count;
      bin.r_err = 100.0 * (180.0 / std::numbers::pi) * br / bin.count;
      t_sum += bt;
      r_sum += br;
      m.segments += bin.count;
    }
    m.per_length.push_back(bin);
  }
  if (m.segments > 0) {
    m.empty = false;
    m.t_err = 100.0 * t_sum / m.segments;
    m.r_err = 100.0 * (180.0 / std::numbers::pi) * r_sum / m.segments;
  }
  return m;
}

/// Averages over every valid (start, length) pair; see drift_vs_length.
inline OdomMetrics odometry_drift(const Trajectory& pred, const Trajectory& gt,
                                  int stride = kDriftStartStride) {
  return drift_vs_length(pred, gt, stride);
}

/// `key=value` lines, one per metric.
inline std::string format_key_values(const DepthMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "cap=%.6g\nvalid_count=%zu\nabs_rel=%.9g\nsq_rel=%.9g\nrmse=%.9g\nrmse_log=%.9g\n"
                "delta1=%.9g\ndelta2=%.9g\ndelta3=%.9g\n",
                m.cap, m.valid_count, m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2,
                m.delta3);
  return buf;
}

inline std::string format_key_values(const OdomMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "t_err_percent=%.9g\nr_err_deg_per_100m=%.9g\nsegments=%zu\nempty=%d\n",
                m.t_err, m.r_err, m.segments, m.empty ? 1 : 0);
  return buf;
}

/// Aligned-column table of depth metrics, one row per result.
inline std::string format_table(const std::vector<DepthMetrics>& rows) {
  std::string out = "   cap   abs_rel    sq_rel      rmse  rmse_log    d<1.25  d<1.25^2  d<1.25^3\n";
  char buf[160];
  for (const auto& m : rows) {
    std::snprintf(buf, sizeof buf, "%6.1f  %8.4f  %8.4f  %8.4f  %8.4f  %8.4f  %8.4f  %8.4f\n", m.cap,
                  m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3);
    out += buf;
  }
  return out;
}

inline std::string format_table(const OdomMetrics& m) {
  std::string out = "length_m   t_err_%   r_err_deg/100m   count\n";
  char buf[128];
  for (const auto& b : m.per_length) {
    if (b.present) {
      std::snprintf(buf, sizeof buf, "%8.0f  %8.4f  %15.4f  %6zu\n", b.length, b.t_err, b.r_err, b.count);
    } else {
      std::snprintf(buf, sizeof buf, "%8.0f  %8s  %15s  %6zu\n", b.length, "absent", "absent", b.count);
    }
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "average   %8.4f  %15.4f  %6zu\n", m.t_err, m.r_err, m.segments);
  out += buf;
  return out;
}

}  // namespace stvo
