#pragma once

#include <optional>

#include "stvo/camera.hpp"
#include "stvo/grid.hpp"
#include "stvo/se3.hpp"

namespace stvo {

/**
 * One stereo-temporal training triple.
 *
 * `reference` is the left image at the later time, `temporal_live` the left
 * image one frame earlier and `stereo_live` the right image at the reference
 * time. `stereo_transform` maps left-camera points to right-camera points.
 * Ground truth is optional and only ever used for evaluation.
 */
struct TrainingInstance {
  ImageGrid reference;
  ImageGrid temporal_live;
  ImageGrid stereo_live;
  Intrinsics intrinsics;
  SE3Transform stereo_transform;

  std::optional<ImageGrid> gt_depth;
  /// Reference -> temporal-live camera transform.
  std::optional<SE3Transform> gt_temporal;
  int reference_frame = -1;

  void validate() const {
    if (reference.empty()) throw DimensionMismatchError("TrainingInstance: empty reference image");
    if (!reference.same_shape(temporal_live) || !reference.same_shape(stereo_live)) {
      throw DimensionMismatchError("TrainingInstance: the three images must share one shape");
    }
    intrinsics.validate();
    if (!stereo_transform.is_valid(1e-6)) {
      throw DomainError("TrainingInstance: stereo transform is not a rigid motion");
    }
    if (gt_depth && !gt_depth->same_extent(reference)) {
      throw DimensionMismatchError("TrainingInstance: ground-truth depth extent differs");
    }
  }
};

}  // namespace stvo
