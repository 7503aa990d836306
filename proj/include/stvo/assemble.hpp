#pragma once

#include <string>
#include <vector>

#include "stvo/dataio.hpp"
#include "stvo/instance.hpp"

namespace stvo {

/**
 * One instance per consecutive frame pair: frame k+1 is the reference,
 * frame k the temporal live view and the right image of frame k+1 the
 * stereo live view. Pairs whose reference lacks a right image are skipped
 * and reported through `warnings`.
 */
inline std::vector<TrainingInstance> assemble_instances(const StereoSequence& seq,
                                                        std::vector<std::string>* warnings = nullptr) {
  if (seq.frames.size() < 2) throw DegenerateInputError("assemble_instances: need at least 2 frames");
  seq.calibration.validate();
  std::vector<TrainingInstance> out;
  for (std::size_t k = 0; k + 1 < seq.frames.size(); ++k) {
    const StereoFrame& live = seq.frames[k];
    const StereoFrame& ref = seq.frames[k + 1];
    if (!ref.right) {
      if (warnings) warnings->push_back("frame " + std::to_string(ref.index) + ": no right image, pair skipped");
      continue;
    }
    TrainingInstance inst;
    inst.reference = ref.left;
    inst.temporal_live = live.left;
    inst.stereo_live = *ref.right;
    inst.intrinsics = seq.calibration.intrinsics;
    inst.stereo_transform = seq.calibration.stereo_transform();
    inst.gt_depth = ref.depth;
    if (live.pose && ref.pose) inst.gt_temporal = compose(invert(*live.pose), *ref.pose);
    inst.reference_frame = ref.index;
    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace stvo
