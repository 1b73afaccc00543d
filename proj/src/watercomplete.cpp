#include "refdepth/watercomplete.hpp"

namespace refdepth {

CompletionResult complete_depth(const ScalarField& depth, const ScalarField& mask,
                                const RigidPose& real, const RigidPose& virt,
                                const CameraIntrinsics& intrinsics) {
  if (depth.width != mask.width || depth.height != mask.height) {
    throw NumericalError("complete_depth: depth and mask dimensions differ");
  }
  if (depth.channels != 1 || mask.channels != 1) {
    throw NumericalError("complete_depth: expected single-channel fields");
  }
  CompletionResult out;
  out.depth = depth;
  out.plane = plane_from_pose_pair(real, virt);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y) <= 0.5) continue;
      const auto d = ray_plane_depth(intrinsics, real, Vec2(x, y), out.plane);
      if (d) {
        out.depth.at(x, y) = *d;
        ++out.filled;
      } else {
        out.depth.at(x, y) = 0.0;
        ++out.holes;
      }
    }
  }
  return out;
}

}  // namespace refdepth
