#pragma once

#include <cstddef>

#include "refdepth/geometry.hpp"
#include "refdepth/imaging.hpp"

namespace refdepth {

struct CompletionResult {
  ScalarField depth;
  Plane plane;             // recovered mirror plane, in the real camera's frame
  std::size_t filled = 0;  // water pixels assigned a plane depth
  std::size_t holes = 0;   // water pixels whose ray misses the plane; left at 0
};

// Recovers the mirror plane as the perpendicular bisector of the two camera
// centers and overwrites every water pixel with the depth of its ray's
// intersection with that plane. Real-scene pixels pass through untouched.
CompletionResult complete_depth(const ScalarField& depth, const ScalarField& mask,
                                const RigidPose& real, const RigidPose& virt,
                                const CameraIntrinsics& intrinsics);

}  // namespace refdepth
