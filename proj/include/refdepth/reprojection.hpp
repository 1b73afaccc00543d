#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "refdepth/geometry.hpp"
#include "refdepth/imaging.hpp"
#include "refdepth/losses.hpp"

namespace refdepth {

// Per-target-pixel sample coordinates into the source view.
struct WarpField {
  int width = 0;
  int height = 0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::uint8_t> valid;  // in bounds and positive reprojected depth
};

// The photo split into supervision target and mirrored source. virtual_image
// is the vertically flipped photo: under the reflected-pose convention the
// reflection region, seen flipped, is what the virtual camera records. Its
// usable content sits where the flipped water mask is 1.
struct ReflectionPair {
  ScalarField real_image;   // luminance; target on water_mask == 0
  ScalarField virtual_image;
  ScalarField water_mask;   // 1 = water
  CameraIntrinsics intrinsics;
};

// Converts to luminance and builds the flipped source view. Requires the
// principal point vertically centered (cy = (height-1)/2), which is what
// makes the image flip equivalent to the mirrored camera orientation.
ReflectionPair make_reflection_pair(const ScalarField& photo, const ScalarField& water_mask,
                                    const CameraIntrinsics& intrinsics);

// One 2x box pyramid step: images averaged, mask dilated (any water source
// marks the coarse pixel) so supervision never leaks across the water line,
// intrinsics rescaled on the pixel-center grid. Requires even dimensions.
ReflectionPair downsample_pair(const ReflectionPair& pair);

// Forward warp coordinates: for each target pixel, backproject at its depth,
// move through `pose` (target-to-source), project into the source view.
WarpField build_warp(const ScalarField& depth, const RigidPose& pose,
                     const CameraIntrinsics& intrinsics);

// Bilinear resampling of `source` at warp coordinates; invalid pixels carry 0.
std::pair<ScalarField, std::vector<std::uint8_t>> synthesize(const ScalarField& source,
                                                             const WarpField& warp);

// Loss support: real-scene pixels whose warp samples strictly inside the
// source water region (every bilinear neighbor water). `source_region` is the
// vertically flipped water mask.
std::vector<std::uint8_t> warp_support(const ScalarField& water_mask,
                                       const ScalarField& source_region, const WarpField& warp);

struct ReprojectionLoss {
  double total = 0.0;        // photometric + smoothness_weight * smoothness
  double photometric = 0.0;  // mean pe over supported centers
  double smoothness = 0.0;
  std::size_t valid_count = 0;    // supported center pixels
  double valid_fraction = 0.0;    // valid_count / real-region pixel count
  ScalarField loss_map;           // per-center pe values
  std::vector<std::uint8_t> loss_valid;
};

// Photometric error between the real image and the virtual image warped into
// it, evaluated on real-scene pixels whose warp lands inside the source water
// region, plus edge-aware smoothness over the real region. Throws
// NumericalError when no pixel is supported (pose diverged).
ReprojectionLoss reprojection_loss(const ReflectionPair& pair, const ScalarField& depth,
                                   const RigidPose& pose, const LossConfig& cfg,
                                   StructuralMetric metric);

}  // namespace refdepth
