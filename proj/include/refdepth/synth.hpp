#pragma once

#include <cstdint>
#include <vector>

#include "refdepth/geometry.hpp"
#include "refdepth/imaging.hpp"

namespace refdepth {

enum class TextureKind { kChecker, kNoise, kGradient };

// Vertical rectangle in the plane z = const, spanning x in
// [center_x - half_width, center_x + half_width] and y in [top_y, bottom_y]
// (y points down; negative y is above the water). Keeping bottom_y at the
// water line and top_y far above the frame makes every billboard a floor-to-
// sky "curtain", which guarantees the real and mirrored views agree on
// visibility: a point seen by the real camera is never occluded in the
// virtual view.
struct Billboard {
  double center_x = 0.0;
  double half_width = 1.0;
  double z = 10.0;
  double bottom_y = 0.0;
  double top_y = -40.0;
  TextureKind texture = TextureKind::kNoise;
  double texture_scale = 0.8;
};

struct SceneSpec {
  std::uint64_t seed = 1;
  int width = 64;
  int height = 64;
  double focal = 70.0;
  RigidPose camera;  // camera-to-world; must sit on the normal side of the plane
  Plane plane;       // reflective surface, default y = 0 with normal (0,-1,0)
  std::vector<Billboard> billboards;
  double attenuation = 0.7;       // multiplicative luminance factor on reflections
  double ripple_max_drift = 0.0;  // max reflected-content displacement, pixels
  int ripple_waves = 2;           // sinusoidal displacement components, <= 3
};

// Principal point centered on the pixel grid; required by the vertical-flip
// convention of the mirrored view.
CameraIntrinsics scene_intrinsics(const SceneSpec& spec);

// Camera half a meter above the water looking along +z at three noise-
// textured curtains (9 m, 14 m, and a wide 22 m backdrop). Every pixel has
// positive ground-truth depth.
SceneSpec default_scene_spec();

struct RenderResult {
  ScalarField composite;     // photo: scene above water, attenuated reflection below
  ScalarField real_image;    // scene content only; water region zeroed
  ScalarField virtual_view;  // raw render from the virtual camera (billboards only)
  ScalarField depth;         // camera-frame z; water pixels carry the surface depth
  ScalarField mask;          // 1 = water
  Plane plane;
  RigidPose real_pose;
  RigidPose virtual_pose;
};

// Deterministic in spec.seed. Throws NumericalError on an invalid spec
// (camera not above the plane, attenuation outside (0,1], negative drift).
RenderResult render(const SceneSpec& spec);

}  // namespace refdepth
