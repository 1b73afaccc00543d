#pragma once

// Shared synthetic fixtures: rendered scenes with known mirror pose, plus
// small deterministic perturbation helpers used across the optimizer tests.

#include <random>

#include "refdepth/geometry.hpp"
#include "refdepth/reprojection.hpp"
#include "refdepth/solver.hpp"
#include "refdepth/synth.hpp"

namespace testutil {

using namespace refdepth;

struct SceneFixture {
  RenderResult scene;
  ReflectionPair pair;
  RigidPose gt_pose;  // T_real->virtual
  CameraIntrinsics intrinsics;
};

inline SceneFixture make_fixture(const SceneSpec& spec) {
  SceneFixture f;
  f.scene = render(spec);
  f.intrinsics = scene_intrinsics(spec);
  f.pair = make_reflection_pair(f.scene.composite, f.scene.mask, f.intrinsics);
  f.gt_pose = compose(invert(f.scene.virtual_pose), f.scene.real_pose);
  return f;
}

inline SceneFixture default_fixture(double attenuation = 0.7, std::uint64_t seed = 1) {
  SceneSpec spec = default_scene_spec();
  spec.attenuation = attenuation;
  spec.seed = seed;
  return make_fixture(spec);
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v / v.norm();
}

inline RigidPose perturbed_pose(const RigidPose& pose, double angle_rad, double shift,
                                std::mt19937_64& rng) {
  Vec6 delta;
  delta.head<3>() = angle_rad * random_unit(rng);
  delta.tail<3>() = shift * random_unit(rng);
  return apply_pose_increment(pose, delta);
}

// Ground-truth depth as a log-inverse-depth field, optionally jittered in
// log-depth, clamped into the representable band.
inline ScalarField gt_param_field(const ScalarField& gt_depth, const DepthBounds& bounds,
                                  double log_jitter, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-log_jitter, log_jitter);
  ScalarField z = ScalarField::zeros(gt_depth.width, gt_depth.height, 1);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    double d = gt_depth.data[i] > 0.0 ? gt_depth.data[i] : 10.0;
    if (log_jitter > 0.0) d *= std::exp(u(rng));
    d = std::clamp(d, bounds.min_depth * 1.01, bounds.max_depth * 0.99);
    z.data[i] = param_from_depth(d, bounds);
  }
  return z;
}

}  // namespace testutil
