#include "refdepth/reprojection.hpp"

#include <cmath>

namespace refdepth {

namespace {

// All four bilinear neighbors must be water for a sample to count as
// reflection content.
constexpr double kSourceGate = 0.999;

void check_centered(const CameraIntrinsics& k, int height) {
  if (std::abs(k.cy - (height - 1) / 2.0) > 1e-6) {
    throw NumericalError(
        "reflection pair: principal point must be vertically centered for the flip convention");
  }
}

}  // namespace

ReflectionPair make_reflection_pair(const ScalarField& photo, const ScalarField& water_mask,
                                    const CameraIntrinsics& intrinsics) {
  if (photo.width != water_mask.width || photo.height != water_mask.height) {
    throw NumericalError("reflection pair: photo and mask dimensions differ");
  }
  if (water_mask.channels != 1) throw NumericalError("reflection pair: mask must be 1-channel");
  check_centered(intrinsics, photo.height);
  ReflectionPair pair;
  pair.real_image = to_grayscale(photo);
  pair.virtual_image = flip_vertical(pair.real_image);
  pair.water_mask = water_mask;
  for (double v : water_mask.data) {
    if (v != 0.0 && v != 1.0) throw NumericalError("reflection pair: mask must be binary");
  }
  pair.intrinsics = intrinsics;
  return pair;
}

ReflectionPair downsample_pair(const ReflectionPair& pair) {
  if (pair.real_image.width % 2 != 0 || pair.real_image.height % 2 != 0) {
    throw NumericalError("downsample_pair: dimensions must be even");
  }
  ReflectionPair out;
  out.real_image = downsample2x(pair.real_image);
  // Box-averaging and the vertical flip commute at even heights, so the
  // downsampled flipped photo is the flip of the downsampled photo.
  out.virtual_image = downsample2x(pair.virtual_image);
  out.water_mask = downsample2x_mask(pair.water_mask, /*require_all=*/false);
  out.intrinsics.fx = pair.intrinsics.fx / 2.0;
  out.intrinsics.fy = pair.intrinsics.fy / 2.0;
  out.intrinsics.cx = (pair.intrinsics.cx + 0.5) / 2.0 - 0.5;
  out.intrinsics.cy = (pair.intrinsics.cy + 0.5) / 2.0 - 0.5;
  check_centered(out.intrinsics, out.real_image.height);
  return out;
}

WarpField build_warp(const ScalarField& depth, const RigidPose& pose,
                     const CameraIntrinsics& k) {
  if (depth.channels != 1) throw NumericalError("build_warp: depth must be 1-channel");
  WarpField w;
  w.width = depth.width;
  w.height = depth.height;
  const std::size_t n = depth.pixel_count();
  w.x.assign(n, 0.0);
  w.y.assign(n, 0.0);
  w.valid.assign(n, 0);
  for (int py = 0; py < depth.height; ++py) {
    for (int px = 0; px < depth.width; ++px) {
      const std::size_t i = static_cast<std::size_t>(py) * depth.width + px;
      const double d = depth.at(px, py);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      const Vec3 p((px - k.cx) / k.fx * d, (py - k.cy) / k.fy * d, d);
      const Vec3 q = pose.apply(p);
      if (q.z() <= 0.0) continue;
      const double u = k.fx * q.x() / q.z() + k.cx;
      const double v = k.fy * q.y() / q.z() + k.cy;
      w.x[i] = u;
      w.y[i] = v;
      w.valid[i] = (u >= 0.0 && u <= depth.width - 1 && v >= 0.0 && v <= depth.height - 1);
    }
  }
  return w;
}

std::pair<ScalarField, std::vector<std::uint8_t>> synthesize(const ScalarField& source,
                                                             const WarpField& warp) {
  if (source.channels != 1) throw NumericalError("synthesize: source must be 1-channel");
  ScalarField out = ScalarField::zeros(warp.width, warp.height, 1);
  std::vector<std::uint8_t> valid(out.pixel_count(), 0);
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!warp.valid[i]) continue;
    const SampleResult s = bilinear_sample(source, warp.x[i], warp.y[i]);
    if (!s.valid) continue;
    out.data[i] = s.value;
    valid[i] = 1;
  }
  return {std::move(out), std::move(valid)};
}

std::vector<std::uint8_t> warp_support(const ScalarField& water_mask,
                                       const ScalarField& source_region, const WarpField& warp) {
  std::vector<std::uint8_t> support(water_mask.pixel_count(), 0);
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (water_mask.data[i] > 0.5 || !warp.valid[i]) continue;
    const SampleResult gate = bilinear_sample(source_region, warp.x[i], warp.y[i]);
    support[i] = gate.valid && gate.value > kSourceGate;
  }
  return support;
}

ReprojectionLoss reprojection_loss(const ReflectionPair& pair, const ScalarField& depth,
                                   const RigidPose& pose, const LossConfig& cfg,
                                   StructuralMetric metric) {
  if (!depth.same_shape(pair.real_image)) {
    throw NumericalError("reprojection_loss: depth dimensions differ from the pair");
  }
  const WarpField warp = build_warp(depth, pose, pair.intrinsics);
  auto [synth, synth_valid] = synthesize(pair.virtual_image, warp);
  (void)synth_valid;  // support implies sample validity

  const ScalarField source_region = flip_vertical(pair.water_mask);
  const std::vector<std::uint8_t> support = warp_support(pair.water_mask, source_region, warp);
  std::size_t real_pixels = 0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (pair.water_mask.data[i] <= 0.5) ++real_pixels;
  }

  const MetricMap map = pe_map(pair.real_image, synth, support, cfg, metric);
  if (map.count == 0) {
    throw NumericalError("reprojection_loss: no valid overlap between the views");
  }

  ScalarField real_region = ScalarField::zeros(pair.water_mask.width, pair.water_mask.height, 1);
  for (std::size_t i = 0; i < real_region.data.size(); ++i) {
    real_region.data[i] = pair.water_mask.data[i] > 0.5 ? 0.0 : 1.0;
  }

  ReprojectionLoss out;
  out.photometric = map.mean;
  out.smoothness = edge_aware_smoothness(depth, pair.real_image, real_region);
  out.total = out.photometric + cfg.smoothness_weight * out.smoothness;
  out.valid_count = map.count;
  out.valid_fraction =
      real_pixels ? static_cast<double>(map.count) / static_cast<double>(real_pixels) : 0.0;
  out.loss_map = map.values;
  out.loss_valid = map.center_valid;
  return out;
}

}  // namespace refdepth
