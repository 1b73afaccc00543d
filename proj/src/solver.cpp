#include "refdepth/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <thread>

namespace refdepth {

namespace {

template <typename Fn>
void for_rows(int height, int threads, Fn fn) {
  threads = std::max(1, threads);
  if (threads == 1 || height < 2 * threads) {
    fn(0, height);
    return;
  }
  std::vector<std::thread> pool;
  const int rows = (height + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int y0 = t * rows;
    const int y1 = std::min(height, y0 + rows);
    if (y0 >= y1) break;
    pool.emplace_back([&fn, y0, y1] { fn(y0, y1); });
  }
  for (auto& th : pool) th.join();
}

struct EvalInputs {
  const ReflectionPair& pair;
  const ScalarField& source_region;  // flipped water mask
  const ScalarField& z_field;
  const RigidPose& pose;
  const LossConfig& cfg;
  StructuralMetric metric;
  DepthBounds bounds;
  int threads;
};

// One forward (and optional backward) sweep of the full objective. The
// forward arithmetic mirrors build_warp + synthesize + pe_map +
// edge_aware_smoothness term for term so both evaluation routes agree.
LossGradients evaluate(const EvalInputs& in, bool want_grad) {
  const ScalarField& real = in.pair.real_image;
  const ScalarField& mask = in.pair.water_mask;
  const ScalarField& source = in.pair.virtual_image;
  const CameraIntrinsics& k = in.pair.intrinsics;
  const int w = real.width;
  const int h = real.height;
  const std::size_t n = real.pixel_count();
  if (in.z_field.width != w || in.z_field.height != h || in.z_field.channels != 1) {
    throw NumericalError("solver: parameter field dimensions differ from the pair");
  }

  const double q_min = 1.0 / in.bounds.max_depth;
  const double q_span = 1.0 / in.bounds.min_depth - q_min;

  ScalarField synth = ScalarField::zeros(w, h, 1);
  std::vector<std::uint8_t> valid(n, 0);
  std::vector<double> q(n, 0.0);
  std::vector<double> gx, gy, xp, yp, zp;
  if (want_grad) {
    gx.assign(n, 0.0);
    gy.assign(n, 0.0);
    xp.assign(n, 0.0);
    yp.assign(n, 0.0);
    zp.assign(n, 0.0);
  }

  const Mat3& r = in.pose.rotation;
  const Vec3& t = in.pose.translation;

  for_rows(h, in.threads, [&](int y0, int y1) {
    for (int py = y0; py < y1; ++py) {
      for (int px = 0; px < w; ++px) {
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        if (mask.data[i] > 0.5) continue;
        const double qi = q_min + std::exp(in.z_field.data[i]) * q_span;
        q[i] = qi;
        const double d = 1.0 / qi;
        const double rx = (px - k.cx) / k.fx;
        const double ry = (py - k.cy) / k.fy;
        const double X = rx * d, Y = ry * d, Z = d;
        const double qx = r(0, 0) * X + r(0, 1) * Y + r(0, 2) * Z + t.x();
        const double qy = r(1, 0) * X + r(1, 1) * Y + r(1, 2) * Z + t.y();
        const double qz = r(2, 0) * X + r(2, 1) * Y + r(2, 2) * Z + t.z();
        if (qz <= 0.0) continue;
        const double u = k.fx * qx / qz + k.cx;
        const double v = k.fy * qy / qz + k.cy;
        if (!(u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1)) continue;
        const SampleResult gate = bilinear_sample(in.source_region, u, v);
        if (!gate.valid || gate.value <= 0.999) continue;

        int x0 = static_cast<int>(std::floor(u));
        int y0c = static_cast<int>(std::floor(v));
        x0 = std::clamp(x0, 0, std::max(0, w - 2));
        y0c = std::clamp(y0c, 0, std::max(0, h - 2));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1c = std::min(y0c + 1, h - 1);
        const double tx = u - x0;
        const double ty = v - y0c;
        const double v00 = source.at(x0, y0c);
        const double v10 = source.at(x1, y0c);
        const double v01 = source.at(x0, y1c);
        const double v11 = source.at(x1, y1c);
        const double top = v00 + tx * (v10 - v00);
        const double bot = v01 + tx * (v11 - v01);
        synth.data[i] = top + ty * (bot - top);
        valid[i] = 1;
        if (want_grad) {
          gx[i] = (1.0 - ty) * (v10 - v00) + ty * (v11 - v01);
          gy[i] = bot - top;
          xp[i] = qx;
          yp[i] = qy;
          zp[i] = qz;
        }
      }
    }
  });

  // Windowed photometric term over supported centers; sequential so the
  // scatter into gY and the reduction order are independent of the thread
  // count.
  const WindowKernel& kernel = in.cfg.kernel;
  const int mg = kernel.margin();
  const double nk = static_cast<double>(kernel.size) * kernel.size;
  std::vector<double> gY;
  if (want_grad) gY.assign(n, 0.0);
  double photo_sum = 0.0;
  std::size_t count = 0;
  for (int cy = mg; cy < h - mg; ++cy) {
    for (int cx = mg; cx < w - mg; ++cx) {
      bool ok = true;
      for (int dy = -mg; dy <= mg && ok; ++dy) {
        const std::size_t row = static_cast<std::size_t>(cy + dy) * w + cx;
        for (int dx = -mg; dx <= mg; ++dx) {
          if (!valid[row + dx]) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) continue;
      const detail::WindowMoments m = detail::window_moments_at(real, synth, cx, cy, kernel);
      const double metric_value = detail::structural_from_moments(m, in.metric, in.cfg);
      double l1 = 0.0;
      for (int dy = -mg; dy <= mg; ++dy) {
        for (int dx = -mg; dx <= mg; ++dx) {
          l1 += smooth_l1(real.at(cx + dx, cy + dy), synth.at(cx + dx, cy + dy));
        }
      }
      photo_sum += detail::pe_structural(metric_value, in.cfg.alpha) +
                   (1.0 - in.cfg.alpha) * (l1 / nk);
      ++count;
      if (!want_grad) continue;
      const double dpe_dm = detail::pe_structural_deriv(metric_value, in.cfg.alpha);
      const double l1_scale = (1.0 - in.cfg.alpha) / nk;
      for (int dy = -mg; dy <= mg; ++dy) {
        for (int dx = -mg; dx <= mg; ++dx) {
          const std::size_t i = static_cast<std::size_t>(cy + dy) * w + (cx + dx);
          const double xi = real.data[i];
          const double yi = synth.data[i];
          double g = l1_scale * detail::smooth_l1_deriv_b(xi, yi);
          if (dpe_dm != 0.0) {
            g += dpe_dm *
                 detail::structural_deriv_y(m, kernel.weight(dx, dy), xi, yi, in.metric, in.cfg);
          }
          gY[i] += g;
        }
      }
    }
  }
  if (count == 0) {
    throw NumericalError("solver: no valid overlap between the views");
  }

  LossGradients out;
  out.photometric = photo_sum / static_cast<double>(count);
  out.valid_count = count;
  std::size_t real_pixels = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.data[i] <= 0.5) ++real_pixels;
  }
  out.valid_fraction =
      real_pixels ? static_cast<double>(count) / static_cast<double>(real_pixels) : 0.0;

  // Edge-aware smoothness on mean-normalized inverse depth over the real
  // region, with its exact gradient (the mean couples every pixel).
  double mu = 0.0;
  std::size_t n_region = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.data[i] > 0.5) continue;
    mu += q[i];
    ++n_region;
  }
  if (n_region == 0) throw NumericalError("solver: empty real region");
  mu /= static_cast<double>(n_region);

  std::vector<double> gStar;
  if (want_grad) gStar.assign(n, 0.0);
  double smooth_sum = 0.0;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const std::size_t i = static_cast<std::size_t>(py) * w + px;
      if (mask.data[i] > 0.5) continue;
      const double ds = q[i] / mu;
      if (px + 1 < w && mask.data[i + 1] <= 0.5) {
        const double dd = q[i + 1] / mu - ds;
        const double e = std::exp(-std::abs(real.data[i + 1] - real.data[i]));
        smooth_sum += std::abs(dd) * e;
        if (want_grad && dd != 0.0) {
          const double s = (dd > 0.0 ? 1.0 : -1.0) * e;
          gStar[i + 1] += s;
          gStar[i] -= s;
        }
      }
      if (py + 1 < h && mask.data[i + w] <= 0.5) {
        const double dd = q[i + w] / mu - ds;
        const double e = std::exp(-std::abs(real.data[i + w] - real.data[i]));
        smooth_sum += std::abs(dd) * e;
        if (want_grad && dd != 0.0) {
          const double s = (dd > 0.0 ? 1.0 : -1.0) * e;
          gStar[i + w] += s;
          gStar[i] -= s;
        }
      }
    }
  }
  out.smoothness = smooth_sum / static_cast<double>(n_region);
  out.total = out.photometric + in.cfg.smoothness_weight * out.smoothness;
  if (!want_grad) return out;

  // Backward chains.
  out.depth_grad = ScalarField::zeros(w, h, 1);
  const double inv_count = 1.0 / static_cast<double>(count);

  // Smoothness: d*(i) = q_i / mu with mu the region mean of q, so
  // dLs/dq_j = (G_j - mean_i(G_i d*_i)) / mu with G = dLs/dd*.
  {
    const double inv_region = 1.0 / static_cast<double>(n_region);
    double s_proj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask.data[i] > 0.5) continue;
      s_proj += gStar[i] * (q[i] / mu);
    }
    const double scale = in.cfg.smoothness_weight * inv_region / mu;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask.data[i] > 0.5) continue;
      const double dls_dq = scale * (gStar[i] - s_proj * inv_region);
      out.depth_grad.data[i] += dls_dq * (q[i] - q_min);
    }
  }

  // Photometric: through the bilinear sample, the projection, and the
  // transform into depth and pose.
  std::vector<Vec6> pose_partials(static_cast<std::size_t>(h), Vec6::Zero());
  for_rows(h, in.threads, [&](int y0, int y1) {
    for (int py = y0; py < y1; ++py) {
      Vec6 acc = Vec6::Zero();
      for (int px = 0; px < w; ++px) {
        const std::size_t i = static_cast<std::size_t>(py) * w + px;
        if (!valid[i] || gY[i] == 0.0) continue;
        const double g = gY[i] * inv_count;
        const double gu = g * gx[i];
        const double gv = g * gy[i];
        const double iz = 1.0 / zp[i];
        const double gpx = gu * k.fx * iz;
        const double gpy = gv * k.fy * iz;
        const double gpz = -(gu * k.fx * xp[i] + gv * k.fy * yp[i]) * iz * iz;
        const double vx = xp[i] - t.x();  // R * X
        const double vy = yp[i] - t.y();
        const double vz = zp[i] - t.z();
        acc[0] += vy * gpz - vz * gpy;
        acc[1] += vz * gpx - vx * gpz;
        acc[2] += vx * gpy - vy * gpx;
        acc[3] += gpx;
        acc[4] += gpy;
        acc[5] += gpz;
        const double gd = (gpx * vx + gpy * vy + gpz * vz) * q[i];
        out.depth_grad.data[i] += gd * (-(q[i] - q_min) / (q[i] * q[i]));
      }
      pose_partials[static_cast<std::size_t>(py)] = acc;
    }
  });
  for (const Vec6& p : pose_partials) out.pose_grad += p;
  return out;
}

double smoothness_region_guard(const ScalarField& mask) {
  std::size_t water = 0;
  for (double v : mask.data) {
    if (v > 0.5) ++water;
  }
  return static_cast<double>(water);
}

}  // namespace

double depth_from_param(double z, const DepthBounds& b) {
  const double q_min = 1.0 / b.max_depth;
  const double q_span = 1.0 / b.min_depth - q_min;
  return 1.0 / (q_min + std::exp(z) * q_span);
}

double param_from_depth(double depth, const DepthBounds& b) {
  const double q_min = 1.0 / b.max_depth;
  const double q_span = 1.0 / b.min_depth - q_min;
  const double e = (1.0 / depth - q_min) / q_span;
  if (!(e > 0.0)) {
    throw NumericalError("param_from_depth: depth outside the representable range");
  }
  return std::log(e);
}

LossGradients loss_gradients(const ReflectionPair& pair, const ScalarField& z_field,
                             const RigidPose& pose, const LossConfig& cfg,
                             StructuralMetric metric, const DepthBounds& bounds, int threads) {
  const ScalarField source_region = flip_vertical(pair.water_mask);
  return evaluate({pair, source_region, z_field, pose, cfg, metric, bounds,
                   std::max(1, threads)},
                  /*want_grad=*/true);
}

LossGradients solver_loss(const ReflectionPair& pair, const ScalarField& z_field,
                          const RigidPose& pose, const LossConfig& cfg, StructuralMetric metric,
                          const DepthBounds& bounds, int threads) {
  const ScalarField source_region = flip_vertical(pair.water_mask);
  return evaluate({pair, source_region, z_field, pose, cfg, metric, bounds,
                   std::max(1, threads)},
                  /*want_grad=*/false);
}

namespace {

struct Level {
  ReflectionPair pair;
  ScalarField source_region;
};

ScalarField upsample2x_field(const ScalarField& coarse, int fine_w, int fine_h) {
  ScalarField out = ScalarField::zeros(fine_w, fine_h, 1);
  for (int y = 0; y < fine_h; ++y) {
    for (int x = 0; x < fine_w; ++x) {
      const double cxf = std::clamp((x - 0.5) / 2.0, 0.0, coarse.width - 1.0);
      const double cyf = std::clamp((y - 0.5) / 2.0, 0.0, coarse.height - 1.0);
      out.at(x, y) = bilinear_sample(coarse, cxf, cyf).value;
    }
  }
  return out;
}

// Fixed descent-schedule constants, calibrated once on the synthetic
// benchmark; deliberately not part of SolverConfig.
constexpr double kGradSmoothFloor = 1e-2;  // smoothness weight floor, gradients only
constexpr double kPoseStepScale = 0.1;     // damping between pose_lr and the raw step
constexpr double kBlurSigma0 = 8.0;        // finest-level starting gradient blur
constexpr double kBlurDecay = 1.25;        // blur decays to zero at 80% of the budget
constexpr double kBlurSigmaMin = 0.05;     // below this the blur kernel is identity
constexpr double kChargeCap = 0.6;         // max per-window charge for shed support
constexpr double kChargeFactor = 4.0;      // adaptive charge = factor * current loss
constexpr int kCoarseDivisor = 21;         // coarse levels run max_iters / this
constexpr int kLadderUp = 2;               // step ladder starts at scale 2^2
constexpr int kLadderHalvings = 5;         // and halves down to 2^-5
constexpr int kSweepPasses = 400;          // terminal smoothness relaxation passes

// Mask-aware separable Gaussian low-pass of the depth gradient: water pixels
// contribute nothing and receive zero. Early iterations then move coherent
// structure only; per-pixel detail is resolved as sigma decays, which keeps
// the under-constrained field from committing to high-frequency error.
void blur_gradient_in_region(ScalarField& g, const ScalarField& water, double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
  for (int k = -r; k <= r; ++k) w[k + r] = std::exp(-0.5 * k * k / (sigma * sigma));
  const int W = g.width, H = g.height;
  ScalarField num = ScalarField::zeros(W, H, 1);
  ScalarField den = ScalarField::zeros(W, H, 1);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double sn = 0.0, sd = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx < 0 || xx >= W) continue;
        if (water.at(xx, y) > 0.5) continue;
        sn += w[k + r] * g.at(xx, y);
        sd += w[k + r];
      }
      num.at(x, y) = sn;
      den.at(x, y) = sd;
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (water.at(x, y) > 0.5) {
        g.at(x, y) = 0.0;
        continue;
      }
      double sn = 0.0, sd = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy < 0 || yy >= H) continue;
        sn += w[k + r] * num.at(x, yy);
        sd += w[k + r] * den.at(x, yy);
      }
      g.at(x, y) = sd > 1e-12 ? sn / sd : 0.0;
    }
  }
}

struct PixelWarp {
  std::vector<double> u, v;
  std::vector<std::uint8_t> ok;
};

// Projected coordinates of every real-region pixel under the current state.
// Loose validity (in front of the camera) serves the gauge fit; strict adds
// the in-frame and flipped-mask gates of the photometric term.
PixelWarp warp_pixels(const ReflectionPair& pair, const ScalarField& z, const RigidPose& pose,
                      const DepthBounds& b, double zshift, bool strict) {
  const int w = pair.real_image.width, h = pair.real_image.height;
  const CameraIntrinsics& k = pair.intrinsics;
  const double q_min = 1.0 / b.max_depth;
  const double q_span = 1.0 / b.min_depth - q_min;
  PixelWarp out;
  const std::size_t n = pair.real_image.pixel_count();
  out.u.assign(n, 0.0);
  out.v.assign(n, 0.0);
  out.ok.assign(n, 0);
  const Mat3& r = pose.rotation;
  const Vec3& t = pose.translation;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const std::size_t i = static_cast<std::size_t>(py) * w + px;
      if (pair.water_mask.data[i] > 0.5) continue;
      const double d = 1.0 / (q_min + std::exp(z.data[i] + zshift) * q_span);
      const double X = (px - k.cx) / k.fx * d;
      const double Y = (py - k.cy) / k.fy * d;
      const double qx = r(0, 0) * X + r(0, 1) * Y + r(0, 2) * d + t.x();
      const double qy = r(1, 0) * X + r(1, 1) * Y + r(1, 2) * d + t.y();
      const double qz = r(2, 0) * X + r(2, 1) * Y + r(2, 2) * d + t.z();
      if (qz <= 0.0) continue;
      const double uu = k.fx * qx / qz + k.cx;
      const double vv = k.fy * qy / qz + k.cy;
      out.u[i] = uu;
      out.v[i] = vv;
      if (strict) {
        const int x0 = static_cast<int>(std::floor(uu));
        const int y0 = static_cast<int>(std::floor(vv));
        if (x0 < 0 || y0 < 0 || x0 + 1 >= w || y0 + 1 >= h) continue;
        // All four bilinear taps must land in the water region of the
        // flipped source, matching the photometric support gate.
        const int yf0 = h - 1 - y0, yf1 = h - 2 - y0;
        if (pair.water_mask.at(x0, yf0) <= 0.5 || pair.water_mask.at(x0 + 1, yf0) <= 0.5 ||
            pair.water_mask.at(x0, yf1) <= 0.5 || pair.water_mask.at(x0 + 1, yf1) <= 0.5) {
          continue;
        }
      }
      out.ok[i] = 1;
    }
  }
  return out;
}

}  // namespace

SolveResult solve(const ReflectionPair& pair, const SolverConfig& cfg,
                  const LossConfig& loss_cfg, StructuralMetric metric) {
  if (cfg.pyramid_levels < 1 || cfg.pyramid_levels > 6) {
    throw NumericalError("solve: pyramid_levels must be in [1,6]");
  }
  if (cfg.max_iters < 0) throw NumericalError("solve: negative max_iters");
  const std::size_t n = pair.water_mask.pixel_count();
  const double water = smoothness_region_guard(pair.water_mask);
  if (water == 0.0) throw NumericalError("solve: empty water mask");
  if (water == static_cast<double>(n)) throw NumericalError("solve: mask covers the whole frame");

  const int threads = cfg.threads > 0
                          ? cfg.threads
                          : std::max(1u, std::thread::hardware_concurrency());

  SolveResult result;
  result.pose = cfg.init_pose;

  if (cfg.max_iters == 0) {
    ScalarField z = ScalarField::constant(pair.real_image.width, pair.real_image.height,
                                          param_from_depth(cfg.init_depth, cfg.bounds));
    const ScalarField source_region = flip_vertical(pair.water_mask);
    const LossGradients value = evaluate(
        {pair, source_region, z, result.pose, loss_cfg, metric, cfg.bounds, threads}, false);
    result.depth = ScalarField::constant(z.width, z.height, cfg.init_depth);
    result.report.final_loss = value.total;
    result.report.final_pose = result.pose;
    result.report.iterations = 0;
    result.report.loss_trajectory = {value.total};
    result.report.trajectory_level = {0};
    result.report.valid_fraction_trajectory = {value.valid_fraction};
    return result;
  }

  // Pyramid, finest first; stop early when a level gets too small or odd.
  std::vector<Level> levels;
  levels.push_back({pair, flip_vertical(pair.water_mask)});
  const int min_side = 2 * loss_cfg.kernel.size + 2;
  for (int l = 1; l < cfg.pyramid_levels; ++l) {
    const ReflectionPair& prev = levels.back().pair;
    if (prev.real_image.width % 2 != 0 || prev.real_image.height % 2 != 0) break;
    if (prev.real_image.width / 2 < min_side || prev.real_image.height / 2 < min_side) break;
    ReflectionPair next = downsample_pair(prev);
    ScalarField region = flip_vertical(next.water_mask);
    levels.push_back({std::move(next), std::move(region)});
  }

  ScalarField z = ScalarField::constant(levels.back().pair.real_image.width,
                                        levels.back().pair.real_image.height,
                                        param_from_depth(cfg.init_depth, cfg.bounds));

  // The pose stays on the 3-DoF family of reflection-consistent transforms
  // throughout. Freezing the plane offset at its initialized value pins the
  // depth/baseline gauge: scaling depth and translation together leaves
  // every projection unchanged, so no loss term could see scale drift.
  Plane anchor = mirror_plane_from_transform(cfg.init_pose);
  if (std::abs(anchor.offset) < 1e-12) {
    throw NumericalError("solve: init_pose has no mirror baseline (zero plane offset)");
  }
  const double plane_offset = anchor.offset;
  RigidPose pose = mirror_transform(anchor);
  const auto project_pose = [&](const RigidPose& p) {
    Plane pl = mirror_plane_from_transform(p);
    pl.offset = plane_offset;
    return mirror_transform(pl);
  };

  // Gradients see the smoothness term at no less than kGradSmoothFloor; the
  // guard and the reported trajectory always use the caller's weight.
  LossConfig grad_cfg = loss_cfg;
  grad_cfg.smoothness_weight = std::max(loss_cfg.smoothness_weight, kGradSmoothFloor);

  SolveReport report;

  for (int li = static_cast<int>(levels.size()) - 1; li >= 0; --li) {
    const Level& level = levels[li];
    if (z.width != level.pair.real_image.width || z.height != level.pair.real_image.height) {
      z = upsample2x_field(z, level.pair.real_image.width, level.pair.real_image.height);
    }
    // Coarse levels only need to locate the basin; their box-filtered
    // geometry has displaced optima, so long coarse runs drift away from the
    // fine-level solution instead of toward it.
    const int level_budget =
        li == 0 ? cfg.max_iters : std::max(1, cfg.max_iters / kCoarseDivisor);

    ScalarField adam_m = ScalarField::zeros(z.width, z.height, 1);
    ScalarField adam_v = ScalarField::zeros(z.width, z.height, 1);
    double mean_m = 0.0, mean_v = 0.0;  // scalar moments of the field-mean gradient
    Vec6 momentum = Vec6::Zero();
    double base_loss = std::numeric_limits<double>::quiet_NaN();
    double base_fraction = 0.0;
    std::vector<double> accepted_losses;
    int reject_streak = 0;

    const auto try_value = [&](const ScalarField& z_try, const RigidPose& pose_try) {
      std::pair<double, double> out{std::numeric_limits<double>::infinity(), 0.0};
      try {
        const LossGradients value = evaluate(
            {level.pair, level.source_region, z_try, pose_try, loss_cfg, metric, cfg.bounds,
             threads},
            false);
        out = {value.total, value.valid_fraction};
      } catch (const NumericalError&) {
        // Candidate lost all support; treat as an infinite-loss step.
      }
      return out;
    };

    for (int iter = 0; iter < level_budget; ++iter) {
      LossGradients g;
      try {
        g = evaluate(
            {level.pair, level.source_region, z, pose, grad_cfg, metric, cfg.bounds, threads},
            true);
      } catch (const NumericalError&) {
        // A very coarse level can start with no supported window at all; skip
        // it and let the next finer level begin from the same state.
        if (iter == 0) break;
        throw;
      }
      const double true_total = g.photometric + loss_cfg.smoothness_weight * g.smoothness;
      if (!std::isfinite(true_total)) throw NumericalError("solve: loss is not finite");
      if (g.valid_fraction < 0.01) {
        throw NumericalError("solve: diverged, valid support below 1%");
      }
      if (iter == 0) {
        base_loss = true_total;
        base_fraction = g.valid_fraction;
        report.loss_trajectory.push_back(base_loss);
        report.trajectory_level.push_back(li);
        report.valid_fraction_trajectory.push_back(base_fraction);
      }

      // Graduated coherence: the depth gradient is low-passed with a sigma
      // that decays over the level budget, so the field first moves in
      // coherent blocks and only later in per-pixel detail.
      const double t_frac = static_cast<double>(iter) / std::max(1, level_budget);
      const double sigma = (kBlurSigma0 / static_cast<double>(1 << li)) *
                           std::max(0.0, 1.0 - kBlurDecay * t_frac);
      if (sigma > kBlurSigmaMin) {
        blur_gradient_in_region(g.depth_grad, level.pair.water_mask, sigma);
      }

      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, iter + 1);
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, iter + 1);
      // Two-channel adaptive moments: a scalar channel follows the field
      // mean (the depth-scale mode, which per-pixel normalization would
      // crush), a per-pixel channel follows the residual.
      double gmean = 0.0;
      for (double v : g.depth_grad.data) gmean += v;
      gmean /= static_cast<double>(g.depth_grad.data.size());
      mean_m = cfg.adam_beta1 * mean_m + (1.0 - cfg.adam_beta1) * gmean;
      mean_v = cfg.adam_beta2 * mean_v + (1.0 - cfg.adam_beta2) * gmean * gmean;
      for (std::size_t i = 0; i < z.data.size(); ++i) {
        const double gi = g.depth_grad.data[i] - gmean;
        adam_m.data[i] = cfg.adam_beta1 * adam_m.data[i] + (1.0 - cfg.adam_beta1) * gi;
        adam_v.data[i] = cfg.adam_beta2 * adam_v.data[i] + (1.0 - cfg.adam_beta2) * gi * gi;
      }
      momentum = cfg.pose_momentum * momentum + g.pose_grad;

      const auto depth_candidate = [&](double scale, ScalarField& out) {
        const double shift =
            scale * cfg.depth_lr * (mean_m / bc1) / (std::sqrt(mean_v / bc2) + cfg.adam_eps);
        for (std::size_t i = 0; i < z.data.size(); ++i) {
          const double m_hat = adam_m.data[i] / bc1;
          const double v_hat = adam_v.data[i] / bc2;
          out.data[i] = z.data[i] - shift -
                        scale * cfg.depth_lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
        }
      };
      // Raw (unnormalized) momentum: the valley directions produce small but
      // persistent gradients that the heavy ball accumulates; normalizing
      // the step length would erase exactly that signal.
      const auto pose_candidate = [&](double scale) {
        return project_pose(
            apply_pose_increment(pose, (-scale * cfg.pose_lr * kPoseStepScale) * momentum));
      };

      // Least-squares global shift of the log-inverse-depth field whose
      // image motion best matches the pose step's. Tilt/baseline moves and a
      // global depth shift span a near-flat valley; completing one with the
      // other turns a blocked pose move into an acceptable joint one.
      const auto gauge_shift = [&](const RigidPose& pose_try) {
        const PixelWarp a = warp_pixels(level.pair, z, pose, cfg.bounds, 0.0, false);
        const PixelWarp b = warp_pixels(level.pair, z, pose_try, cfg.bounds, 0.0, false);
        const double hstep = 1e-4;
        const PixelWarp c = warp_pixels(level.pair, z, pose, cfg.bounds, hstep, false);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < a.u.size(); ++i) {
          if (!a.ok[i] || !b.ok[i] || !c.ok[i]) continue;
          const double du = b.u[i] - a.u[i], dv = b.v[i] - a.v[i];
          const double wu = (c.u[i] - a.u[i]) / hstep, wv = (c.v[i] - a.v[i]) / hstep;
          num += du * wu + dv * wv;
          den += wu * wu + wv * wv;
        }
        return den > 0.0 ? -num / den : 0.0;
      };

      // Monotone guard with a count-weighted conjunct: every unsupported
      // window center is charged like a window at `charge`, so a candidate
      // cannot profit by ejecting badly matched windows from the support
      // mean. The charge tracks the current loss (a shed window explains at
      // most about that much error) with a cap for the early iterations.
      const auto guarded = [&](double cand_loss, double cand_fraction) {
        if (!std::isfinite(cand_loss)) return false;
        if (cand_loss > base_loss) return false;
        const double charge = std::min(kChargeCap, kChargeFactor * base_loss);
        return cand_fraction * (cand_loss - charge) <= base_fraction * (base_loss - charge);
      };

      struct Best {
        double loss = std::numeric_limits<double>::infinity();
        double fraction = 0.0;
        bool has = false;
        ScalarField z;
        RigidPose pose;
      } best;
      ScalarField z_try = z;
      // One family per move set; each walks the step ladder from a 4x
      // overshoot down through five halvings and offers its first accepted
      // rung. Near a support boundary only a large step can pay the discrete
      // loss jump of pixels entering the valid set, so the ladder restarts
      // from the top every iteration. The best accepted candidate wins.
      const auto family = [&](bool move_depth, bool move_pose, bool complete_gauge) {
        for (int h = -kLadderUp; h <= kLadderHalvings; ++h) {
          const double scale = std::ldexp(1.0, -h);
          if (move_depth) depth_candidate(scale, z_try);
          const RigidPose pose_try = move_pose ? pose_candidate(scale) : pose;
          ScalarField z_cand = move_depth ? z_try : z;
          if (complete_gauge) {
            const double shift = gauge_shift(pose_try);
            for (double& zi : z_cand.data) zi += shift;
          }
          const auto [cand_loss, cand_fraction] = try_value(z_cand, pose_try);
          if (guarded(cand_loss, cand_fraction)) {
            if (cand_loss < best.loss) {
              best.loss = cand_loss;
              best.fraction = cand_fraction;
              best.z = std::move(z_cand);
              best.pose = pose_try;
              best.has = true;
            }
            return;
          }
        }
      };
      family(true, true, false);
      family(false, true, true);
      family(true, false, false);

      bool accepted = false;
      if (best.has) {
        z = std::move(best.z);
        pose = best.pose;
        base_loss = best.loss;
        base_fraction = best.fraction;
        accepted = true;
      } else {
        momentum *= 0.5;  // keep the direction, halve the overshoot
      }

      if (std::getenv("REFDEPTH_TRACE") != nullptr) {
        std::fprintf(stderr, "lev %d it %4d loss %.6f vf %.3f sig %.2f |mom| %.2e acc %d\n", li,
                     iter, base_loss, base_fraction, sigma, momentum.norm(), accepted ? 1 : 0);
      }
      report.loss_trajectory.push_back(base_loss);
      report.trajectory_level.push_back(li);
      report.valid_fraction_trajectory.push_back(base_fraction);
      ++report.iterations;

      // The stop rule arms once the gradient blur has decayed: flat
      // stretches during the graduated phase are schedule artifacts, not
      // convergence. Only accepted steps advance the comparison window, so
      // rejection streaks cannot fake a plateau; a full window of rejections
      // means no family has any acceptable move left.
      if (accepted) {
        accepted_losses.push_back(base_loss);
        reject_streak = 0;
      } else {
        ++reject_streak;
      }
      const bool armed = sigma <= kBlurSigmaMin;
      if (armed && reject_streak >= cfg.stop_window) break;
      if (armed && accepted_losses.size() > static_cast<std::size_t>(cfg.stop_window)) {
        const double past =
            accepted_losses[accepted_losses.size() - 1 - static_cast<std::size_t>(cfg.stop_window)];
        const double now = accepted_losses.back();
        if (past > 0.0 && (past - now) / past < cfg.stop_rel_tol) break;
      }
    }
  }

  if (report.loss_trajectory.empty()) {
    throw NumericalError("solve: no pyramid level had photometric support");
  }

  // Pixels outside every supported window never receive a photometric
  // constraint; their depth only enters the smoothness term. Edge-weighted
  // median relaxation toward constrained neighbors is coordinate descent on
  // that term. The result is kept only if the full objective does not
  // increase.
  {
    const Level& fine = levels.front();
    const int W = z.width, H = z.height;
    const int mg = loss_cfg.kernel.margin();
    const PixelWarp warp = warp_pixels(fine.pair, z, pose, cfg.bounds, 0.0, true);
    std::vector<std::uint8_t> member(static_cast<std::size_t>(W) * H, 0);
    for (int cy = mg; cy < H - mg; ++cy) {
      for (int cx = mg; cx < W - mg; ++cx) {
        bool all = true;
        for (int dy = -mg; dy <= mg && all; ++dy) {
          const std::size_t row = static_cast<std::size_t>(cy + dy) * W + cx;
          for (int dx = -mg; dx <= mg; ++dx) {
            if (!warp.ok[row + dx]) {
              all = false;
              break;
            }
          }
        }
        if (!all) continue;
        for (int dy = -mg; dy <= mg; ++dy) {
          for (int dx = -mg; dx <= mg; ++dx) {
            member[static_cast<std::size_t>(cy + dy) * W + cx + dx] = 1;
          }
        }
      }
    }
    std::vector<int> sweep;
    for (std::size_t i = 0; i < member.size(); ++i) {
      if (fine.pair.water_mask.data[i] <= 0.5 && !member[i]) sweep.push_back(static_cast<int>(i));
    }
    if (!sweep.empty()) {
      // A move that turns a previously unsupported pixel's warp valid could
      // complete a window and change the photometric mean; blocking those
      // moves keeps the support set, and with it the photometric term,
      // exactly fixed while the smoothness term relaxes.
      const auto strict_ok_at = [&](int idx, double zval) {
        const int px = idx % W, py = idx / W;
        const CameraIntrinsics& k = fine.pair.intrinsics;
        const double q_min = 1.0 / cfg.bounds.max_depth;
        const double q_span = 1.0 / cfg.bounds.min_depth - q_min;
        const double d = 1.0 / (q_min + std::exp(zval) * q_span);
        const double X = (px - k.cx) / k.fx * d;
        const double Y = (py - k.cy) / k.fy * d;
        const Vec3 q = pose.apply(Vec3(X, Y, d));
        if (q.z() <= 0.0) return false;
        const double uu = k.fx * q.x() / q.z() + k.cx;
        const double vv = k.fy * q.y() / q.z() + k.cy;
        const int x0 = static_cast<int>(std::floor(uu));
        const int y0 = static_cast<int>(std::floor(vv));
        if (x0 < 0 || y0 < 0 || x0 + 1 >= W || y0 + 1 >= H) return false;
        const int yf0 = H - 1 - y0, yf1 = H - 2 - y0;
        return fine.pair.water_mask.at(x0, yf0) > 0.5 &&
               fine.pair.water_mask.at(x0 + 1, yf0) > 0.5 &&
               fine.pair.water_mask.at(x0, yf1) > 0.5 &&
               fine.pair.water_mask.at(x0 + 1, yf1) > 0.5;
      };
      ScalarField z_swept = z;
      for (int pass = 0; pass < kSweepPasses; ++pass) {
        for (const int idx : sweep) {
          const int x = idx % W, y = idx / W;
          double zn[4], wn[4];
          int cnt = 0;
          const auto add = [&](int xx, int yy) {
            if (xx < 0 || xx >= W || yy < 0 || yy >= H) return;
            const std::size_t j = static_cast<std::size_t>(yy) * W + xx;
            if (fine.pair.water_mask.data[j] > 0.5) return;
            zn[cnt] = z_swept.data[j];
            wn[cnt] = std::exp(-std::abs(fine.pair.real_image.data[j] -
                                         fine.pair.real_image.data[static_cast<std::size_t>(idx)]));
            ++cnt;
          };
          add(x - 1, y);
          add(x + 1, y);
          add(x, y - 1);
          add(x, y + 1);
          if (cnt == 0) continue;
          int order[4] = {0, 1, 2, 3};
          std::sort(order, order + cnt, [&](int a, int b) { return zn[a] < zn[b]; });
          double total = 0.0;
          for (int k = 0; k < cnt; ++k) total += wn[k];
          double run = 0.0;
          double zmed = zn[order[cnt - 1]];
          for (int k = 0; k < cnt; ++k) {
            run += wn[order[k]];
            if (run >= 0.5 * total) {
              zmed = zn[order[k]];
              break;
            }
          }
          if (!warp.ok[static_cast<std::size_t>(idx)] && strict_ok_at(idx, zmed)) continue;
          z_swept.data[static_cast<std::size_t>(idx)] = zmed;
        }
      }
      double swept_loss = std::numeric_limits<double>::infinity();
      double swept_fraction = 0.0;
      try {
        const LossGradients value = evaluate(
            {fine.pair, fine.source_region, z_swept, pose, loss_cfg, metric, cfg.bounds, threads},
            false);
        swept_loss = value.total;
        swept_fraction = value.valid_fraction;
      } catch (const NumericalError&) {
      }
      if (std::getenv("REFDEPTH_TRACE") != nullptr) {
        std::fprintf(stderr, "sweep %zu px, loss %.6f -> %.6f (%s)\n", sweep.size(),
                     report.loss_trajectory.back(), swept_loss,
                     swept_loss <= report.loss_trajectory.back() ? "kept" : "reverted");
      }
      if (swept_loss <= report.loss_trajectory.back()) {
        z = std::move(z_swept);
        report.loss_trajectory.push_back(swept_loss);
        report.trajectory_level.push_back(0);
        report.valid_fraction_trajectory.push_back(swept_fraction);
      }
    }
  }

  result.depth = ScalarField::zeros(z.width, z.height, 1);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    result.depth.data[i] = depth_from_param(z.data[i], cfg.bounds);
  }
  // The optimization never constrains water pixels (their appearance is the
  // supervision source); fill them with the recovered mirror plane's ray
  // depths so the returned field covers the whole frame.
  {
    const Plane mirror = mirror_plane_from_transform(pose);
    const CameraIntrinsics& k = pair.intrinsics;
    for (int py = 0; py < result.depth.height; ++py) {
      for (int px = 0; px < result.depth.width; ++px) {
        const std::size_t i = static_cast<std::size_t>(py) * result.depth.width + px;
        if (pair.water_mask.data[i] <= 0.5) continue;
        const std::optional<double> d =
            ray_plane_depth(k, RigidPose{}, Vec2(px, py), mirror);
        result.depth.data[i] = d && std::isfinite(*d) ? *d : cfg.init_depth;
      }
    }
  }

  result.pose = pose;
  report.final_pose = pose;
  report.final_loss = report.loss_trajectory.back();
  result.report = report;
  return result;
}

}  // namespace refdepth
