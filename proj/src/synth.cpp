#include "refdepth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace refdepth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash01(std::uint64_t seed, std::uint64_t tag, std::int64_t a, std::int64_t b) {
  std::uint64_t s = splitmix64(seed ^ (tag * 0x9e3779b97f4a7c15ULL));
  s = splitmix64(s ^ static_cast<std::uint64_t>(a));
  s = splitmix64(s ^ static_cast<std::uint64_t>(b));
  return static_cast<double>(s >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, std::uint64_t tag, double u, double v) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const auto iu = static_cast<std::int64_t>(fu);
  const auto iv = static_cast<std::int64_t>(fv);
  const double tu = smoothstep(u - fu);
  const double tv = smoothstep(v - fv);
  const double n00 = hash01(seed, tag, iu, iv);
  const double n10 = hash01(seed, tag, iu + 1, iv);
  const double n01 = hash01(seed, tag, iu, iv + 1);
  const double n11 = hash01(seed, tag, iu + 1, iv + 1);
  const double top = n00 + tu * (n10 - n00);
  const double bot = n01 + tu * (n11 - n01);
  return top + tv * (bot - top);
}

double texture_value(const SceneSpec& spec, std::size_t billboard_index, double u, double v) {
  const Billboard& b = spec.billboards[billboard_index];
  const std::uint64_t id = billboard_index + 1;
  const double s = b.texture_scale;
  switch (b.texture) {
    case TextureKind::kChecker: {
      const auto iu = static_cast<std::int64_t>(std::floor(u / s));
      const auto iv = static_cast<std::int64_t>(std::floor(v / s));
      const bool odd = ((iu + iv) & 1) != 0;
      const double jitter = 0.1 * (hash01(spec.seed, id * 5, iu, iv) - 0.5);
      return std::clamp((odd ? 0.75 : 0.3) + jitter, 0.05, 0.95);
    }
    case TextureKind::kNoise: {
      const double o1 = value_noise(spec.seed, id * 7, u / s, v / s);
      const double o2 = value_noise(spec.seed, id * 7 + 1, 2.0 * u / s, 2.0 * v / s);
      return 0.12 + 0.78 * (0.75 * o1 + 0.25 * o2);
    }
    case TextureKind::kGradient: {
      const double a = std::sin(2.0 * M_PI * u / (5.0 * s));
      const double c = std::cos(2.0 * M_PI * v / (7.0 * s));
      return 0.55 + 0.3 * a * c;
    }
  }
  return 0.0;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int billboard = -1;
};

// Ray origin + t*dir in world coordinates; dir has camera-frame z = 1, so t
// is the camera-frame depth of the hit.
Hit nearest_billboard(const SceneSpec& spec, const Vec3& origin, const Vec3& dir) {
  Hit hit;
  for (std::size_t i = 0; i < spec.billboards.size(); ++i) {
    const Billboard& b = spec.billboards[i];
    if (std::abs(dir.z()) < 1e-12) continue;
    const double t = (b.z - origin.z()) / dir.z();
    if (t <= 1e-9 || t >= hit.t) continue;
    const double x = origin.x() + t * dir.x();
    if (x < b.center_x - b.half_width || x > b.center_x + b.half_width) continue;
    const double y = origin.y() + t * dir.y();
    if (y < b.top_y || y > b.bottom_y) continue;
    hit.t = t;
    hit.billboard = static_cast<int>(i);
  }
  return hit;
}

struct RippleWave {
  double au, bu, pu;  // du = amp * sin(au*x + bu*y + pu)
  double av, bv, pv;
};

std::vector<RippleWave> ripple_waves(const SceneSpec& spec) {
  std::vector<RippleWave> waves;
  const double length = std::max(spec.width, spec.height);
  const int n = std::clamp(spec.ripple_waves, 1, 3);
  for (int k = 0; k < n; ++k) {
    RippleWave w;
    const auto f = [&](std::uint64_t tag) {
      return 2.0 * M_PI * (0.5 + 2.0 * hash01(spec.seed, 100 + tag, k, 0)) / length;
    };
    w.au = f(1);
    w.bu = f(2);
    w.av = f(3);
    w.bv = f(4);
    w.pu = 2.0 * M_PI * hash01(spec.seed, 105, k, 0);
    w.pv = 2.0 * M_PI * hash01(spec.seed, 106, k, 0);
    waves.push_back(w);
  }
  return waves;
}

}  // namespace

CameraIntrinsics scene_intrinsics(const SceneSpec& spec) {
  CameraIntrinsics k;
  k.fx = spec.focal;
  k.fy = spec.focal;
  k.cx = (spec.width - 1) / 2.0;
  k.cy = (spec.height - 1) / 2.0;
  return k;
}

SceneSpec default_scene_spec() {
  SceneSpec spec;
  spec.seed = 1;
  spec.camera.translation = Vec3(0.0, -0.5, 0.0);
  spec.plane = Plane{Vec3(0.0, -1.0, 0.0), 0.0};
  spec.billboards = {
      Billboard{-1.8, 1.2, 9.0, 0.0, -40.0, TextureKind::kNoise, 2.4},
      Billboard{1.6, 1.4, 14.0, 0.0, -40.0, TextureKind::kNoise, 3.6},
      Billboard{0.0, 10.5, 22.0, 0.0, -40.0, TextureKind::kNoise, 6.0},
  };
  spec.attenuation = 0.7;
  spec.ripple_max_drift = 0.0;
  return spec;
}

RenderResult render(const SceneSpec& spec) {
  if (spec.width < 4 || spec.height < 4) throw NumericalError("render: frame too small");
  if (spec.focal <= 0.0) throw NumericalError("render: non-positive focal length");
  if (!(spec.attenuation > 0.0 && spec.attenuation <= 1.0)) {
    throw NumericalError("render: attenuation must be in (0,1]");
  }
  if (spec.ripple_max_drift < 0.0) throw NumericalError("render: negative ripple drift");
  if (signed_distance(spec.plane, spec.camera.translation) <= 0.0) {
    throw NumericalError("render: camera must sit on the normal side of the plane");
  }

  const CameraIntrinsics k = scene_intrinsics(spec);
  RenderResult out;
  out.plane = spec.plane;
  out.real_pose = spec.camera;
  out.virtual_pose = reflect_pose_about_plane(spec.camera, spec.plane);

  out.virtual_view = ScalarField::zeros(spec.width, spec.height, 1);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 dir = out.virtual_pose.rotation * dir_cam;
      const Hit hit = nearest_billboard(spec, out.virtual_pose.translation, dir);
      if (hit.billboard < 0) continue;
      const Vec3 p = out.virtual_pose.translation + hit.t * dir;
      out.virtual_view.at(x, y) = texture_value(spec, hit.billboard, p.x(), p.y());
    }
  }

  out.composite = ScalarField::zeros(spec.width, spec.height, 1);
  out.real_image = ScalarField::zeros(spec.width, spec.height, 1);
  out.depth = ScalarField::zeros(spec.width, spec.height, 1);
  out.mask = ScalarField::zeros(spec.width, spec.height, 1);

  const bool rippled = spec.ripple_max_drift > 0.0;
  std::vector<RippleWave> waves;
  double amp = 0.0;
  if (rippled) {
    waves = ripple_waves(spec);
    amp = spec.ripple_max_drift / (static_cast<double>(waves.size()) * std::sqrt(2.0));
  }

  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 dir = spec.camera.rotation * dir_cam;
      const Hit hit = nearest_billboard(spec, spec.camera.translation, dir);
      const auto water = ray_plane_depth(k, spec.camera, Vec2(x, y), spec.plane);

      if (hit.billboard >= 0 && (!water || hit.t < *water)) {
        const Vec3 p = spec.camera.translation + hit.t * dir;
        const double v = texture_value(spec, hit.billboard, p.x(), p.y());
        out.composite.at(x, y) = v;
        out.real_image.at(x, y) = v;
        out.depth.at(x, y) = hit.t;
        continue;
      }
      if (water) {
        // The mirror geometry maps the water pixel (x, y) to the vertically
        // flipped pixel of the virtual camera exactly.
        out.mask.at(x, y) = 1.0;
        out.depth.at(x, y) = *water;
        const int yf = spec.height - 1 - y;
        double value = out.virtual_view.at(x, yf);
        if (rippled) {
          double du = 0.0, dv = 0.0;
          for (const RippleWave& w : waves) {
            du += amp * std::sin(w.au * x + w.bu * y + w.pu);
            dv += amp * std::sin(w.av * x + w.bv * y + w.pv);
          }
          const SampleResult s = bilinear_sample(out.virtual_view, x + du, yf + dv);
          if (s.valid) value = s.value;
        }
        out.composite.at(x, y) = spec.attenuation * value;
      }
      // Neither a billboard nor the water: open sky, depth stays 0 (hole).
    }
  }
  return out;
}

}  // namespace refdepth
