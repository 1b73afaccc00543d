#include "refdepth/json_io.hpp"

#include <chrono>
#include <fstream>

#include "refdepth/error.hpp"

namespace refdepth {

namespace {

std::vector<double> require_array(const Json& j, const std::string& key, std::size_t n) {
  if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != n) {
    throw IoError("json: missing " + std::to_string(n) + "-element array '" + key + "'");
  }
  std::vector<double> out;
  out.reserve(n);
  for (const auto& v : j.at(key)) {
    if (!v.is_number()) throw IoError("json: non-numeric entry in '" + key + "'");
    out.push_back(v.get<double>());
  }
  return out;
}

double require_number(const Json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw IoError("json: missing number '" + key + "'");
  }
  return j.at(key).get<double>();
}

}  // namespace

Json pose_json(const RigidPose& pose) {
  Json j;
  std::vector<double> r(9);
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) r[3 * row + col] = pose.rotation(row, col);
  }
  j["rotation"] = r;
  j["translation"] = {pose.translation.x(), pose.translation.y(), pose.translation.z()};
  return j;
}

RigidPose pose_from_json(const Json& j) {
  const auto r = require_array(j, "rotation", 9);
  const auto t = require_array(j, "translation", 3);
  RigidPose pose;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) pose.rotation(row, col) = r[3 * row + col];
  }
  if (!is_rotation(pose.rotation, 1e-6)) throw IoError("json: 'rotation' is not a rotation matrix");
  pose.rotation = orthonormalized(pose.rotation);
  pose.translation = Vec3(t[0], t[1], t[2]);
  return pose;
}

Json intrinsics_json(const CameraIntrinsics& k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
}

CameraIntrinsics intrinsics_from_json(const Json& j) {
  CameraIntrinsics k;
  k.fx = require_number(j, "fx");
  k.fy = require_number(j, "fy");
  k.cx = require_number(j, "cx");
  k.cy = require_number(j, "cy");
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) throw IoError("json: focal lengths must be positive");
  return k;
}

Json plane_json(const Plane& plane) {
  return Json{{"normal", {plane.normal.x(), plane.normal.y(), plane.normal.z()}},
              {"offset", plane.offset}};
}

Plane plane_from_json(const Json& j) {
  const auto n = require_array(j, "normal", 3);
  return make_plane(Vec3(n[0], n[1], n[2]), require_number(j, "offset"));
}

Json metrics_json(const DepthMetrics& m) {
  return Json{{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel},         {"rms", m.rms},
              {"rms_log", m.rms_log}, {"delta1", m.delta1},         {"delta2", m.delta2},
              {"delta3", m.delta3},   {"pixel_count", m.pixel_count}, {"scale", m.scale}};
}

Json ground_truth_json(const SceneSpec& spec, const RenderResult& render) {
  Json j;
  j["intrinsics"] = intrinsics_json(scene_intrinsics(spec));
  j["real_pose"] = pose_json(render.real_pose);
  j["virtual_pose"] = pose_json(render.virtual_pose);
  j["plane"] = plane_json(render.plane);
  j["attenuation"] = spec.attenuation;
  j["ripple_max_drift"] = spec.ripple_max_drift;
  j["seed"] = spec.seed;
  return j;
}

Json report_json(const SolveReport& report, const CompletionResult& completion,
                 const std::string& metric, const std::string& passim_variant) {
  Json j;
  j["timestamp"] = static_cast<long long>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  j["final_loss"] = report.final_loss;
  j["iterations"] = report.iterations;
  j["metric"] = metric;
  j["passim_variant"] = passim_variant;
  j["loss_trajectory"] = report.loss_trajectory;
  j["trajectory_level"] = report.trajectory_level;
  j["valid_fraction_trajectory"] = report.valid_fraction_trajectory;
  j["filled"] = completion.filled;
  j["holes"] = completion.holes;
  return j;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("json: cannot open " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw IoError("json: parse failure in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("json: cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("json: write failure in " + path);
}

}  // namespace refdepth
