#pragma once

#include <string>

#include <json.hpp>

#include "refdepth/eval.hpp"
#include "refdepth/geometry.hpp"
#include "refdepth/solver.hpp"
#include "refdepth/synth.hpp"
#include "refdepth/watercomplete.hpp"

namespace refdepth {

using Json = nlohmann::json;

// Poses serialize as {"rotation": row-major 9-array, "translation": 3-array}.
Json pose_json(const RigidPose& pose);
RigidPose pose_from_json(const Json& j);

Json intrinsics_json(const CameraIntrinsics& k);
CameraIntrinsics intrinsics_from_json(const Json& j);

Json plane_json(const Plane& plane);
Plane plane_from_json(const Json& j);

Json metrics_json(const DepthMetrics& m);

// Scene ground truth bundle written by `gen` next to the rendered files.
Json ground_truth_json(const SceneSpec& spec, const RenderResult& render);

// Solve report; `timestamp` is the only field allowed to differ between
// identical runs.
Json report_json(const SolveReport& report, const CompletionResult& completion,
                 const std::string& metric, const std::string& passim_variant);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace refdepth
