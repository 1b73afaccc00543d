#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "refdepth/config.hpp"
#include "refdepth/error.hpp"
#include "refdepth/eval.hpp"
#include "refdepth/imaging.hpp"
#include "refdepth/json_io.hpp"
#include "refdepth/losses.hpp"
#include "refdepth/reprojection.hpp"
#include "refdepth/solver.hpp"
#include "refdepth/synth.hpp"
#include "refdepth/watercomplete.hpp"

namespace fs = std::filesystem;
using namespace refdepth;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // section.key=value
};

ConfigFile load_config(const CommonOpts& opts) {
  ConfigFile cfg;
  if (!opts.config_path.empty()) cfg = ConfigFile::parse_file(opts.config_path);
  for (const auto& kv : opts.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw IoError("--set expects section.key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key-value configuration file");
  cmd->add_option("--set", opts.overrides, "override a config key (section.key=value)")
      ->take_all();
}

int run_gen(const CommonOpts& common, const std::string& out_dir) {
  const ConfigFile cfg = load_config(common);
  const SceneSpec spec = load_scene_spec(cfg);
  const RenderResult scene = render(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("gen: cannot create " + out_dir + ": " + ec.message());
  write_png(scene.composite, (fs::path(out_dir) / "scene.png").string());
  write_png(scene.mask, (fs::path(out_dir) / "mask.png").string());
  write_pfm(scene.depth, (fs::path(out_dir) / "depth.pfm").string());
  write_json_file((fs::path(out_dir) / "gt.json").string(), ground_truth_json(spec, scene));
  std::cout << "wrote scene to " << out_dir << '\n';
  return 0;
}

int run_solve(const CommonOpts& common, const std::string& scene_dir, std::string out_dir,
              const std::string& metric_flag, const std::string& variant_flag,
              const std::string& init_pose_path, double init_height, int threads_flag) {
  ConfigFile cfg = load_config(common);
  if (!metric_flag.empty()) cfg.set("loss.metric", metric_flag);
  if (!variant_flag.empty()) cfg.set("loss.passim_variant", variant_flag);
  if (threads_flag >= 0) cfg.set("solver.threads", std::to_string(threads_flag));
  if (out_dir.empty()) out_dir = scene_dir;

  const fs::path scene(scene_dir);
  const ScalarField photo = read_image((scene / "scene.png").string());
  const ScalarField mask = read_image((scene / "mask.png").string());
  const Json gt = read_json_file((scene / "gt.json").string());
  if (!gt.contains("intrinsics")) throw IoError("solve: gt.json lacks 'intrinsics'");
  const CameraIntrinsics k = intrinsics_from_json(gt.at("intrinsics"));
  const ReflectionPair pair = make_reflection_pair(photo, mask, k);

  const LossConfig loss_cfg = load_loss_config(cfg);
  const StructuralMetric metric = metric_from_string(cfg.get_string("loss.metric", "passim"));
  SolverConfig solver_cfg = load_solver_config(cfg);
  if (!init_pose_path.empty()) {
    solver_cfg.init_pose = pose_from_json(read_json_file(init_pose_path));
  } else {
    // Horizontal water-plane prior a fixed height below the camera.
    solver_cfg.init_pose = mirror_transform(make_plane(Vec3(0, -1, 0), -init_height));
  }

  const SolveResult result = solve(pair, solver_cfg, loss_cfg, metric);
  const CompletionResult completion =
      complete_depth(result.depth, mask, RigidPose{}, invert(result.pose), k);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("solve: cannot create " + out_dir + ": " + ec.message());
  write_pfm(completion.depth, (fs::path(out_dir) / "depth.pfm").string());
  write_json_file((fs::path(out_dir) / "pose.json").string(), pose_json(result.pose));
  write_json_file((fs::path(out_dir) / "plane.json").string(), plane_json(completion.plane));
  write_json_file(
      (fs::path(out_dir) / "report.json").string(),
      report_json(result.report, completion, to_string(metric), to_string(loss_cfg.passim_variant)));
  std::cout << "final loss " << result.report.final_loss << " after "
            << result.report.iterations << " iterations; wrote " << out_dir << '\n';
  return 0;
}

int run_eval(const CommonOpts& common, const std::string& pred_path, const std::string& gt_path,
             const std::string& mask_path) {
  const ConfigFile cfg = load_config(common);
  const EvalOptions opts = load_eval_options(cfg);
  const ScalarField pred = read_pfm(pred_path);
  const ScalarField gt = read_pfm(gt_path);
  Json out;
  out["all"] = metrics_json(evaluate(pred, gt, EvalRegion::kAll, nullptr, opts));
  if (!mask_path.empty()) {
    const ScalarField mask = read_image(mask_path);
    out["non_reflective"] =
        metrics_json(evaluate(pred, gt, EvalRegion::kNonReflective, &mask, opts));
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int run_metrics(const CommonOpts& common, const std::string& a_path, const std::string& b_path) {
  const ConfigFile cfg = load_config(common);
  const LossConfig loss_cfg = load_loss_config(cfg);
  const ScalarField a = to_grayscale(read_image(a_path));
  const ScalarField b = to_grayscale(read_image(b_path));
  Json out;
  out["ssim"] = structural_map(a, b, {}, loss_cfg, StructuralMetric::kSsim).mean;
  out["passim"] = structural_map(a, b, {}, loss_cfg, StructuralMetric::kPassim).mean;
  out["pe_ssim"] = pe_map(a, b, {}, loss_cfg, StructuralMetric::kSsim).mean;
  out["pe_passim"] = pe_map(a, b, {}, loss_cfg, StructuralMetric::kPassim).mean;
  ScalarField ba = ScalarField::zeros(a.width, a.height, 1);
  ScalarField bb = ScalarField::zeros(b.width, b.height, 1);
  for (std::size_t i = 0; i < ba.data.size(); ++i) {
    ba.data[i] = a.data[i] > 0.5 ? 1.0 : 0.0;
    bb.data[i] = b.data[i] > 0.5 ? 1.0 : 0.0;
  }
  out["dice"] = dice_coefficient(ba, bb);
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reflection-supervised depth recovery"};
  app.require_subcommand(1);

  CommonOpts gen_common, solve_common, eval_common, metrics_common;

  auto* gen = app.add_subcommand("gen", "render a synthetic water scene with ground truth");
  std::string gen_out;
  gen->add_option("-o,--out", gen_out, "output directory")->required();
  add_common(gen, gen_common);

  auto* solve = app.add_subcommand("solve", "recover depth and mirror pose from a scene");
  std::string scene_dir, solve_out, metric_flag, variant_flag, init_pose_path;
  double init_height = 1.0;
  int threads_flag = -1;
  solve->add_option("-s,--scene", scene_dir, "scene directory (scene.png, mask.png, gt.json)")
      ->required();
  solve->add_option("-o,--out", solve_out, "output directory (default: scene directory)");
  solve->add_option("--metric", metric_flag, "structural metric")
      ->check(CLI::IsMember({"ssim", "passim"}));
  solve->add_option("--passim-variant", variant_flag, "rescaled or verbatim")
      ->check(CLI::IsMember({"rescaled", "verbatim"}));
  solve->add_option("--init-pose", init_pose_path, "initial mirror pose JSON");
  solve->add_option("--init-height", init_height,
                    "water plane height below camera for the default init");
  solve->add_option("--threads", threads_flag, "worker threads (0 = auto)");
  add_common(solve, solve_common);

  auto* eval_cmd = app.add_subcommand("eval", "score a predicted depth map against ground truth");
  std::string pred_path, gt_path, mask_path;
  eval_cmd->add_option("pred", pred_path, "predicted depth PFM")->required();
  eval_cmd->add_option("gt", gt_path, "ground-truth depth PFM")->required();
  eval_cmd->add_option("-m,--mask", mask_path, "water mask PNG for the non-reflective region");
  add_common(eval_cmd, eval_common);

  auto* metrics = app.add_subcommand("metrics", "image-pair similarity report");
  std::string image_a, image_b;
  metrics->add_option("a", image_a, "first image")->required();
  metrics->add_option("b", image_b, "second image")->required();
  add_common(metrics, metrics_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen(gen_common, gen_out);
    if (solve->parsed()) {
      return run_solve(solve_common, scene_dir, solve_out, metric_flag, variant_flag,
                       init_pose_path, init_height, threads_flag);
    }
    if (eval_cmd->parsed()) return run_eval(eval_common, pred_path, gt_path, mask_path);
    if (metrics->parsed()) return run_metrics(metrics_common, image_a, image_b);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
