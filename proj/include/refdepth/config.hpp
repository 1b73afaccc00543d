#pragma once

#include <map>
#include <string>
#include <vector>

#include "refdepth/eval.hpp"
#include "refdepth/losses.hpp"
#include "refdepth/solver.hpp"
#include "refdepth/synth.hpp"

namespace refdepth {

// Key-value configuration with [section] headers, key = value lines, and
// repeated [[block]] tables. Comments start with '#'. Values may be numbers,
// booleans, quoted strings, or [a, b, c] arrays. Keys are addressed as
// "section.key"; keys before any header have no section prefix.
class ConfigFile {
 public:
  using Block = std::map<std::string, std::string>;

  ConfigFile() = default;
  static ConfigFile parse(const std::string& text);
  static ConfigFile parse_file(const std::string& path);

  bool has(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  // Override hook for command-line flags; value uses the same literal syntax.
  void set(const std::string& key, const std::string& value);

  const std::vector<Block>& blocks(const std::string& name) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::vector<Block>> blocks_;
  static const std::vector<Block> kNoBlocks;
};

StructuralMetric metric_from_string(const std::string& name);
PassimVariant passim_variant_from_string(const std::string& name);
std::string to_string(StructuralMetric metric);
std::string to_string(PassimVariant variant);

// Section [loss]: alpha, epsilon, smoothness_weight, kernel_size,
// kernel_gaussian, kernel_sigma, metric, passim_variant.
LossConfig load_loss_config(const ConfigFile& cfg);

// Section [solver]: max_iters, pyramid_levels, depth_lr, pose_lr,
// pose_momentum, adam_beta1, adam_beta2, adam_eps, stop_rel_tol, stop_window,
// init_depth, min_depth, max_depth, threads.
SolverConfig load_solver_config(const ConfigFile& cfg);

// Section [scene]: seed, width, height, focal, camera_height, attenuation,
// ripple_max_drift, ripple_waves. Any [[billboard]] blocks (center_x,
// half_width, z, top_y, texture, texture_scale) replace the default set.
SceneSpec load_scene_spec(const ConfigFile& cfg);

// Section [eval]: cap, median_scale, exclude_beyond_cap.
EvalOptions load_eval_options(const ConfigFile& cfg);

}  // namespace refdepth
