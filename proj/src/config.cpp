#include "refdepth/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "refdepth/error.hpp"

namespace refdepth {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Removes '#' comments outside double quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

double parse_double(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw IoError("config: key '" + key + "' is not a number: " + v);
  }
  if (pos != v.size()) throw IoError("config: key '" + key + "' is not a number: " + v);
  return out;
}

double block_double(const ConfigFile::Block& b, const std::string& key, double fallback) {
  auto it = b.find(key);
  return it == b.end() ? fallback : parse_double("billboard." + key, it->second);
}

std::string block_string(const ConfigFile::Block& b, const std::string& key,
                         const std::string& fallback) {
  auto it = b.find(key);
  return it == b.end() ? fallback : it->second;
}

TextureKind texture_from_string(const std::string& name) {
  if (name == "checker") return TextureKind::kChecker;
  if (name == "noise") return TextureKind::kNoise;
  if (name == "gradient") return TextureKind::kGradient;
  throw IoError("config: unknown texture '" + name + "'");
}

}  // namespace

const std::vector<ConfigFile::Block> ConfigFile::kNoBlocks;

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  Block* block = nullptr;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.size() >= 4 && line.substr(0, 2) == "[[" && line.substr(line.size() - 2) == "]]") {
      const std::string name = trim(line.substr(2, line.size() - 4));
      if (name.empty()) throw IoError("config: empty block name at line " + std::to_string(line_no));
      cfg.blocks_[name].emplace_back();
      block = &cfg.blocks_[name].back();
      continue;
    }
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw IoError("config: empty section name at line " + std::to_string(line_no));
      }
      block = nullptr;
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError("config: expected key = value at line " + std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (key.empty()) throw IoError("config: empty key at line " + std::to_string(line_no));
    if (block != nullptr) {
      (*block)[key] = value;
    } else {
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool ConfigFile::has(const std::string& key) const { return values_.count(key) != 0; }

double ConfigFile::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

int ConfigFile::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const double v = parse_double(key, it->second);
  const int out = static_cast<int>(v);
  if (static_cast<double>(out) != v) throw IoError("config: key '" + key + "' is not an integer");
  return out;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw IoError("config: key '" + key + "' is not a boolean: " + v);
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::vector<double> ConfigFile::get_doubles(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return {};
  std::string v = trim(it->second);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw IoError("config: key '" + key + "' is not an array");
  }
  v = v.substr(1, v.size() - 2);
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t comma = v.find(',', start);
    if (comma == std::string::npos) comma = v.size();
    const std::string item = trim(v.substr(start, comma - start));
    if (!item.empty()) out.push_back(parse_double(key, item));
    start = comma + 1;
  }
  return out;
}

void ConfigFile::set(const std::string& key, const std::string& value) {
  values_[key] = unquote(trim(value));
}

const std::vector<ConfigFile::Block>& ConfigFile::blocks(const std::string& name) const {
  auto it = blocks_.find(name);
  return it == blocks_.end() ? kNoBlocks : it->second;
}

StructuralMetric metric_from_string(const std::string& name) {
  if (name == "ssim") return StructuralMetric::kSsim;
  if (name == "passim") return StructuralMetric::kPassim;
  throw IoError("config: unknown metric '" + name + "'");
}

PassimVariant passim_variant_from_string(const std::string& name) {
  if (name == "rescaled") return PassimVariant::kRescaled;
  if (name == "verbatim") return PassimVariant::kVerbatim;
  throw IoError("config: unknown passim variant '" + name + "'");
}

std::string to_string(StructuralMetric metric) {
  return metric == StructuralMetric::kSsim ? "ssim" : "passim";
}

std::string to_string(PassimVariant variant) {
  return variant == PassimVariant::kRescaled ? "rescaled" : "verbatim";
}

LossConfig load_loss_config(const ConfigFile& cfg) {
  LossConfig out;
  out.alpha = cfg.get_double("loss.alpha", out.alpha);
  out.epsilon = cfg.get_double("loss.epsilon", out.epsilon);
  out.smoothness_weight = cfg.get_double("loss.smoothness_weight", out.smoothness_weight);
  const int size = cfg.get_int("loss.kernel_size", out.kernel.size);
  if (cfg.get_bool("loss.kernel_gaussian", false)) {
    out.kernel = WindowKernel::gaussian_kernel(size, cfg.get_double("loss.kernel_sigma", 0.0));
  } else {
    out.kernel = WindowKernel::uniform(size);
  }
  out.passim_variant =
      passim_variant_from_string(cfg.get_string("loss.passim_variant", to_string(out.passim_variant)));
  return out;
}

SolverConfig load_solver_config(const ConfigFile& cfg) {
  SolverConfig out;
  out.max_iters = cfg.get_int("solver.max_iters", out.max_iters);
  out.pyramid_levels = cfg.get_int("solver.pyramid_levels", out.pyramid_levels);
  out.depth_lr = cfg.get_double("solver.depth_lr", out.depth_lr);
  out.pose_lr = cfg.get_double("solver.pose_lr", out.pose_lr);
  out.pose_momentum = cfg.get_double("solver.pose_momentum", out.pose_momentum);
  out.adam_beta1 = cfg.get_double("solver.adam_beta1", out.adam_beta1);
  out.adam_beta2 = cfg.get_double("solver.adam_beta2", out.adam_beta2);
  out.adam_eps = cfg.get_double("solver.adam_eps", out.adam_eps);
  out.stop_rel_tol = cfg.get_double("solver.stop_rel_tol", out.stop_rel_tol);
  out.stop_window = cfg.get_int("solver.stop_window", out.stop_window);
  out.init_depth = cfg.get_double("solver.init_depth", out.init_depth);
  out.bounds.min_depth = cfg.get_double("solver.min_depth", out.bounds.min_depth);
  out.bounds.max_depth = cfg.get_double("solver.max_depth", out.bounds.max_depth);
  out.threads = cfg.get_int("solver.threads", out.threads);
  return out;
}

SceneSpec load_scene_spec(const ConfigFile& cfg) {
  SceneSpec out = default_scene_spec();
  const long long seed = static_cast<long long>(cfg.get_double("scene.seed", static_cast<double>(out.seed)));
  if (seed < 0) throw IoError("config: scene.seed must be non-negative");
  out.seed = static_cast<std::uint64_t>(seed);
  out.width = cfg.get_int("scene.width", out.width);
  out.height = cfg.get_int("scene.height", out.height);
  out.focal = cfg.get_double("scene.focal", out.focal);
  out.attenuation = cfg.get_double("scene.attenuation", out.attenuation);
  out.ripple_max_drift = cfg.get_double("scene.ripple_max_drift", out.ripple_max_drift);
  out.ripple_waves = cfg.get_int("scene.ripple_waves", out.ripple_waves);
  const double height = cfg.get_double("scene.camera_height", -out.camera.translation.y());
  out.camera.translation = Vec3(0.0, -height, 0.0);
  const auto& boards = cfg.blocks("billboard");
  if (!boards.empty()) {
    out.billboards.clear();
    for (const auto& b : boards) {
      Billboard bb;
      bb.center_x = block_double(b, "center_x", bb.center_x);
      bb.half_width = block_double(b, "half_width", bb.half_width);
      bb.z = block_double(b, "z", bb.z);
      bb.top_y = block_double(b, "top_y", bb.top_y);
      bb.texture = texture_from_string(block_string(b, "texture", "noise"));
      bb.texture_scale = block_double(b, "texture_scale", bb.texture_scale);
      out.billboards.push_back(bb);
    }
  }
  return out;
}

EvalOptions load_eval_options(const ConfigFile& cfg) {
  EvalOptions out;
  out.cap = cfg.get_double("eval.cap", out.cap);
  out.median_scale = cfg.get_bool("eval.median_scale", out.median_scale);
  out.exclude_beyond_cap = cfg.get_bool("eval.exclude_beyond_cap", out.exclude_beyond_cap);
  return out;
}

}  // namespace refdepth
