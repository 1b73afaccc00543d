#pragma once

#include <cstdint>
#include <vector>

#include "refdepth/reprojection.hpp"

namespace refdepth {

// Depth d = 1 / (q_min + e^z (1/min_depth - q_min)) with q_min = 1/max_depth,
// so any finite parameter z maps into (0, max_depth): positivity and the
// 120 m evaluation cap hold by construction. min_depth anchors z = 0 and the
// step scale; it is not a hard lower bound.
struct DepthBounds {
  double min_depth = 0.1;
  double max_depth = 120.0;
};

double depth_from_param(double z, const DepthBounds& b);
double param_from_depth(double depth, const DepthBounds& b);

struct SolverConfig {
  int max_iters = 3200;  // cap per pyramid level; coarse levels use a fraction
  int pyramid_levels = 3;
  double depth_lr = 1e-3;
  double pose_lr = 1e-2;
  double pose_momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double stop_rel_tol = 1e-6;  // relative loss change over stop_window iterations
  int stop_window = 20;
  double init_depth = 10.0;
  RigidPose init_pose;  // T_real->virtual
  DepthBounds bounds;
  int threads = 1;
};

struct SolveReport {
  double final_loss = 0.0;
  int iterations = 0;  // summed over levels
  RigidPose final_pose;
  std::vector<double> loss_trajectory;          // accepted loss per iteration
  std::vector<int> trajectory_level;            // pyramid level of each entry
  std::vector<double> valid_fraction_trajectory;
};

struct LossGradients {
  double total = 0.0;
  double photometric = 0.0;
  double smoothness = 0.0;
  std::size_t valid_count = 0;
  double valid_fraction = 0.0;
  ScalarField depth_grad;  // d(total)/dz per pixel
  Vec6 pose_grad = Vec6::Zero();  // left-increment chart at the given pose
};

// Analytic gradients of the full objective (photometric pe + weighted
// smoothness) with respect to the log-inverse-depth field and the pose. The
// pose gradient lives in the chart of apply_pose_increment: component k is
// dL/d(delta_k) at delta = 0. Bilinear sampling uses the within-cell
// derivative. Throws NumericalError when no pixel is supported.
LossGradients loss_gradients(const ReflectionPair& pair, const ScalarField& z_field,
                             const RigidPose& pose, const LossConfig& cfg,
                             StructuralMetric metric, const DepthBounds& bounds,
                             int threads = 1);

// Objective value on the same code path as loss_gradients, minus the
// backward pass. Used by the solver's step guard and by equivalence tests
// against reprojection_loss.
LossGradients solver_loss(const ReflectionPair& pair, const ScalarField& z_field,
                          const RigidPose& pose, const LossConfig& cfg,
                          StructuralMetric metric, const DepthBounds& bounds,
                          int threads = 1);

struct SolveResult {
  ScalarField depth;  // meters, positive and strictly below max_depth
  RigidPose pose;     // refined T_real->virtual
  SolveReport report;
};

// Coarse-to-fine joint optimization: adaptive-moment updates on the depth
// field, momentum descent on the pose, one shared monotone step guard per
// iteration (a step ladder from 4x down through 5 halvings of the base step,
// rejected outright if the loss still increases). The pose is kept on the
// 3-DoF family of reflection-consistent transforms with the plane offset
// frozen at its initial value, which pins the depth/baseline gauge. The
// per-level loss trajectory never increases. After the finest level,
// real-region pixels outside every supported window get a smoothness-only
// relaxation and water pixels are filled with the recovered plane's depth.
// Throws NumericalError on an all-water or empty mask, when no pyramid
// level has photometric support, and when the valid fraction collapses
// below 1%.
SolveResult solve(const ReflectionPair& pair, const SolverConfig& cfg,
                  const LossConfig& loss_cfg, StructuralMetric metric);

}  // namespace refdepth
