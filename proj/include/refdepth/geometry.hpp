#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>

#include "refdepth/error.hpp"

namespace refdepth {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

// Rigid transform x_world = rotation * x_camera + translation, i.e. a
// camera-to-world pose whose translation is the camera center.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

// Plane as { x : normal . x = offset } with unit normal.
struct Plane {
  Vec3 normal = Vec3(0.0, -1.0, 0.0);
  double offset = 0.0;
};

bool is_rotation(const Mat3& r, double tol = 1e-9);

// Nearest rotation matrix; routes through the unit quaternion so long
// composition chains cannot drift away from det +1.
Mat3 orthonormalized(const Mat3& r);

// compose(a, b) applies b first: result(x) = a(b(x)).
RigidPose compose(const RigidPose& a, const RigidPose& b);
RigidPose invert(const RigidPose& pose);

Mat3 exp_so3(const Vec3& omega);
Vec3 log_so3(const Mat3& r);

// Left-multiplicative update: rotation <- exp_so3(delta.head(3)) * rotation,
// translation <- translation + delta.tail(3). Matches the chart used for
// pose gradients in the solver.
RigidPose apply_pose_increment(const RigidPose& pose, const Vec6& delta);

// Throws NumericalError when p.z() <= 0 (point behind the camera).
Vec2 project(const CameraIntrinsics& k, const Vec3& p);
Vec3 backproject(const CameraIntrinsics& k, const Vec2& pixel, double depth);

Plane make_plane(const Vec3& normal, double offset);
double signed_distance(const Plane& plane, const Vec3& p);
Vec3 reflect_point(const Plane& plane, const Vec3& p);

// I - 2 n n^T; det -1, its own inverse.
Mat3 householder(const Vec3& unit_normal);

// Pose of the mirrored (virtual) camera. The center is the reflection of the
// real center; the rotation is H * R * diag(1,-1,1) so it stays a proper
// rotation, which means images rendered by the virtual camera come out
// vertically flipped relative to the raw mirror image. Applying the function
// twice returns the original pose.
RigidPose reflect_pose_about_plane(const RigidPose& pose, const Plane& plane);

// Perpendicular bisector of the two camera centers; normal points from the
// virtual center toward the real one. Throws NumericalError when the centers
// are closer than min_separation.
Plane plane_from_pose_pair(const RigidPose& real, const RigidPose& virt,
                           double min_separation = 1e-6);

// Relative transform from a camera at the origin to its mirror image about
// `plane` (given in that camera's frame): the T_real->virtual used to warp
// real-view coordinates into the virtual view.
RigidPose mirror_transform(const Plane& plane);

// Inverse of mirror_transform, extended to arbitrary rigid transforms: the
// plane whose mirror_transform is nearest the input. Every mirror_transform
// has rotation diag(1,-1,1) * (I - 2 n n^T), so the dominant eigenvector of
// the symmetrized (I - diag(1,-1,1) * R) / 2 recovers the normal and the
// translation's component along the flipped normal recovers the offset. The
// normal is canonicalized so its largest-magnitude component is positive.
// mirror_transform(mirror_plane_from_transform(p)) projects p onto the
// 3-DoF family of reflection-consistent transforms.
Plane mirror_plane_from_transform(const RigidPose& pose);

// Re-express a world-frame plane in camera coordinates for a camera-to-world
// pose: n' = R^T n, offset' = offset - n . t.
Plane plane_to_camera(const Plane& plane, const RigidPose& camera);

// Depth (camera-frame z) where the ray through `pixel` meets the plane.
// Empty when the ray is parallel to the plane (within tolerance on the
// normalized direction) or the hit lies behind the camera.
std::optional<double> ray_plane_depth(const CameraIntrinsics& k, const RigidPose& pose,
                                      const Vec2& pixel, const Plane& plane,
                                      double parallel_tol = 1e-9);

}  // namespace refdepth
