#include "refdepth/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace refdepth {

bool is_rotation(const Mat3& r, double tol) {
  const Mat3 rtr = r.transpose() * r;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Mat3 orthonormalized(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return q.toRotationMatrix();
}

RigidPose compose(const RigidPose& a, const RigidPose& b) {
  RigidPose out;
  out.rotation = orthonormalized(a.rotation * b.rotation);
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidPose invert(const RigidPose& pose) {
  RigidPose out;
  out.rotation = pose.rotation.transpose();
  out.translation = -(out.rotation * pose.translation);
  return out;
}

Mat3 exp_so3(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  Mat3 hat;
  hat << 0.0, -omega.z(), omega.y(),
         omega.z(), 0.0, -omega.x(),
         -omega.y(), omega.x(), 0.0;
  if (theta2 < 1e-16) {
    return orthonormalized(Mat3::Identity() + hat + 0.5 * hat * hat);
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * hat +
         ((1.0 - std::cos(theta)) / theta2) * hat * hat;
}

Vec3 log_so3(const Mat3& r) {
  const double cos_theta = std::min(1.0, std::max(-1.0, (r.trace() - 1.0) * 0.5));
  const double theta = std::acos(cos_theta);
  Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-8) {
    return 0.5 * axis;  // first-order: r ~ I + hat(omega)
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the antisymmetric part vanishes; read the axis off the
    // symmetric part instead.
    Mat3 s = 0.5 * (r + Mat3::Identity());
    int k = 0;
    s.diagonal().maxCoeff(&k);
    Vec3 a = s.col(k) / std::sqrt(std::max(s(k, k), 1e-12));
    a.normalize();
    // Fix the sign so exp matches r through the antisymmetric residue.
    if (axis.dot(a) < 0.0) a = -a;
    return theta * a;
  }
  return (theta / (2.0 * std::sin(theta))) * axis;
}

RigidPose apply_pose_increment(const RigidPose& pose, const Vec6& delta) {
  RigidPose out;
  out.rotation = orthonormalized(exp_so3(delta.head<3>()) * pose.rotation);
  out.translation = pose.translation + delta.tail<3>();
  return out;
}

Vec2 project(const CameraIntrinsics& k, const Vec3& p) {
  if (p.z() <= 0.0) {
    throw NumericalError("project: point behind camera (z <= 0)");
  }
  return Vec2(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
}

Vec3 backproject(const CameraIntrinsics& k, const Vec2& pixel, double depth) {
  return Vec3((pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth);
}

Plane make_plane(const Vec3& normal, double offset) {
  const double n = normal.norm();
  if (n < 1e-12) throw NumericalError("make_plane: zero normal");
  return Plane{normal / n, offset / n};
}

double signed_distance(const Plane& plane, const Vec3& p) {
  return plane.normal.dot(p) - plane.offset;
}

Vec3 reflect_point(const Plane& plane, const Vec3& p) {
  return p - 2.0 * signed_distance(plane, p) * plane.normal;
}

Mat3 householder(const Vec3& unit_normal) {
  return Mat3::Identity() - 2.0 * unit_normal * unit_normal.transpose();
}

RigidPose reflect_pose_about_plane(const RigidPose& pose, const Plane& plane) {
  static const Mat3 kImageFlip = Vec3(1.0, -1.0, 1.0).asDiagonal();
  RigidPose out;
  out.rotation = orthonormalized(householder(plane.normal) * pose.rotation * kImageFlip);
  out.translation = reflect_point(plane, pose.translation);
  return out;
}

Plane plane_from_pose_pair(const RigidPose& real, const RigidPose& virt, double min_separation) {
  const Vec3 d = real.translation - virt.translation;
  const double len = d.norm();
  if (len < min_separation) {
    throw NumericalError("plane_from_pose_pair: camera centers coincide");
  }
  Plane plane;
  plane.normal = d / len;
  plane.offset = plane.normal.dot(0.5 * (real.translation + virt.translation));
  return plane;
}

RigidPose mirror_transform(const Plane& plane) {
  return invert(reflect_pose_about_plane(RigidPose{}, plane));
}

Plane mirror_plane_from_transform(const RigidPose& pose) {
  static const Mat3 kImageFlip = Vec3(1.0, -1.0, 1.0).asDiagonal();
  const Mat3 m = 0.5 * (Mat3::Identity() - kImageFlip * pose.rotation);
  const Mat3 sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(sym);
  Vec3 n = eig.eigenvectors().col(2);  // eigenvalues ascend; dominant is last
  int lead = 0;
  n.cwiseAbs().maxCoeff(&lead);
  if (n[lead] < 0.0) n = -n;
  Plane out;
  out.normal = n;
  out.offset = 0.5 * n.dot(kImageFlip * pose.translation);
  return out;
}

Plane plane_to_camera(const Plane& plane, const RigidPose& camera) {
  Plane out;
  out.normal = camera.rotation.transpose() * plane.normal;
  out.offset = plane.offset - plane.normal.dot(camera.translation);
  return out;
}

std::optional<double> ray_plane_depth(const CameraIntrinsics& k, const RigidPose& pose,
                                      const Vec2& pixel, const Plane& plane,
                                      double parallel_tol) {
  const Vec3 dir_cam((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  const Vec3 dir_world = pose.rotation * dir_cam;
  const double denom = plane.normal.dot(dir_world);
  if (std::abs(denom) < parallel_tol * dir_world.norm()) return std::nullopt;
  const double t = (plane.offset - plane.normal.dot(pose.translation)) / denom;
  if (t <= 0.0) return std::nullopt;
  return t;  // dir_cam.z == 1, so the ray parameter is the camera-frame depth
}

}  // namespace refdepth
