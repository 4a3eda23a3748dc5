#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace arcap {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

// Rigid transform. `orientation` is kept unit-norm by every operation below.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Pose() = default;
  Pose(const Vec3& p, const Quat& q) : position(p), orientation(q.normalized()) {}

  static Pose identity() { return {}; }
  static Pose translation(double x, double y, double z) { return {Vec3(x, y, z), Quat::Identity()}; }
  static Pose translation(const Vec3& p) { return {p, Quat::Identity()}; }
  static Pose from_axis_angle(const Vec3& axis, double angle, const Vec3& p = Vec3::Zero()) {
    return {p, Quat(Eigen::AngleAxisd(angle, axis.normalized()))};
  }
  // Fixed-axis roll/pitch/yaw (URDF convention: R = Rz(yaw) Ry(pitch) Rx(roll)).
  static Pose from_xyz_rpy(const Vec3& xyz, const Vec3& rpy);

  // this ∘ other
  Pose operator*(const Pose& other) const {
    Pose out;
    out.position = position + orientation * other.position;
    out.orientation = (orientation * other.orientation).normalized();
    return out;
  }

  Vec3 transform(const Vec3& p) const { return position + orientation * p; }

  Pose inverse() const {
    Pose out;
    out.orientation = orientation.conjugate();
    out.position = -(out.orientation * position);
    return out;
  }

  Eigen::Matrix3d rotation() const { return orientation.toRotationMatrix(); }

  bool operator==(const Pose& o) const {
    return position == o.position && orientation.coeffs() == o.orientation.coeffs();
  }
};

// Rotation vector (axis * angle, angle in [0, pi]) of a unit quaternion.
Vec3 log_map(const Quat& q);

// Inverse of log_map.
Quat exp_map(const Vec3& rotation_vector);

// World-frame orientation error taking `current` onto `target`.
inline Vec3 orientation_error(const Quat& target, const Quat& current) {
  return log_map(target * current.conjugate());
}

// Geodesic angle between two orientations.
inline double angular_distance(const Quat& a, const Quat& b) { return orientation_error(a, b).norm(); }

}  // namespace arcap
