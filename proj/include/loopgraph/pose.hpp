#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>

#include "loopgraph/errors.hpp"

namespace lg {

// Rigid body pose. Quaternion convention is (w, x, y, z) with Hamilton
// products throughout; a pose maps local coordinates into the parent frame:
// x_parent = R * x_local + t.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Pose() = default;

  Pose(const Eigen::Vector3d& pos, const Eigen::Quaterniond& quat)
      : position(pos), orientation(quat) {
    const double n = orientation.norm();
    if (!std::isfinite(n) || n < 1e-12) {
      throw InvalidArgumentError("pose quaternion has invalid norm");
    }
    orientation.normalize();
    if (std::abs(orientation.norm() - 1.0) > 1e-9) {
      throw InvalidArgumentError("pose quaternion normalization failed");
    }
  }

  static Pose identity() { return Pose(); }

  Eigen::Matrix3d rotation() const { return orientation.toRotationMatrix(); }

  Pose inverse() const {
    const Eigen::Quaterniond qi = orientation.conjugate();
    return Pose(qi * (-position), qi);
  }

  Pose compose(const Pose& other) const {
    return Pose(position + orientation * other.position, orientation * other.orientation);
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return orientation * p + position;
  }
};

// T_a^{-1} * T_b: rotation R_a^T R_b, translation R_a^T (t_b - t_a).
inline Pose relative_pose(const Pose& a, const Pose& b) {
  const Eigen::Quaterniond qi = a.orientation.conjugate();
  return Pose(qi * (b.position - a.position), qi * b.orientation);
}

// Geodesic angle on SO(3) between two orientations, in radians.
inline double rotation_angle_rad(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const double d = std::min(1.0, std::abs(a.dot(b)));
  return 2.0 * std::acos(d);
}

inline double rotation_angle_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  return rotation_angle_rad(a, b) * 180.0 / M_PI;
}

}  // namespace lg
