#pragma once

#include <Eigen/Core>

#include "ctlo/core.hpp"

namespace ctlo {

// Rigid transform in SE(3), stored as rotation matrix + translation.
// Used for T_vi (world-to-vehicle), T_lv (vehicle-to-lidar) and friends.
class Pose {
 public:
  Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose Identity() { return Pose(); }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Pose inverse() const {
    return Pose(rotation_.transpose(), -(rotation_.transpose() * translation_));
  }

  Pose operator*(const Pose& rhs) const {
    return Pose(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation_ * p + translation_;
  }

  // Homogeneous action; preserves the fourth component.
  Eigen::Vector4d operator*(const Eigen::Vector4d& p) const {
    Eigen::Vector4d out;
    out.head<3>() = rotation_ * p.head<3>() + p(3) * translation_;
    out(3) = p(3);
    return out;
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  // Re-projects the rotation onto SO(3) (polar factor). Compositions drift
  // slowly; the solver calls this after applying updates.
  void reorthonormalize();

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

// Body-centric velocity [nu; omega] (m/s, rad/s).
struct Twist {
  Eigen::Vector3d nu = Eigen::Vector3d::Zero();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();

  Vector6d vec() const {
    Vector6d v;
    v << nu, omega;
    return v;
  }
  static Twist from_vec(const Vector6d& v) { return Twist{v.head<3>(), v.tail<3>()}; }
};

// Removes the fourth homogeneous element.
inline Matrix3x4d projection_d() {
  Matrix3x4d d = Matrix3x4d::Zero();
  d.topLeftCorner<3, 3>().setIdentity();
  return d;
}

inline Eigen::Vector4d homogeneous(const Eigen::Vector3d& xyz) {
  return Eigen::Vector4d(xyz.x(), xyz.y(), xyz.z(), 1.0);
}

Eigen::Matrix3d hat(const Eigen::Vector3d& v);

// se(3) hat: [nu; omega] -> 4x4 with omega^ in the top-left block.
Eigen::Matrix4d hat(const Vector6d& xi);

// 4x6 operator with q^odot * xi == xi^ * q for homogeneous q.
Matrix4x6d odot(const Eigen::Vector4d& q);

// se(3) adjoint (curly hat) of a 6-vector.
Matrix6d curly_hat(const Vector6d& xi);

// SO(3) pieces, Rodrigues with Taylor fallbacks near zero angle.
Eigen::Matrix3d exp_so3(const Eigen::Vector3d& omega);
Eigen::Vector3d log_so3(const Eigen::Matrix3d& rotation);  // throws AngleNearPi
Eigen::Matrix3d left_jacobian_so3(const Eigen::Vector3d& omega);
Eigen::Matrix3d left_jacobian_inv_so3(const Eigen::Vector3d& omega);

Pose exp_se3(const Vector6d& xi);
Vector6d log_se3(const Pose& pose);  // throws AngleNearPi

// Ad(T): Ad(T) * xi == (T * xi^ * T^-1)^vee.
Matrix6d adjoint(const Pose& pose);

Matrix6d left_jacobian(const Vector6d& xi);
Matrix6d left_jacobian_inv(const Vector6d& xi);  // throws AngleNearPi

// Directional derivative of the left Jacobian applied to a fixed vector:
// returns M with M * delta == d/deps [ J_l(xi + eps*delta) * v ] at eps = 0.
// Evaluated from the ad-series of J_l; converges factorially.
Matrix6d left_jacobian_deriv(const Vector6d& xi, const Vector6d& v);

// Same for the inverse left Jacobian: M * delta == d/deps [ J_l^-1(xi+eps*delta) * v ].
Matrix6d left_jacobian_inv_deriv(const Vector6d& xi, const Vector6d& v);

}  // namespace ctlo
