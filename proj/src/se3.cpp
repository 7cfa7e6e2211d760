#include "ctlo/se3.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>

namespace ctlo {

namespace {

constexpr double kPi = 3.14159265358979323846;
// Below this angle the closed-form coefficient ratios lose digits to
// cancellation; three-term Taylor series are exact to machine precision there.
constexpr double kSmallAngle = 1e-3;

// (1 - cos t) / t^2
double coef_b(double t) {
  const double t2 = t * t;
  if (t < kSmallAngle) return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  return (1.0 - std::cos(t)) / t2;
}

// (t - sin t) / t^3
double coef_c(double t) {
  const double t2 = t * t;
  if (t < kSmallAngle) return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  return (t - std::sin(t)) / (t2 * t);
}

// Barfoot-style Q matrix: the translational block of the SE(3) left Jacobian.
Eigen::Matrix3d q_matrix(const Eigen::Vector3d& nu, const Eigen::Vector3d& omega) {
  const double t = omega.norm();
  const double t2 = t * t;
  double c2, c3, c4;
  if (t < kSmallAngle) {
    c2 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    c3 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
    c4 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
  } else {
    const double s = std::sin(t);
    const double c = std::cos(t);
    const double t4 = t2 * t2;
    c2 = (t - s) / (t2 * t);
    c3 = (t2 + 2.0 * c - 2.0) / (2.0 * t4);
    c4 = (2.0 * t - 3.0 * s + t * c) / (2.0 * t4 * t);
  }
  const Eigen::Matrix3d vx = hat(nu);
  const Eigen::Matrix3d wx = hat(omega);
  const Eigen::Matrix3d wv = wx * vx;
  const Eigen::Matrix3d vw = vx * wx;
  const Eigen::Matrix3d wvw = wv * wx;
  return 0.5 * vx + c2 * (wv + vw + wvw) + c3 * (wx * wv + vw * wx - 3.0 * wvw) +
         c4 * (wvw * wx + wx * wvw);
}

}  // namespace

void Pose::reorthonormalize() {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  rotation_ = r;
}

Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Matrix4d hat(const Vector6d& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = hat(Eigen::Vector3d(xi.tail<3>()));
  m.topRightCorner<3, 1>() = xi.head<3>();
  return m;
}

Matrix4x6d odot(const Eigen::Vector4d& q) {
  Matrix4x6d m = Matrix4x6d::Zero();
  m.topLeftCorner<3, 3>() = q(3) * Eigen::Matrix3d::Identity();
  m.topRightCorner<3, 3>() = -hat(Eigen::Vector3d(q.head<3>()));
  return m;
}

Matrix6d curly_hat(const Vector6d& xi) {
  Matrix6d m = Matrix6d::Zero();
  const Eigen::Matrix3d wx = hat(Eigen::Vector3d(xi.tail<3>()));
  m.topLeftCorner<3, 3>() = wx;
  m.topRightCorner<3, 3>() = hat(Eigen::Vector3d(xi.head<3>()));
  m.bottomRightCorner<3, 3>() = wx;
  return m;
}

Eigen::Matrix3d exp_so3(const Eigen::Vector3d& omega) {
  const double t = omega.norm();
  const Eigen::Matrix3d wx = hat(omega);
  double a;  // sin t / t
  const double t2 = t * t;
  if (t < kSmallAngle) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
  } else {
    a = std::sin(t) / t;
  }
  return Eigen::Matrix3d::Identity() + a * wx + coef_b(t) * wx * wx;
}

Eigen::Vector3d log_so3(const Eigen::Matrix3d& rotation) {
  const double tr = rotation.trace();
  const double cos_t = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  const double t = std::acos(cos_t);
  if (t >= kPi - 1e-6) throw AngleNearPi{};
  Eigen::Vector3d axis_sin;  // sin(t) * axis
  axis_sin << rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
      rotation(1, 0) - rotation(0, 1);
  axis_sin *= 0.5;
  if (t < kSmallAngle) {
    // t/sin t ~ 1 + t^2/6 + 7 t^4 / 360
    const double t2 = t * t;
    return (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0) * axis_sin;
  }
  return (t / std::sin(t)) * axis_sin;
}

Eigen::Matrix3d left_jacobian_so3(const Eigen::Vector3d& omega) {
  const double t = omega.norm();
  const Eigen::Matrix3d wx = hat(omega);
  return Eigen::Matrix3d::Identity() + coef_b(t) * wx + coef_c(t) * wx * wx;
}

Eigen::Matrix3d left_jacobian_inv_so3(const Eigen::Vector3d& omega) {
  const double t = omega.norm();
  const Eigen::Matrix3d wx = hat(omega);
  double c;  // 1/t^2 - (1 + cos t) / (2 t sin t)
  const double t2 = t * t;
  if (t < kSmallAngle) {
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    c = 1.0 / t2 - (1.0 + std::cos(t)) / (2.0 * t * std::sin(t));
  }
  return Eigen::Matrix3d::Identity() - 0.5 * wx + c * wx * wx;
}

Pose exp_se3(const Vector6d& xi) {
  const Eigen::Vector3d nu = xi.head<3>();
  const Eigen::Vector3d omega = xi.tail<3>();
  return Pose(exp_so3(omega), left_jacobian_so3(omega) * nu);
}

Vector6d log_se3(const Pose& pose) {
  const Eigen::Vector3d omega = log_so3(pose.rotation());
  Vector6d xi;
  xi.head<3>() = left_jacobian_inv_so3(omega) * pose.translation();
  xi.tail<3>() = omega;
  return xi;
}

Matrix6d adjoint(const Pose& pose) {
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = pose.rotation();
  ad.topRightCorner<3, 3>() = hat(pose.translation()) * pose.rotation();
  ad.bottomRightCorner<3, 3>() = pose.rotation();
  return ad;
}

Matrix6d left_jacobian(const Vector6d& xi) {
  const Eigen::Vector3d nu = xi.head<3>();
  const Eigen::Vector3d omega = xi.tail<3>();
  const Eigen::Matrix3d j = left_jacobian_so3(omega);
  Matrix6d out = Matrix6d::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.topRightCorner<3, 3>() = q_matrix(nu, omega);
  out.bottomRightCorner<3, 3>() = j;
  return out;
}

Matrix6d left_jacobian_inv(const Vector6d& xi) {
  const Eigen::Vector3d omega = xi.tail<3>();
  if (omega.norm() >= kPi - 1e-6) throw AngleNearPi{};
  const Eigen::Vector3d nu = xi.head<3>();
  const Eigen::Matrix3d jinv = left_jacobian_inv_so3(omega);
  Matrix6d out = Matrix6d::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.topRightCorner<3, 3>() = -jinv * q_matrix(nu, omega) * jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  return out;
}

Matrix6d left_jacobian_deriv(const Vector6d& xi, const Vector6d& v) {
  // J_l(xi) = sum_n ad(xi)^n / (n+1)!. Differentiating term by term and using
  // ad(delta) u = -ad(u) delta gives
  //   M = -sum_{n>=1} S_n / (n+1)!,  S_1 = ad(v),  S_{n+1} = A S_n + ad(A^n v)
  // with A = ad(xi). Terms decay factorially; truncation below is exact in
  // double precision for the angles admitted by left_jacobian_inv.
  const Matrix6d a = curly_hat(xi);
  Vector6d w = v;               // A^n v
  Matrix6d s = curly_hat(v);    // S_n
  Matrix6d sum = Matrix6d::Zero();
  double factorial = 1.0;       // (n+1)!
  for (int n = 1; n <= 80; ++n) {
    factorial *= static_cast<double>(n + 1);
    sum += s / factorial;
    const double tail = s.norm() / factorial;
    if (tail < 1e-18 * (1.0 + sum.norm())) break;
    w = a * w;
    s = a * s + curly_hat(w);
  }
  return -sum;
}

Matrix6d left_jacobian_inv_deriv(const Vector6d& xi, const Vector6d& v) {
  // Differentiate J_l(xi) * (J_l^-1(xi) v) = v.
  const Matrix6d jinv = left_jacobian_inv(xi);
  return -jinv * left_jacobian_deriv(xi, jinv * v);
}

}  // namespace ctlo
