#include "ctlo/trajectory.hpp"

#include <cmath>

namespace ctlo {

namespace {

Eigen::Matrix2d q2(double dt) {
  Eigen::Matrix2d q;
  q << dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt;
  return q;
}

Eigen::Matrix2d q2_inv(double dt) {
  Eigen::Matrix2d q;
  q << 12.0 / (dt * dt * dt), -6.0 / (dt * dt), -6.0 / (dt * dt), 4.0 / dt;
  return q;
}

Eigen::Matrix2d phi2(double dt) {
  Eigen::Matrix2d p;
  p << 1.0, dt, 0.0, 1.0;
  return p;
}

}  // namespace

Matrix12d wnoa_covariance(double dt, const WnoaPriorParams& params) {
  if (dt <= 0.0) throw NonPositiveDt{};
  const Eigen::Matrix2d s = q2(dt);
  const Matrix6d qc = params.qc_diag.asDiagonal();
  Matrix12d q = Matrix12d::Zero();
  q.topLeftCorner<6, 6>() = s(0, 0) * qc;
  q.topRightCorner<6, 6>() = s(0, 1) * qc;
  q.bottomLeftCorner<6, 6>() = s(1, 0) * qc;
  q.bottomRightCorner<6, 6>() = s(1, 1) * qc;
  return q;
}

Matrix12d wnoa_information(double dt, const WnoaPriorParams& params) {
  if (dt <= 0.0) throw NonPositiveDt{};
  const Eigen::Matrix2d s = q2_inv(dt);
  const Matrix6d qc_inv = params.qc_diag.cwiseInverse().asDiagonal();
  Matrix12d q = Matrix12d::Zero();
  q.topLeftCorner<6, 6>() = s(0, 0) * qc_inv;
  q.topRightCorner<6, 6>() = s(0, 1) * qc_inv;
  q.bottomLeftCorner<6, 6>() = s(1, 0) * qc_inv;
  q.bottomRightCorner<6, 6>() = s(1, 1) * qc_inv;
  return q;
}

PriorError prior_error(const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next,
                       const WnoaPriorParams& params) {
  const double dt = k_next.time - k_prev.time;
  if (dt <= 0.0) throw NonPositiveDt{};

  const Pose t21 = k_next.pose * k_prev.pose.inverse();
  const Vector6d xi = log_se3(t21);
  const Matrix6d jinv = left_jacobian_inv(xi);
  const Vector6d w1 = k_prev.twist.vec();
  const Vector6d w2 = k_next.twist.vec();

  PriorError out;
  out.error.head<6>() = xi - dt * w1;
  out.error.tail<6>() = jinv * w2 - w1;
  out.covariance = wnoa_covariance(dt, params);

  // d xi / d(left perturbations of T_prev, T_next)
  const Matrix6d dxi_d2 = jinv;
  const Matrix6d dxi_d1 = -jinv * adjoint(t21);
  // d (J_l^-1(xi) w2) / d xi, exact
  const Matrix6d dzeta_dxi = left_jacobian_inv_deriv(xi, w2);

  out.jac_prev = Matrix12d::Zero();
  out.jac_prev.topLeftCorner<6, 6>() = dxi_d1;
  out.jac_prev.topRightCorner<6, 6>() = -dt * Matrix6d::Identity();
  out.jac_prev.bottomLeftCorner<6, 6>() = dzeta_dxi * dxi_d1;
  out.jac_prev.bottomRightCorner<6, 6>() = -Matrix6d::Identity();

  out.jac_next = Matrix12d::Zero();
  out.jac_next.topLeftCorner<6, 6>() = dxi_d2;
  out.jac_next.bottomLeftCorner<6, 6>() = dzeta_dxi * dxi_d2;
  out.jac_next.bottomRightCorner<6, 6>() = jinv;
  return out;
}

InterpWeights interp_weights(double t_prev, double t_next, double tau) {
  const double dt = t_next - t_prev;
  if (dt <= 0.0) throw NonPositiveDt{};
  const Eigen::Matrix2d psi = q2(tau - t_prev) * phi2(t_next - tau).transpose() * q2_inv(dt);
  const Eigen::Matrix2d lambda = phi2(tau - t_prev) - psi * phi2(dt);
  return InterpWeights{lambda(0, 0), lambda(0, 1), lambda(1, 0), lambda(1, 1),
                       psi(0, 0),    psi(0, 1),    psi(1, 0),    psi(1, 1)};
}

KnotPairCache make_pair_cache(const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next) {
  if (k_next.time - k_prev.time <= 0.0) throw NonPositiveDt{};
  KnotPairCache c;
  c.t_prev = k_prev.time;
  c.t_next = k_next.time;
  c.pose_prev = k_prev.pose;
  c.w_prev = k_prev.twist.vec();
  c.t21 = k_next.pose * k_prev.pose.inverse();
  c.xi21 = log_se3(c.t21);
  c.j21_inv = left_jacobian_inv(c.xi21);
  c.ad_t21 = adjoint(c.t21);
  c.zeta2 = c.j21_inv * k_next.twist.vec();
  c.dzeta2_dxi21 = left_jacobian_inv_deriv(c.xi21, k_next.twist.vec());
  return c;
}

InterpolatedState interpolate_cached(const KnotPairCache& cache, double tau) {
  if (tau < cache.t_prev || tau > cache.t_next) throw TauOutOfRange{};

  const InterpWeights w = interp_weights(cache.t_prev, cache.t_next, tau);

  const Vector6d& w1 = cache.w_prev;
  const Vector6d& xi21 = cache.xi21;
  const Matrix6d& j21_inv = cache.j21_inv;
  const Vector6d& zeta2 = cache.zeta2;

  const Vector6d xi_tau = w.lambda12 * w1 + w.psi11 * xi21 + w.psi12 * zeta2;
  const Vector6d zeta_tau = w.lambda22 * w1 + w.psi21 * xi21 + w.psi22 * zeta2;

  const Matrix6d j_tau = left_jacobian(xi_tau);
  const Pose exp_xi_tau = exp_se3(xi_tau);

  InterpolatedState out;
  out.pose = exp_xi_tau * cache.pose_prev;
  out.twist = Twist::from_vec(j_tau * zeta_tau);

  // Chain rule through xi21 and zeta2 = J_l^-1(xi21) w2.
  const Matrix6d dxi21_d2 = j21_inv;
  const Matrix6d dxi21_d1 = -j21_inv * cache.ad_t21;
  const Matrix6d& dzeta2_dxi21 = cache.dzeta2_dxi21;

  // d xi_tau and d zeta_tau w.r.t. [pose1, twist1, pose2, twist2]
  const Matrix6d dxitau_d1 = (w.psi11 * Matrix6d::Identity() + w.psi12 * dzeta2_dxi21) * dxi21_d1;
  const Matrix6d dxitau_d2 = (w.psi11 * Matrix6d::Identity() + w.psi12 * dzeta2_dxi21) * dxi21_d2;
  const Matrix6d dxitau_dw1 = w.lambda12 * Matrix6d::Identity();
  const Matrix6d dxitau_dw2 = w.psi12 * j21_inv;

  const Matrix6d dzetatau_d1 = (w.psi21 * Matrix6d::Identity() + w.psi22 * dzeta2_dxi21) * dxi21_d1;
  const Matrix6d dzetatau_d2 = (w.psi21 * Matrix6d::Identity() + w.psi22 * dzeta2_dxi21) * dxi21_d2;
  const Matrix6d dzetatau_dw1 = w.lambda22 * Matrix6d::Identity();
  const Matrix6d dzetatau_dw2 = w.psi22 * j21_inv;

  // Interpolated pose perturbation: exp((xi+dxi)^) exp(d1^) T_prev
  //   => delta_out = J_l(xi_tau) dxi + Ad(exp(xi_tau)) d1.
  const Matrix6d ad_exp_xi = adjoint(exp_xi_tau);
  // Interpolated twist: w_tau = J_l(xi_tau) zeta_tau.
  const Matrix6d dj_zeta = left_jacobian_deriv(xi_tau, zeta_tau);

  out.jac_prev = Matrix12d::Zero();
  out.jac_prev.topLeftCorner<6, 6>() = j_tau * dxitau_d1 + ad_exp_xi;
  out.jac_prev.topRightCorner<6, 6>() = j_tau * dxitau_dw1;
  out.jac_prev.bottomLeftCorner<6, 6>() = dj_zeta * dxitau_d1 + j_tau * dzetatau_d1;
  out.jac_prev.bottomRightCorner<6, 6>() = dj_zeta * dxitau_dw1 + j_tau * dzetatau_dw1;

  out.jac_next = Matrix12d::Zero();
  out.jac_next.topLeftCorner<6, 6>() = j_tau * dxitau_d2;
  out.jac_next.topRightCorner<6, 6>() = j_tau * dxitau_dw2;
  out.jac_next.bottomLeftCorner<6, 6>() = dj_zeta * dxitau_d2 + j_tau * dzetatau_d2;
  out.jac_next.bottomRightCorner<6, 6>() = dj_zeta * dxitau_dw2 + j_tau * dzetatau_dw2;
  return out;
}

InterpolatedState interpolate(const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next,
                              double tau) {
  return interpolate_cached(make_pair_cache(k_prev, k_next), tau);
}

TrajectoryKnot interpolate_state_cached(const KnotPairCache& cache, double tau) {
  if (tau < cache.t_prev || tau > cache.t_next) throw TauOutOfRange{};

  const InterpWeights w = interp_weights(cache.t_prev, cache.t_next, tau);
  const Vector6d xi_tau = w.lambda12 * cache.w_prev + w.psi11 * cache.xi21 + w.psi12 * cache.zeta2;
  const Vector6d zeta_tau =
      w.lambda22 * cache.w_prev + w.psi21 * cache.xi21 + w.psi22 * cache.zeta2;

  TrajectoryKnot out;
  out.time = tau;
  out.pose = exp_se3(xi_tau) * cache.pose_prev;
  out.twist = Twist::from_vec(left_jacobian(xi_tau) * zeta_tau);
  return out;
}

TrajectoryKnot interpolate_state(const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next,
                                 double tau) {
  return interpolate_state_cached(make_pair_cache(k_prev, k_next), tau);
}

TrajectoryKnot extrapolate(const TrajectoryKnot& knot, double tau) {
  if (tau < knot.time) throw TauBeforeKnot{};
  TrajectoryKnot out;
  out.time = tau;
  out.pose = exp_se3((tau - knot.time) * knot.twist.vec()) * knot.pose;
  out.twist = knot.twist;
  return out;
}

}  // namespace ctlo
