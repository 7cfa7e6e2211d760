#include "ctlo/factors.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace ctlo {

RobustEval robust_weight(double whitened_e, const RobustKernel& kernel) {
  if (std::abs(whitened_e) > kernel.truncation) return RobustEval{0.0, 0.0};
  const double r = whitened_e / kernel.cauchy_k;
  const double cost = 0.5 * kernel.cauchy_k * kernel.cauchy_k * std::log1p(r * r);
  return RobustEval{cost, 1.0 / (1.0 + r * r)};
}

double p2p_error(const Correspondence& corr, const Pose& t_vi_at_t, const Extrinsic& ext) {
  const Eigen::Vector3d world_q =
      t_vi_at_t.inverse() * (ext.t_lv.inverse() * corr.query.position);
  return corr.normal.dot(corr.map_point - world_q);
}

Eigen::Matrix<double, 1, 6> p2p_jacobian_pose(const Correspondence& corr, const Pose& t_vi_at_t,
                                              const Extrinsic& ext) {
  // e = n^T D (p - T_vi^-1 s), s = T_lv^-1 q. Perturbing T_vi on the left:
  //   d e = n^T D T_vi^-1 s^odot delta
  const Eigen::Vector4d s = ext.t_lv.inverse() * corr.query.homogeneous();
  const Eigen::Matrix4d t_inv = t_vi_at_t.inverse().matrix();
  return corr.normal.transpose() * projection_d() * t_inv * odot(s);
}

WeightedResidual p2p_weighted(const Correspondence& corr, const Pose& t_vi_at_t,
                              const Extrinsic& ext, const FactorWeights& weights,
                              const RobustKernel& kernel) {
  const double e = p2p_error(corr, t_vi_at_t, ext);
  const double whitened = corr.alpha * corr.alpha * e / weights.p2p_sigma;
  const RobustEval rw = robust_weight(whitened, kernel);
  return WeightedResidual{whitened, rw.cost, rw.weight};
}

double dv_predict(const Eigen::Vector3d& q, const Twist& twist_at_t, const Extrinsic& ext) {
  const double range = q.norm();
  if (range <= 0.0) throw ZeroRangePoint{};
  const Vector6d w_l = ext.ad_lv * twist_at_t.vec();
  // d . (nu_l + omega_l x q)
  return q.dot(w_l.head<3>() + w_l.tail<3>().cross(q)) / range;
}

double dv_error(const LidarPoint& point, const Twist& twist_at_t, const Extrinsic& ext) {
  if (!point.has_doppler()) throw MissingDoppler{};
  return point.doppler - dv_predict(point.position, twist_at_t, ext);
}

WeightedResidual dv_weighted(const LidarPoint& point, const Twist& twist_at_t,
                             const Extrinsic& ext, const FactorWeights& weights,
                             const RobustKernel& kernel) {
  const double e = dv_error(point, twist_at_t, ext);
  const double whitened = std::sqrt(weights.beta) * e / weights.dv_sigma;
  const RobustEval rw = robust_weight(whitened, kernel);
  return WeightedResidual{whitened, rw.cost, rw.weight};
}

Eigen::Matrix<double, 1, 6> dv_jacobian_twist(const Eigen::Vector3d& q, const Extrinsic& ext) {
  const double range = q.norm();
  if (range <= 0.0) throw ZeroRangePoint{};
  const Eigen::Vector4d qh = ctlo::homogeneous(q);
  return (qh.head<3>().transpose() / range) * projection_d() * odot(qh) * ext.ad_lv;
}

KnotGradient p2p_jacobian(const Correspondence& corr, const InterpolatedState& state,
                          const Extrinsic& ext) {
  const Eigen::Matrix<double, 1, 6> de_dpose = p2p_jacobian_pose(corr, state.pose, ext);
  KnotGradient g;
  g.wrt_prev = de_dpose * state.jac_prev.topRows<6>();
  g.wrt_next = de_dpose * state.jac_next.topRows<6>();
  return g;
}

KnotGradient dv_jacobian(const LidarPoint& point, const InterpolatedState& state,
                         const Extrinsic& ext) {
  // e = rdot - pred(twist); the pose rows never enter.
  const Eigen::Matrix<double, 1, 6> de_dtwist = -dv_jacobian_twist(point.position, ext);
  KnotGradient g;
  g.wrt_prev = de_dtwist * state.jac_prev.bottomRows<6>();
  g.wrt_next = de_dtwist * state.jac_next.bottomRows<6>();
  return g;
}

}  // namespace ctlo
