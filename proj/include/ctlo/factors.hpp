#pragma once

#include "ctlo/core.hpp"
#include "ctlo/frontend.hpp"
#include "ctlo/se3.hpp"
#include "ctlo/trajectory.hpp"

namespace ctlo {

// Truncated-least-squares outside, Cauchy inside. Both parameters are in
// whitened-error units.
struct RobustKernel {
  double cauchy_k = 1.0;
  double truncation = 5.0;
};

struct RobustEval {
  double cost;
  double weight;  // IRLS weight rho'(e)/e
};

// |e| > truncation -> (0, 0); else Cauchy:
//   cost = (k^2/2) log(1 + (e/k)^2), weight = 1 / (1 + (e/k)^2).
RobustEval robust_weight(double whitened_e, const RobustKernel& kernel);

struct FactorWeights {
  double beta = 0.1;       // Doppler weight on the squared error
  double p2p_sigma = 0.1;  // point-to-plane noise std (m)
  double dv_sigma = 0.1;   // Doppler noise std (m/s)
};

// Fixed vehicle-to-lidar transform with its adjoint kept in sync.
struct Extrinsic {
  Extrinsic() : Extrinsic(Pose::Identity()) {}
  explicit Extrinsic(const Pose& t_lv_in) : t_lv(t_lv_in), ad_lv(adjoint(t_lv_in)) {}

  Pose t_lv;
  Matrix6d ad_lv;
};

// Signed point-to-plane distance (m):
//   e = n^T D (p - T_vi(t)^-1 T_lv^-1 q)
double p2p_error(const Correspondence& corr, const Pose& t_vi_at_t, const Extrinsic& ext);

// d e / d (left perturbation of T_vi(t)), 1x6.
Eigen::Matrix<double, 1, 6> p2p_jacobian_pose(const Correspondence& corr, const Pose& t_vi_at_t,
                                              const Extrinsic& ext);

// Robustified contribution of one correspondence; whitened error is
// alpha^2 * e / p2p_sigma.
struct WeightedResidual {
  double whitened;
  double cost;
  double weight;
};
WeightedResidual p2p_weighted(const Correspondence& corr, const Pose& t_vi_at_t,
                              const Extrinsic& ext, const FactorWeights& weights,
                              const RobustKernel& kernel);

// Predicted Doppler velocity of a static point:
//   d^T D q^odot Ad(T_lv) w,  d = Dq / ||Dq||
// equivalently d . (nu_l + omega_l x q) with [nu_l; omega_l] = Ad(T_lv) w.
double dv_predict(const Eigen::Vector3d& q, const Twist& twist_at_t, const Extrinsic& ext);

// Measured minus predicted (m/s). Whitening (sqrt(beta)/dv_sigma) is applied
// by dv_weighted / the solver, not here.
double dv_error(const LidarPoint& point, const Twist& twist_at_t, const Extrinsic& ext);

WeightedResidual dv_weighted(const LidarPoint& point, const Twist& twist_at_t,
                             const Extrinsic& ext, const FactorWeights& weights,
                             const RobustKernel& kernel);

// d (predicted) / d twist, 1x6; constant per point.
Eigen::Matrix<double, 1, 6> dv_jacobian_twist(const Eigen::Vector3d& q, const Extrinsic& ext);

// Raw-error gradients chained through GP interpolation, w.r.t. the two
// bracketing knots' 12 local coordinates each.
struct KnotGradient {
  Eigen::Matrix<double, 1, 12> wrt_prev;
  Eigen::Matrix<double, 1, 12> wrt_next;
};

KnotGradient p2p_jacobian(const Correspondence& corr, const InterpolatedState& state,
                          const Extrinsic& ext);
KnotGradient dv_jacobian(const LidarPoint& point, const InterpolatedState& state,
                         const Extrinsic& ext);

}  // namespace ctlo
