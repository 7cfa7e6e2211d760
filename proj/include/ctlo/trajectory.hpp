#pragma once

#include "ctlo/core.hpp"
#include "ctlo/se3.hpp"

namespace ctlo {

// One estimated Markovian state: pose + body-centric velocity at a fixed time.
struct TrajectoryKnot {
  double time = 0.0;
  Pose pose;    // T_vi, world-to-vehicle
  Twist twist;  // body-centric velocity under T_dot = twist^ * T
};

// Power-spectral densities of the white-noise-on-acceleration prior.
struct WnoaPriorParams {
  Vector6d qc_diag = (Vector6d() << 1.0, 1.0, 1.0, 0.1, 0.1, 0.1).finished();
};

// Process-noise covariance between knots dt apart:
//   Q(dt) = [[dt^3/3 Qc, dt^2/2 Qc], [dt^2/2 Qc, dt Qc]]
Matrix12d wnoa_covariance(double dt, const WnoaPriorParams& params);
Matrix12d wnoa_information(double dt, const WnoaPriorParams& params);  // closed-form inverse

struct PriorError {
  Vector12d error;
  Matrix12d covariance;
  // Sensitivities w.r.t. each knot's 12 local coordinates
  // (left pose perturbation stacked over additive twist delta).
  Matrix12d jac_prev;
  Matrix12d jac_next;
};

// WNOA prior error between consecutive knots:
//   e = [ xi - dt * w_prev ; J_l^-1(xi) w_next - w_prev ],  xi = log(T_next T_prev^-1).
// Zero exactly when k_next is the constant-twist flow of k_prev.
PriorError prior_error(const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next,
                       const WnoaPriorParams& params);

struct InterpolatedState {
  Pose pose;
  Twist twist;
  // Rows 0..5: left perturbation of the interpolated pose; rows 6..11: twist
  // delta. Columns likewise per bracketing knot.
  Matrix12d jac_prev;
  Matrix12d jac_next;
};

// Scalar interpolation weights; under the WNOA prior every 6x6 block of
// Psi/Lambda is a multiple of the identity (Qc cancels), so four scalars per
// matrix suffice.
struct InterpWeights {
  double lambda11, lambda12, lambda21, lambda22;
  double psi11, psi12, psi21, psi22;
};
InterpWeights interp_weights(double t_prev, double t_next, double tau);

// Terms shared by every query inside one knot interval; factor evaluation
// recomputes them once per interval per linearization.
struct KnotPairCache {
  double t_prev, t_next;
  Pose pose_prev;
  Vector6d w_prev;
  Pose t21;
  Vector6d xi21;
  Matrix6d j21_inv;
  Matrix6d ad_t21;
  Vector6d zeta2;          // J_l^-1(xi21) w_next
  Matrix6d dzeta2_dxi21;   // exact derivative of zeta2 w.r.t. xi21
};

KnotPairCache make_pair_cache(const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next);

InterpolatedState interpolate_cached(const KnotPairCache& cache, double tau);

// Pose/twist only; skips the Jacobian bookkeeping.
TrajectoryKnot interpolate_state_cached(const KnotPairCache& cache, double tau);

// Posterior-mean query between two knots:
//   gamma(tau) = Lambda [0; w_prev] + Psi [xi; J_l^-1(xi) w_next]
// with Psi = Q(tau-t_prev) Phi(t_next-tau)^T Q(dt)^-1 and
// Lambda = Phi(tau-t_prev) - Psi Phi(dt); pose recovered as exp(xi_tau^) T_prev.
// Exact at both knots; reproduces constant-twist flows.
InterpolatedState interpolate(const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next,
                              double tau);

// Pose/twist only, without the Jacobian bookkeeping.
TrajectoryKnot interpolate_state(const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next,
                                 double tau);

// Constant-twist flow of the prior mean: pose = exp((tau-t)*twist^) * T, twist kept.
TrajectoryKnot extrapolate(const TrajectoryKnot& knot, double tau);

}  // namespace ctlo
