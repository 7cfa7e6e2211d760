#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "ctlo/factors.hpp"
#include "ctlo/frontend.hpp"
#include "ctlo/timing.hpp"
#include "ctlo/trajectory.hpp"

namespace ctlo {

struct SolverConfig {
  int window_size = 2;  // w: number of jointly aligned frames
  int max_iterations = 40;
  double convergence_tol = 1e-4;  // on the state-update norm
  int reassociate_every = 5;      // iterations between re-associations
  int max_correspondences = 4000;
  int neighbors = 20;      // kNN size for normal estimation
  int min_neighbors = 5;   // below this a correspondence is skipped
  double max_association_distance = 3.0;  // 1-NN beyond this is discarded
  double neighbor_search_radius = 5.0;    // bound for the normal-estimation kNN
  int num_threads = 0;     // 0 = all available
  // wider p2p truncation while the first association is still in force, so a
  // cold start is not rejected wholesale
  double initial_truncation_scale = 4.0;
  // least-squares Doppler velocity initialization of each appended knot
  bool doppler_velocity_init = true;
  int min_doppler_init_points = 30;
};

// Everything factor evaluation needs besides the states.
struct FactorParams {
  WnoaPriorParams prior;
  FactorWeights weights;
  RobustKernel p2p_kernel{1.0, 5.0};   // whitened units: 0.5 m raw / p2p_sigma
  RobustKernel dv_kernel{1.0, 6.33};   // sqrt(beta) * 2.0 m/s raw / dv_sigma
  Extrinsic extrinsic;
  bool use_doppler = true;
};

// Measurement factors of one frame; associations are frozen once the frame's
// own alignment pass finishes.
struct FrameFactors {
  int frame_index = -1;
  double start_time = 0.0;
  double end_time = 0.0;
  std::vector<Correspondence> p2p;
  std::vector<LidarPoint> doppler;
};

// Gaussian prior left behind by marginalization, expressed in the local
// coordinates around a frozen anchor state:
//   cost(delta) = 1/2 delta^T info delta - rhs^T delta.
struct MarginalPrior {
  bool valid = false;
  TrajectoryKnot anchor;
  Matrix12d info = Matrix12d::Zero();
  Vector12d rhs = Vector12d::Zero();
};

// Bootstrap datum knots lock their pose (the gauge) while the twist stays
// estimable; fully locked knots are possible too.
struct WindowKnot {
  TrajectoryKnot state;
  bool pose_fixed = false;
  bool twist_fixed = false;
};

// The w+1 most recent knots plus the factors that connect them. frames[i]
// spans knots[i] -> knots[i+1].
struct SlidingWindow {
  std::deque<WindowKnot> knots;
  std::deque<FrameFactors> frames;
  MarginalPrior marginal;
};

// Symmetric block-tridiagonal normal equations, 12x12 blocks over free knots.
struct NormalEquations {
  std::vector<Matrix12d> diag;
  std::vector<Matrix12d> upper;  // block (i, i+1)
  Eigen::VectorXd rhs;
  double cost = 0.0;  // total robustified cost at the linearization point

  Eigen::MatrixXd dense() const;
};

// H = sum J^T w J, b = -sum J^T w e over marginal-prior, motion-prior and
// measurement factors. Per-factor evaluation runs data-parallel; accumulation
// is ordered, so the result is identical for any thread count.
NormalEquations build_normal_equations(const SlidingWindow& window, const FactorParams& params,
                                       int num_threads);

double total_cost(const SlidingWindow& window, const FactorParams& params, int num_threads);

// Solves H delta = b via block Cholesky on the chain structure. Returns false
// when a diagonal pivot is not positive definite.
bool solve_block_tridiagonal(const NormalEquations& neq, Eigen::VectorXd& delta);

void apply_step(SlidingWindow& window, const Eigen::VectorXd& delta);

struct StepResult {
  double step_norm = 0.0;
  bool accepted = false;
  int lm_tries = 0;
};

// One damped Gauss-Newton step: plain solve first, Levenberg diagonal scaling
// (lambda from 1e-4, x10, at most 8 tries) when the Hessian is indefinite or
// the cost would increase.
StepResult gauss_newton_step(SlidingWindow& window, const NormalEquations& neq,
                             const FactorParams& params, int num_threads);

// Schur-complement elimination of the oldest knot into a Gaussian prior on
// the next one. Returns the departing knot for publication.
TrajectoryKnot marginalize_oldest(SlidingWindow& window, const FactorParams& params);

// Point-to-plane association of keypoints against the map at the current
// interpolated poses. Skips points with too few or degenerate neighborhoods.
std::vector<Correspondence> associate(const std::vector<LidarPoint>& points,
                                      const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next,
                                      const LocalMap& map, const FactorParams& params,
                                      const SolverConfig& config);

// Trimmed least squares for the lidar-frame translational velocity from the
// per-point Doppler channel, given the rotational rate:
//   d_i . nu_l = rdot_i - d_i . (omega_l x q_i)
// Returns nothing when the directions are too few or too degenerate.
std::optional<Eigen::Vector3d> doppler_velocity_lsq(const std::vector<LidarPoint>& points,
                                                    const Eigen::Vector3d& omega_l,
                                                    double trim_threshold, int min_points);

struct AlignResult {
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
  double final_step_norm = 0.0;
  int correspondences = 0;
};

// Appends a knot at the frame end (constant-velocity extrapolation),
// iterates associate/build/step, inserts the motion-undistorted keypoints
// into the map, then marginalizes when the window exceeds its size.
// Departing knots are appended to published.
AlignResult align_frame(SlidingWindow& window, const LidarFrame& keypoints, LocalMap& map,
                        const SolverConfig& config, const FactorParams& params,
                        std::vector<TrajectoryKnot>& published, StageTimers* timers = nullptr);

}  // namespace ctlo
