#include "ctlo/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>

namespace ctlo {

namespace {

struct LocalDiff {
  Vector12d delta;
  Matrix12d jac;  // d delta / d (left pose perturbation, twist delta)
};

// Local coordinates of state around anchor: [log(T T_anchor^-1); w - w_anchor].
LocalDiff local_diff(const TrajectoryKnot& state, const TrajectoryKnot& anchor) {
  LocalDiff out;
  const Vector6d xi = log_se3(state.pose * anchor.pose.inverse());
  out.delta.head<6>() = xi;
  out.delta.tail<6>() = state.twist.vec() - anchor.twist.vec();
  out.jac = Matrix12d::Zero();
  out.jac.topLeftCorner<6, 6>() = left_jacobian_inv(xi);
  out.jac.bottomRightCorner<6, 6>().setIdentity();
  return out;
}

struct MeasEval {
  int pair = 0;  // factors of frame i connect knots i and i+1
  double u = 0.0;
  double w = 0.0;
  double cost = 0.0;
  Eigen::Matrix<double, 1, 24> jac = Eigen::Matrix<double, 1, 24>::Zero();
};

struct MeasTask {
  int frame;
  bool is_p2p;
  int idx;
};

std::vector<MeasTask> collect_tasks(const SlidingWindow& window, bool use_doppler) {
  std::vector<MeasTask> tasks;
  for (int f = 0; f < static_cast<int>(window.frames.size()); ++f) {
    const auto& ff = window.frames[f];
    for (int i = 0; i < static_cast<int>(ff.p2p.size()); ++i) tasks.push_back({f, true, i});
    if (use_doppler)
      for (int i = 0; i < static_cast<int>(ff.doppler.size()); ++i)
        tasks.push_back({f, false, i});
  }
  return tasks;
}

// Evaluates every measurement factor (residual, robust weight, and optionally
// the whitened Jacobian w.r.t. the bracketing knots) into per-task slots.
std::vector<MeasEval> evaluate_measurements(const SlidingWindow& window,
                                            const FactorParams& params, int num_threads,
                                            bool with_jacobians,
                                            const std::vector<MeasTask>& tasks) {
  // Truncated least squares plateaus at the boundary value; counting zero for
  // rejected residuals would make rejection look like progress to the step
  // acceptance test.
  const double p2p_ceiling = robust_weight(params.p2p_kernel.truncation, params.p2p_kernel).cost;
  const double dv_ceiling = robust_weight(params.dv_kernel.truncation, params.dv_kernel).cost;

  const int n_pairs = static_cast<int>(window.frames.size());
  std::vector<KnotPairCache> caches;
  caches.reserve(n_pairs);
  for (int i = 0; i < n_pairs; ++i)
    caches.push_back(make_pair_cache(window.knots[i].state, window.knots[i + 1].state));

  std::vector<MeasEval> evals(tasks.size());
  std::atomic<bool> failed{false};
  parallel_for(static_cast<int>(tasks.size()), num_threads, [&](int t) {
    try {
      const MeasTask& task = tasks[t];
      const auto& ff = window.frames[task.frame];
      MeasEval ev;
      ev.pair = task.frame;
      if (task.is_p2p) {
        const Correspondence& corr = ff.p2p[task.idx];
        const double scale =
            corr.alpha * corr.alpha / params.weights.p2p_sigma;  // whitening factor
        if (with_jacobians) {
          const InterpolatedState st = interpolate_cached(caches[task.frame],
                                                          corr.query.timestamp);
          const double e = p2p_error(corr, st.pose, params.extrinsic);
          ev.u = scale * e;
          const RobustEval rw = robust_weight(ev.u, params.p2p_kernel);
          ev.w = rw.weight;
          ev.cost = rw.weight > 0.0 ? rw.cost : p2p_ceiling;
          if (ev.w > 0.0) {
            const KnotGradient g = p2p_jacobian(corr, st, params.extrinsic);
            ev.jac.leftCols<12>() = scale * g.wrt_prev;
            ev.jac.rightCols<12>() = scale * g.wrt_next;
          }
        } else {
          const TrajectoryKnot st = interpolate_state_cached(caches[task.frame],
                                                             corr.query.timestamp);
          const double e = p2p_error(corr, st.pose, params.extrinsic);
          ev.u = scale * e;
          const RobustEval rw = robust_weight(ev.u, params.p2p_kernel);
          ev.w = rw.weight;
          ev.cost = rw.weight > 0.0 ? rw.cost : p2p_ceiling;
        }
      } else {
        const LidarPoint& pt = ff.doppler[task.idx];
        const double scale = std::sqrt(params.weights.beta) / params.weights.dv_sigma;
        if (with_jacobians) {
          const InterpolatedState st = interpolate_cached(caches[task.frame], pt.timestamp);
          const double e = dv_error(pt, st.twist, params.extrinsic);
          ev.u = scale * e;
          const RobustEval rw = robust_weight(ev.u, params.dv_kernel);
          ev.w = rw.weight;
          ev.cost = rw.weight > 0.0 ? rw.cost : dv_ceiling;
          if (ev.w > 0.0) {
            const KnotGradient g = dv_jacobian(pt, st, params.extrinsic);
            ev.jac.leftCols<12>() = scale * g.wrt_prev;
            ev.jac.rightCols<12>() = scale * g.wrt_next;
          }
        } else {
          const TrajectoryKnot st = interpolate_state_cached(caches[task.frame], pt.timestamp);
          const double e = dv_error(pt, st.twist, params.extrinsic);
          ev.u = scale * e;
          const RobustEval rw = robust_weight(ev.u, params.dv_kernel);
          ev.w = rw.weight;
          ev.cost = rw.weight > 0.0 ? rw.cost : dv_ceiling;
        }
      }
      evals[t] = ev;
    } catch (...) {
      failed.store(true);
    }
  });
  if (failed.load()) log_warn("measurement factor evaluation failed for some points");
  return evals;
}

// Structural lock: zero the rows/columns of locked coordinates and put 1 on
// their diagonal so the solve returns exactly zero for them.
void mask_block_rows(Matrix12d* block, const WindowKnot& knot, bool also_diag) {
  if (knot.pose_fixed) {
    block->topRows<6>().setZero();
    if (also_diag) block->topLeftCorner<6, 6>().diagonal().setOnes();
  }
  if (knot.twist_fixed) {
    block->bottomRows<6>().setZero();
    if (also_diag) block->bottomRightCorner<6, 6>().diagonal().setOnes();
  }
}

void mask_block_cols(Matrix12d* block, const WindowKnot& knot) {
  if (knot.pose_fixed) block->leftCols<6>().setZero();
  if (knot.twist_fixed) block->rightCols<6>().setZero();
}

void mask_rhs(Eigen::Ref<Vector12d> rhs, const WindowKnot& knot) {
  if (knot.pose_fixed) rhs.head<6>().setZero();
  if (knot.twist_fixed) rhs.tail<6>().setZero();
}

double marginal_cost(const MarginalPrior& marginal, const TrajectoryKnot& state) {
  const LocalDiff d = local_diff(state, marginal.anchor);
  return 0.5 * d.delta.dot(marginal.info * d.delta) - marginal.rhs.dot(d.delta);
}

}  // namespace

Eigen::MatrixXd NormalEquations::dense() const {
  const int m = static_cast<int>(diag.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(12 * m, 12 * m);
  for (int i = 0; i < m; ++i) {
    h.block<12, 12>(12 * i, 12 * i) = diag[i];
    if (i + 1 < m) {
      h.block<12, 12>(12 * i, 12 * (i + 1)) = upper[i];
      h.block<12, 12>(12 * (i + 1), 12 * i) = upper[i].transpose();
    }
  }
  return h;
}

NormalEquations build_normal_equations(const SlidingWindow& window, const FactorParams& params,
                                       int num_threads) {
  const int n = static_cast<int>(window.knots.size());

  NormalEquations neq;
  neq.diag.assign(std::max(n, 0), Matrix12d::Zero());
  neq.upper.assign(std::max(n - 1, 0), Matrix12d::Zero());
  neq.rhs = Eigen::VectorXd::Zero(12 * std::max(n, 0));

  // Marginal prior on the oldest knot.
  if (window.marginal.valid && n > 0) {
    const LocalDiff d = local_diff(window.knots[0].state, window.marginal.anchor);
    neq.diag[0] += d.jac.transpose() * window.marginal.info * d.jac;
    neq.rhs.head<12>() +=
        d.jac.transpose() * (window.marginal.rhs - window.marginal.info * d.delta);
    neq.cost += marginal_cost(window.marginal, window.knots[0].state);
  }

  // Motion prior factors between adjacent knots.
  for (int i = 0; i + 1 < n; ++i) {
    const PriorError pe =
        prior_error(window.knots[i].state, window.knots[i + 1].state, params.prior);
    const Matrix12d info = wnoa_information(window.knots[i + 1].state.time -
                                                window.knots[i].state.time,
                                            params.prior);
    neq.cost += 0.5 * pe.error.dot(info * pe.error);
    neq.diag[i] += pe.jac_prev.transpose() * info * pe.jac_prev;
    neq.upper[i] += pe.jac_prev.transpose() * info * pe.jac_next;
    neq.rhs.segment<12>(12 * i) -= pe.jac_prev.transpose() * info * pe.error;
    neq.diag[i + 1] += pe.jac_next.transpose() * info * pe.jac_next;
    neq.rhs.segment<12>(12 * (i + 1)) -= pe.jac_next.transpose() * info * pe.error;
  }

  // Measurement factors, evaluated in parallel and reduced in task order.
  const std::vector<MeasTask> tasks = collect_tasks(window, params.use_doppler);
  const std::vector<MeasEval> evals =
      evaluate_measurements(window, params, num_threads, true, tasks);
  for (const MeasEval& ev : evals) {
    neq.cost += ev.cost;
    if (ev.w <= 0.0) continue;
    const int i = ev.pair;
    const auto jp = ev.jac.leftCols<12>();
    const auto jn = ev.jac.rightCols<12>();
    neq.diag[i] += ev.w * jp.transpose() * jp;
    neq.upper[i] += ev.w * jp.transpose() * jn;
    neq.rhs.segment<12>(12 * i) -= ev.w * jp.transpose() * ev.u;
    neq.diag[i + 1] += ev.w * jn.transpose() * jn;
    neq.rhs.segment<12>(12 * (i + 1)) -= ev.w * jn.transpose() * ev.u;
  }

  // Structural locks.
  for (int i = 0; i < n; ++i) {
    const WindowKnot& knot = window.knots[i];
    if (!knot.pose_fixed && !knot.twist_fixed) continue;
    mask_block_rows(&neq.diag[i], knot, true);
    Matrix12d diag_t = neq.diag[i].transpose();
    mask_block_rows(&diag_t, knot, true);
    neq.diag[i] = diag_t.transpose();
    if (i > 0) mask_block_cols(&neq.upper[i - 1], knot);
    if (i + 1 < n) mask_block_rows(&neq.upper[i], knot, false);
    mask_rhs(neq.rhs.segment<12>(12 * i), knot);
  }
  return neq;
}

double total_cost(const SlidingWindow& window, const FactorParams& params, int num_threads) {
  double cost = 0.0;
  const int n = static_cast<int>(window.knots.size());
  if (window.marginal.valid && n > 0)
    cost += marginal_cost(window.marginal, window.knots[0].state);
  for (int i = 0; i + 1 < n; ++i) {
    const PriorError pe =
        prior_error(window.knots[i].state, window.knots[i + 1].state, params.prior);
    const Matrix12d info = wnoa_information(
        window.knots[i + 1].state.time - window.knots[i].state.time, params.prior);
    cost += 0.5 * pe.error.dot(info * pe.error);
  }
  const std::vector<MeasTask> tasks = collect_tasks(window, params.use_doppler);
  const std::vector<MeasEval> evals =
      evaluate_measurements(window, params, num_threads, false, tasks);
  for (const MeasEval& ev : evals) cost += ev.cost;
  return cost;
}

bool solve_block_tridiagonal(const NormalEquations& neq, Eigen::VectorXd& delta) {
  const int m = static_cast<int>(neq.diag.size());
  delta.resize(12 * m);
  if (m == 0) return true;

  // H = L L^T with lower block-bidiagonal L.
  std::vector<Eigen::LLT<Matrix12d>> llt(m);
  std::vector<Matrix12d> sub(std::max(m - 1, 0));  // L(i+1, i)
  Matrix12d pivot = neq.diag[0];
  for (int i = 0;; ++i) {
    llt[i].compute(pivot);
    if (llt[i].info() != Eigen::Success) return false;
    if (i + 1 >= m) break;
    // L(i+1,i) = U_i^T L_ii^-T
    sub[i] = llt[i].matrixL().solve(neq.upper[i]).transpose();
    pivot = neq.diag[i + 1] - sub[i] * sub[i].transpose();
  }

  // forward: L y = b
  std::vector<Vector12d> y(m);
  for (int i = 0; i < m; ++i) {
    Vector12d r = neq.rhs.segment<12>(12 * i);
    if (i > 0) r -= sub[i - 1] * y[i - 1];
    y[i] = llt[i].matrixL().solve(r);
  }
  // backward: L^T x = y
  for (int i = m - 1; i >= 0; --i) {
    Vector12d r = y[i];
    if (i + 1 < m) r -= sub[i].transpose() * delta.segment<12>(12 * (i + 1));
    delta.segment<12>(12 * i) = llt[i].matrixL().transpose().solve(r);
  }
  return true;
}

void apply_step(SlidingWindow& window, const Eigen::VectorXd& delta) {
  for (int j = 0; j < static_cast<int>(window.knots.size()); ++j) {
    auto& knot = window.knots[j];
    Vector12d d = delta.segment<12>(12 * j);
    if (knot.pose_fixed) d.head<6>().setZero();
    if (knot.twist_fixed) d.tail<6>().setZero();
    if (!knot.pose_fixed) {
      knot.state.pose = exp_se3(d.head<6>()) * knot.state.pose;
      knot.state.pose.reorthonormalize();
    }
    knot.state.twist = Twist::from_vec(knot.state.twist.vec() + d.tail<6>());
  }
}

StepResult gauss_newton_step(SlidingWindow& window, const NormalEquations& neq,
                             const FactorParams& params, int num_threads) {
  StepResult result;
  const int m = static_cast<int>(neq.diag.size());
  if (m == 0) {
    result.accepted = true;
    return result;
  }

  std::vector<TrajectoryKnot> saved;
  saved.reserve(m);
  for (int j = 0; j < m; ++j) saved.push_back(window.knots[j].state);
  auto restore = [&] {
    for (int j = 0; j < m; ++j) window.knots[j].state = saved[j];
  };

  Eigen::VectorXd delta;
  double lambda = 0.0;
  for (int tries = 0; tries <= 8; ++tries) {
    NormalEquations damped = neq;
    if (lambda > 0.0) {
      for (auto& d : damped.diag) {
        const Vector12d dd = d.diagonal();
        d += Matrix12d((lambda * dd).asDiagonal());
      }
    }
    if (solve_block_tridiagonal(damped, delta)) {
      apply_step(window, delta);
      const double new_cost = total_cost(window, params, num_threads);
      if (new_cost <= neq.cost + 1e-12) {
        result.accepted = true;
        result.step_norm = delta.norm();
        result.lm_tries = tries;
        return result;
      }
      restore();
    }
    lambda = (lambda == 0.0) ? 1e-4 : lambda * 10.0;
    result.lm_tries = tries + 1;
  }
  restore();
  return result;  // no acceptable step
}

TrajectoryKnot marginalize_oldest(SlidingWindow& window, const FactorParams& params) {
  if (window.knots.size() < 2 || window.frames.empty())
    throw std::logic_error("marginalize_oldest needs at least two knots");

  const WindowKnot& k0 = window.knots[0];
  const WindowKnot& k1 = window.knots[1];

  // Joint information over (k0, k1) from everything that touches k0,
  // linearized at the current estimates.
  Eigen::Matrix<double, 24, 24> h = Eigen::Matrix<double, 24, 24>::Zero();
  Eigen::Matrix<double, 24, 1> b = Eigen::Matrix<double, 24, 1>::Zero();

  if (window.marginal.valid) {
    const LocalDiff d = local_diff(k0.state, window.marginal.anchor);
    h.topLeftCorner<12, 12>() += d.jac.transpose() * window.marginal.info * d.jac;
    b.head<12>() += d.jac.transpose() * (window.marginal.rhs - window.marginal.info * d.delta);
  }

  {
    const PriorError pe = prior_error(k0.state, k1.state, params.prior);
    const Matrix12d info =
        wnoa_information(k1.state.time - k0.state.time, params.prior);
    h.topLeftCorner<12, 12>() += pe.jac_prev.transpose() * info * pe.jac_prev;
    h.topRightCorner<12, 12>() += pe.jac_prev.transpose() * info * pe.jac_next;
    h.bottomRightCorner<12, 12>() += pe.jac_next.transpose() * info * pe.jac_next;
    b.head<12>() -= pe.jac_prev.transpose() * info * pe.error;
    b.tail<12>() -= pe.jac_next.transpose() * info * pe.error;
  }

  {
    SlidingWindow oldest_only;
    oldest_only.knots.push_back(k0);
    oldest_only.knots.push_back(k1);
    oldest_only.frames.push_back(window.frames[0]);
    const std::vector<MeasTask> tasks = collect_tasks(oldest_only, params.use_doppler);
    const std::vector<MeasEval> evals =
        evaluate_measurements(oldest_only, params, 1, true, tasks);
    for (const MeasEval& ev : evals) {
      if (ev.w <= 0.0) continue;
      const auto jp = ev.jac.leftCols<12>();
      const auto jn = ev.jac.rightCols<12>();
      h.topLeftCorner<12, 12>() += ev.w * jp.transpose() * jp;
      h.topRightCorner<12, 12>() += ev.w * jp.transpose() * jn;
      h.bottomRightCorner<12, 12>() += ev.w * jn.transpose() * jn;
      b.head<12>() -= ev.w * jp.transpose() * ev.u;
      b.tail<12>() -= ev.w * jn.transpose() * ev.u;
    }
  }
  h.bottomLeftCorner<12, 12>() = h.topRightCorner<12, 12>().transpose();

  // Locked coordinates carry no uncertainty: remove them from the joint.
  // Departing-knot locks get a unit pivot so the Schur step is well posed.
  auto mask_joint = [&](const WindowKnot& knot, int offset, bool unit_pivot) {
    auto zero_dim = [&](int at) {
      h.row(at).setZero();
      h.col(at).setZero();
      if (unit_pivot) h(at, at) = 1.0;
      b(at) = 0.0;
    };
    if (knot.pose_fixed)
      for (int d = 0; d < 6; ++d) zero_dim(offset + d);
    if (knot.twist_fixed)
      for (int d = 0; d < 6; ++d) zero_dim(offset + 6 + d);
  };
  mask_joint(k0, 0, true);
  mask_joint(k1, 12, false);

  MarginalPrior next;
  next.valid = true;
  next.anchor = k1.state;
  Matrix12d h00 = h.topLeftCorner<12, 12>();
  Eigen::LLT<Matrix12d> llt(h00);
  if (llt.info() != Eigen::Success) {
    log_warn("singular marginal block, regularizing");
    h00 += 1e-9 * Matrix12d::Identity();
    llt.compute(h00);
  }
  const Matrix12d h01 = h.topRightCorner<12, 12>();
  const Matrix12d h00_inv_h01 = llt.solve(h01);
  next.info = h.bottomRightCorner<12, 12>() - h01.transpose() * h00_inv_h01;
  next.rhs = b.tail<12>() - h00_inv_h01.transpose() * b.head<12>();
  // keep symmetric against round-off
  next.info = 0.5 * (next.info + next.info.transpose()).eval();

  const TrajectoryKnot departing = k0.state;
  window.marginal = next;
  window.knots.pop_front();
  window.frames.pop_front();
  return departing;
}

std::optional<Eigen::Vector3d> doppler_velocity_lsq(const std::vector<LidarPoint>& points,
                                                    const Eigen::Vector3d& omega_l,
                                                    double trim_threshold, int min_points) {
  std::vector<char> keep(points.size(), 1);
  Eigen::Vector3d nu = Eigen::Vector3d::Zero();
  for (int round = 0; round < 2; ++round) {
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    int used = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!keep[i] || !points[i].has_doppler()) continue;
      const Eigen::Vector3d& q = points[i].position;
      if (q.norm() < 1e-6) continue;
      const Eigen::Vector3d d = q.normalized();
      const double rhs = points[i].doppler - d.dot(omega_l.cross(q));
      ata += d * d.transpose();
      atb += d * rhs;
      ++used;
    }
    if (used < min_points) return std::nullopt;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(ata);
    // all three directions must be excited for a usable fit
    if (es.eigenvalues()(0) < 0.005 * used) return std::nullopt;
    nu = es.eigenvectors() *
         (es.eigenvalues().cwiseInverse().asDiagonal() * (es.eigenvectors().transpose() * atb));
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!points[i].has_doppler() || points[i].position.norm() < 1e-6) continue;
      const Eigen::Vector3d d = points[i].position.normalized();
      const double res =
          points[i].doppler - d.dot(nu + omega_l.cross(points[i].position));
      keep[i] = std::abs(res) <= trim_threshold ? 1 : 0;
    }
  }
  return nu;
}

std::vector<Correspondence> associate(const std::vector<LidarPoint>& points,
                                      const TrajectoryKnot& k_prev, const TrajectoryKnot& k_next,
                                      const LocalMap& map, const FactorParams& params,
                                      const SolverConfig& config) {
  if (map.empty() || points.empty()) return {};

  const KnotPairCache cache = make_pair_cache(k_prev, k_next);
  std::vector<std::optional<Correspondence>> slots(points.size());
  parallel_for(static_cast<int>(points.size()), config.num_threads, [&](int i) {
    try {
      const LidarPoint& pt = points[i];
      const TrajectoryKnot st = interpolate_state_cached(cache, pt.timestamp);
      const Eigen::Vector3d world =
          st.pose.inverse() * (params.extrinsic.t_lv.inverse() * pt.position);
      const auto nn = map.nearest_neighbors(world, 1, config.max_association_distance);
      if (nn.empty()) return;
      const auto neighbors =
          map.nearest_neighbors(nn[0], config.neighbors, config.neighbor_search_radius);
      if (static_cast<int>(neighbors.size()) < config.min_neighbors) return;
      const PlaneFit fit = plane_fit(neighbors);
      slots[i] = Correspondence{pt, nn[0], fit.normal, fit.alpha,
                                {fit.sigma1, fit.sigma2, fit.sigma3}};
    } catch (const DegenerateNeighborhood&) {
      // skipped
    }
  });

  std::vector<Correspondence> out;
  out.reserve(points.size());
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

AlignResult align_frame(SlidingWindow& window, const LidarFrame& keypoints, LocalMap& map,
                        const SolverConfig& config, const FactorParams& params,
                        std::vector<TrajectoryKnot>& published, StageTimers* timers) {
  if (window.knots.empty()) throw std::logic_error("align_frame on an empty window");
  if (keypoints.end_time <= window.knots.back().state.time) throw NonPositiveDt{};

  // New knot at the frame end, constant-velocity initialization.
  window.knots.push_back(
      WindowKnot{extrapolate(window.knots.back().state, keypoints.end_time), false});

  FrameFactors ff;
  ff.frame_index = keypoints.index;
  ff.start_time = keypoints.start_time;
  ff.end_time = keypoints.end_time;

  const auto& k_prev = window.knots[window.knots.size() - 2];
  for (const auto& pt : keypoints.points) {
    if (pt.timestamp < k_prev.state.time || pt.timestamp > keypoints.end_time)
      throw FactorOutsideWindow{};
  }

  // Cap the factor count per frame with a deterministic stride.
  std::vector<LidarPoint> pts;
  const int n_pts = static_cast<int>(keypoints.points.size());
  if (n_pts > config.max_correspondences) {
    const double stride = static_cast<double>(n_pts) / config.max_correspondences;
    pts.reserve(config.max_correspondences);
    for (int i = 0; i < config.max_correspondences; ++i)
      pts.push_back(keypoints.points[static_cast<int>(i * stride)]);
  } else {
    pts = keypoints.points;
  }

  if (params.use_doppler)
    for (const auto& pt : pts)
      if (pt.has_doppler()) ff.doppler.push_back(pt);

  // Seed the appended knot's translational velocity from the Doppler channel;
  // without this a fast cold start leaves every factor beyond its truncation.
  if (params.use_doppler && config.doppler_velocity_init &&
      static_cast<int>(ff.doppler.size()) >= config.min_doppler_init_points) {
    auto& knot = window.knots.back().state;
    const Vector6d w_l = params.extrinsic.ad_lv * knot.twist.vec();
    const double raw_trunc =
        params.dv_kernel.truncation * params.weights.dv_sigma / std::sqrt(params.weights.beta);
    const auto nu_l = doppler_velocity_lsq(ff.doppler, w_l.tail<3>(), raw_trunc,
                                           config.min_doppler_init_points);
    if (nu_l) {
      // invert the nu row of Ad(T_lv) with omega kept from extrapolation
      const Eigen::Matrix3d& r = params.extrinsic.t_lv.rotation();
      const Eigen::Vector3d t = params.extrinsic.t_lv.translation();
      knot.twist.nu = r.transpose() * (*nu_l - t.cross(r * knot.twist.omega));
      // keep the knot on the constant-twist flow of the refined velocity
      const auto& prev = window.knots[window.knots.size() - 2].state;
      knot.pose = exp_se3((knot.time - prev.time) * knot.twist.vec()) * prev.pose;
    }
  }

  window.frames.push_back(std::move(ff));

  // Snapshot for divergence recovery.
  std::vector<TrajectoryKnot> entry_states;
  for (const auto& k : window.knots) entry_states.push_back(k.state);

  AlignResult result;
  double prev_step_norm = -1.0;
  int growth_streak = 0;

  // wider p2p gate while the initial association is in force
  FactorParams initial_params = params;
  initial_params.p2p_kernel.truncation *= config.initial_truncation_scale;

  const int ki = static_cast<int>(window.knots.size()) - 2;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    result.iterations = iter + 1;
    if (iter % config.reassociate_every == 0) {
      StageTimers::Scope scope(timers, Stage::Association);
      window.frames.back().p2p = associate(pts, window.knots[ki].state,
                                           window.knots[ki + 1].state, map, params, config);
    }
    const FactorParams& iter_params = iter < config.reassociate_every ? initial_params : params;
    NormalEquations neq;
    {
      StageTimers::Scope scope(timers, Stage::FactorEvaluation);
      neq = build_normal_equations(window, iter_params, config.num_threads);
    }
    StepResult step;
    {
      StageTimers::Scope scope(timers, Stage::LinearSolve);
      step = gauss_newton_step(window, neq, iter_params, config.num_threads);
    }
    if (!step.accepted) break;  // no descent direction left on this linearization
    result.final_step_norm = step.step_norm;
    if (step.step_norm < config.convergence_tol) {
      result.converged = true;
      break;
    }
    if (prev_step_norm > 0.0 && step.step_norm > 5.0 * prev_step_norm) {
      if (++growth_streak >= 2) {
        log_warn("divergence detected on frame " + std::to_string(keypoints.index) +
                 ", keeping extrapolated state");
        for (std::size_t i = 0; i < entry_states.size(); ++i)
          window.knots[i].state = entry_states[i];
        result.diverged = true;
        break;
      }
    } else {
      growth_streak = 0;
    }
    prev_step_norm = step.step_norm;
  }
  result.correspondences = static_cast<int>(window.frames.back().p2p.size());

  // Motion-undistorted map insertion at the converged interpolated poses.
  {
    StageTimers::Scope scope(timers, Stage::MapUpdate);
    const KnotPairCache cache =
        make_pair_cache(window.knots[ki].state, window.knots[ki + 1].state);
    std::vector<Eigen::Vector3d> world(pts.size());
    parallel_for(static_cast<int>(pts.size()), config.num_threads, [&](int i) {
      const TrajectoryKnot st = interpolate_state_cached(cache, pts[i].timestamp);
      world[i] = st.pose.inverse() * (params.extrinsic.t_lv.inverse() * pts[i].position);
    });
    const Eigen::Vector3d center =
        window.knots.back().state.pose.inverse().translation();
    map.insert_frame(world, center);
  }

  {
    StageTimers::Scope scope(timers, Stage::Marginalization);
    while (static_cast<int>(window.knots.size()) > config.window_size + 1)
      published.push_back(marginalize_oldest(window, params));
  }
  return result;
}

}  // namespace ctlo
