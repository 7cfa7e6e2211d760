#include "ctlo/frontend.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <queue>

namespace ctlo {

LidarFrame extract_keypoints(const LidarFrame& frame, double grid, std::uint64_t rng_seed) {
  if (frame.points.empty()) throw EmptyFrame{};

  std::unordered_map<VoxelKey, std::vector<int>, VoxelKeyHash> cells;
  for (int i = 0; i < static_cast<int>(frame.points.size()); ++i)
    cells[voxel_of(frame.points[i].position, grid)].push_back(i);

  // One random member per occupied voxel, drawn from a per-voxel seed so the
  // result does not depend on hash-map iteration order.
  std::vector<int> chosen;
  chosen.reserve(cells.size());
  for (const auto& [key, members] : cells) {
    const std::uint64_t r = hash_u64(combine_seed(rng_seed, VoxelKeyHash{}(key)));
    chosen.push_back(members[r % members.size()]);
  }
  std::sort(chosen.begin(), chosen.end(), [&](int a, int b) {
    const double ta = frame.points[a].timestamp;
    const double tb = frame.points[b].timestamp;
    return ta != tb ? ta < tb : a < b;
  });

  LidarFrame out;
  out.index = frame.index;
  out.start_time = frame.start_time;
  out.end_time = frame.end_time;
  out.points.reserve(chosen.size());
  for (int i : chosen) out.points.push_back(frame.points[i]);
  return out;
}

void LocalMap::insert(const Eigen::Vector3d& world_point) {
  const VoxelKey key = voxel_of(world_point, config_.voxel_size);
  auto& cell = voxels_[key];
  if (static_cast<int>(cell.size()) >= config_.max_points_per_voxel) return;
  cell.push_back(StoredPoint{world_point, next_order_++});
  if (size_ == 0) {
    lo_ = hi_ = key;
  } else {
    lo_ = VoxelKey{std::min(lo_.x, key.x), std::min(lo_.y, key.y), std::min(lo_.z, key.z)};
    hi_ = VoxelKey{std::max(hi_.x, key.x), std::max(hi_.y, key.y), std::max(hi_.z, key.z)};
  }
  ++size_;
}

void LocalMap::crop(const Eigen::Vector3d& center) {
  const double r2 = config_.crop_radius * config_.crop_radius;
  for (auto it = voxels_.begin(); it != voxels_.end();) {
    auto& pts = it->second;
    std::erase_if(pts, [&](const StoredPoint& sp) {
      const bool out = (sp.position - center).squaredNorm() > r2;
      if (out) --size_;
      return out;
    });
    it = pts.empty() ? voxels_.erase(it) : std::next(it);
  }
  lo_ = VoxelKey{INT32_MAX, INT32_MAX, INT32_MAX};
  hi_ = VoxelKey{INT32_MIN, INT32_MIN, INT32_MIN};
  for (const auto& [key, pts] : voxels_) {
    lo_ = VoxelKey{std::min(lo_.x, key.x), std::min(lo_.y, key.y), std::min(lo_.z, key.z)};
    hi_ = VoxelKey{std::max(hi_.x, key.x), std::max(hi_.y, key.y), std::max(hi_.z, key.z)};
  }
}

void LocalMap::insert_frame(std::span<const Eigen::Vector3d> world_points,
                            const Eigen::Vector3d& crop_center) {
  for (const auto& p : world_points) insert(p);
  crop(crop_center);
}

std::vector<Eigen::Vector3d> LocalMap::nearest_neighbors(const Eigen::Vector3d& query,
                                                         int count, double max_radius) const {
  if (empty()) throw EmptyMap{};
  const double max_r2 = max_radius * max_radius;

  struct Candidate {
    double dist2;
    std::uint64_t order;
    Eigen::Vector3d position;
  };
  auto worse = [](const Candidate& a, const Candidate& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.order < b.order;
  };
  // max-heap on (dist2, order): top() is the current worst of the best count
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> best(worse);

  const VoxelKey& lo = lo_;
  const VoxelKey& hi = hi_;
  const double s = config_.voxel_size;
  const VoxelKey qv = voxel_of(query, s);

  auto visit = [&](const VoxelKey& key) {
    auto it = voxels_.find(key);
    if (it == voxels_.end()) return;
    for (const auto& sp : it->second) {
      const Candidate c{(sp.position - query).squaredNorm(), sp.order, sp.position};
      if (c.dist2 > max_r2) continue;
      if (static_cast<int>(best.size()) < count) {
        best.push(c);
      } else if (worse(c, best.top())) {
        best.pop();
        best.push(c);
      }
    }
  };

  for (int r = 0;; ++r) {
    // Any voxel in shell r is at least (r-1)*s away from the query point.
    const double shell_min = std::max(0, r - 1) * s;
    if (shell_min * shell_min > max_r2) break;
    if (static_cast<int>(best.size()) == count && best.top().dist2 <= shell_min * shell_min)
      break;
    // Shells beyond this one cannot contain occupied voxels.
    if (qv.x - (r - 1) <= lo.x && qv.x + (r - 1) >= hi.x && qv.y - (r - 1) <= lo.y &&
        qv.y + (r - 1) >= hi.y && qv.z - (r - 1) <= lo.z && qv.z + (r - 1) >= hi.z && r > 0)
      break;
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -r; dz <= r; ++dz) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
          visit(VoxelKey{qv.x + dx, qv.y + dy, qv.z + dz});
        }
      }
    }
  }

  std::vector<Candidate> sorted;
  sorted.reserve(best.size());
  while (!best.empty()) {
    sorted.push_back(best.top());
    best.pop();
  }
  std::reverse(sorted.begin(), sorted.end());
  std::vector<Eigen::Vector3d> out;
  out.reserve(sorted.size());
  for (const auto& c : sorted) out.push_back(c.position);
  return out;
}

PlaneFit plane_fit(std::span<const Eigen::Vector3d> neighbors) {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : neighbors) mean += p;
  mean /= static_cast<double>(neighbors.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : neighbors) {
    const Eigen::Vector3d d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(neighbors.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);  // eigenvalues ascending
  const Eigen::Vector3d evals = es.eigenvalues().cwiseMax(0.0);

  PlaneFit fit;
  fit.sigma1 = std::sqrt(evals(2));
  fit.sigma2 = std::sqrt(evals(1));
  fit.sigma3 = std::sqrt(evals(0));
  if (fit.sigma1 <= 0.0) throw DegenerateNeighborhood{};
  fit.normal = es.eigenvectors().col(0).normalized();
  fit.alpha = (fit.sigma2 - fit.sigma3) / fit.sigma1;
  return fit;
}

}  // namespace ctlo
