#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "ctlo/core.hpp"
#include "ctlo/se3.hpp"

namespace ctlo {

// One lidar return in the sensor frame. doppler is NaN when the channel is
// absent (non-FMCW data or icp-only ingestion).
struct LidarPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double timestamp = 0.0;
  double doppler = std::numeric_limits<double>::quiet_NaN();

  bool has_doppler() const { return std::isfinite(doppler); }
  Eigen::Vector4d homogeneous() const { return ctlo::homogeneous(position); }
};

struct LidarFrame {
  int index = 0;
  double start_time = 0.0;
  double end_time = 0.0;
  std::vector<LidarPoint> points;
};

// Voxel-grid downsampling: keeps one seeded-random point per grid cell.
// Output is sorted by (timestamp, input order), so it is reproducible
// regardless of hash-map iteration order.
LidarFrame extract_keypoints(const LidarFrame& frame, double grid, std::uint64_t rng_seed);

struct VoxelKey {
  std::int32_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = hash_u64(static_cast<std::uint32_t>(k.x));
    h = hash_u64(h ^ static_cast<std::uint32_t>(k.y));
    h = hash_u64(h ^ static_cast<std::uint32_t>(k.z));
    return static_cast<std::size_t>(h);
  }
};

inline VoxelKey voxel_of(const Eigen::Vector3d& p, double grid) {
  return VoxelKey{static_cast<std::int32_t>(std::floor(p.x() / grid)),
                  static_cast<std::int32_t>(std::floor(p.y() / grid)),
                  static_cast<std::int32_t>(std::floor(p.z() / grid))};
}

// Sparse voxel map of world-frame points with capacity limits and crop radius.
class LocalMap {
 public:
  struct Config {
    double voxel_size = 1.0;
    int max_points_per_voxel = 20;
    double crop_radius = 100.0;
  };

  struct StoredPoint {
    Eigen::Vector3d position;
    std::uint64_t order;  // global insertion counter, breaks kNN ties
  };

  LocalMap() = default;
  explicit LocalMap(const Config& config) : config_(config) {}

  const Config& config() const { return config_; }
  bool empty() const { return size_ == 0; }
  std::size_t size() const { return size_; }

  // Appends points (dropping into full voxels), then crops to the radius
  // around crop_center.
  void insert_frame(std::span<const Eigen::Vector3d> world_points,
                    const Eigen::Vector3d& crop_center);

  void insert(const Eigen::Vector3d& world_point);
  void crop(const Eigen::Vector3d& center);

  // The count nearest stored points, ascending by distance; ties broken by
  // insertion order. Returns fewer when the map holds fewer points. A finite
  // max_radius bounds the voxel walk and drops points beyond it.
  std::vector<Eigen::Vector3d> nearest_neighbors(
      const Eigen::Vector3d& query, int count,
      double max_radius = std::numeric_limits<double>::infinity()) const;

  template <typename Fn>
  void for_each_point(Fn&& fn) const {
    for (const auto& [key, pts] : voxels_)
      for (const auto& sp : pts) fn(sp.position);
  }

 private:
  Config config_;
  std::unordered_map<VoxelKey, std::vector<StoredPoint>, VoxelKeyHash> voxels_;
  std::size_t size_ = 0;
  std::uint64_t next_order_ = 0;
  VoxelKey lo_{0, 0, 0};  // bounds of occupied voxels
  VoxelKey hi_{0, 0, 0};
};

struct PlaneFit {
  Eigen::Vector3d normal;  // unit eigenvector of the smallest eigenvalue
  double sigma1, sigma2, sigma3;  // sqrt of covariance eigenvalues, descending
  double alpha;                   // (sigma2 - sigma3) / sigma1
};

// PCA plane fit over a neighborhood; throws DegenerateNeighborhood when all
// points coincide (sigma1 == 0).
PlaneFit plane_fit(std::span<const Eigen::Vector3d> neighbors);

// A point-to-plane association: query point (sensor frame, with timestamp)
// against a map point and its fitted local plane.
struct Correspondence {
  LidarPoint query;
  Eigen::Vector3d map_point;
  Eigen::Vector3d normal;
  double alpha;
  std::array<double, 3> sigma;
};

}  // namespace ctlo
