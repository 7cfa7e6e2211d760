#pragma once

#include <filesystem>
#include <vector>

#include "ctlo/factors.hpp"
#include "ctlo/frontend.hpp"
#include "ctlo/se3.hpp"
#include "ctlo/trajectory.hpp"

namespace ctlo {

// Finite rectangle: center, unit normal, two in-plane half axes. A nonzero
// velocity turns it into a moving object.
struct ScenePlane {
  Eigen::Vector3d center;
  Eigen::Vector3d normal;
  Eigen::Vector3d u_axis;  // unit, in-plane
  Eigen::Vector3d v_axis;  // unit, in-plane, normal x u
  double half_u = 1.0;
  double half_v = 1.0;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();

  Eigen::Vector3d center_at(double t) const { return center + t * velocity; }
};

struct Scene {
  std::vector<ScenePlane> planes;
};

ScenePlane make_plane(const Eigen::Vector3d& center, const Eigen::Vector3d& normal,
                      const Eigen::Vector3d& u_hint, double half_u, double half_v);

// Two side walls + ceiling + floor along +x, no longitudinal features.
// Spans x in [0, length]; walls at y = +-width/2; floor z = -height/2,
// ceiling z = +height/2.
Scene make_tunnel_scene(double length, double width, double height, bool end_caps = false);

// Tunnel-like walls plus longitudinal-constraining panels placed at lateral
// offset panel_offset (side walls stay within view, panels only matter
// beyond that range).
Scene make_corridor_scene(double length, double width, double height, double panel_offset,
                          double panel_spacing);

// Ground plane plus scattered boxes with assorted orientations; well
// conditioned in all directions.
Scene make_box_scene(double extent, int boxes, std::uint64_t seed);

struct SensorModel {
  double hfov_deg = 120.0;
  double vfov_deg = 30.0;
  double max_range = 300.0;
  double min_range = 0.5;
  double range_noise = 0.02;    // std, m, along the ray
  double doppler_noise = 0.03;  // std, m/s
  double frame_rate = 10.0;     // Hz
  int beams = 16;
  int azimuth_steps = 300;      // azimuth advances linearly over the frame period
};

// Piecewise-constant-twist ground truth; pose via the closed-form flow
// T(t) = exp((t - t_k) * twist_k^) * T_k.
class GtTrajectory {
 public:
  GtTrajectory(double start_time, const Pose& start_pose) {
    segment_starts_.push_back(TrajectoryKnot{start_time, start_pose, Twist{}});
  }

  // Appends a constant-twist segment lasting `duration` seconds.
  void add_segment(const Twist& twist, double duration);

  double start_time() const { return segment_starts_.front().time; }
  double end_time() const { return end_time_; }

  Pose pose(double t) const;    // throws NoTrajectoryCoverage
  Twist twist(double t) const;  // right-continuous at segment breaks

 private:
  std::vector<TrajectoryKnot> segment_starts_;
  double end_time_ = 0.0;
};

// Straight run along +x at the given speed (vehicle forward = +x).
GtTrajectory make_straight_trajectory(double speed, double duration, double start_time = 0.0,
                                      const Pose& start_pose = Pose::Identity());

struct SimulatedFrame {
  LidarFrame frame;            // points in the sensor frame, absolute timestamps
  std::vector<int> plane_ids;  // hit plane per point, for test oracles
};

// Casts one ray per (beam, azimuth step) from the sensor pose at that ray's
// timestamp; the Doppler channel is the radial projection of the
// transport-theorem point velocity plus the plane's own velocity. Noise draws
// are per ray slot, so scene edits only perturb the rays they touch.
SimulatedFrame simulate_frame(const GtTrajectory& traj, const Scene& scene,
                              const SensorModel& sensor, int frame_index, std::uint64_t seed,
                              const Extrinsic& extrinsic = Extrinsic{});

// Writes frame files + manifest + ground-truth poses (world-from-vehicle at
// each frame end) in the dataset_io formats.
void export_dataset(const GtTrajectory& traj, const Scene& scene, const SensorModel& sensor,
                    int n_frames, const std::filesystem::path& out_dir, std::uint64_t seed,
                    const Extrinsic& extrinsic = Extrinsic{}, int num_threads = 0);

}  // namespace ctlo
