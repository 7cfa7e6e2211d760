#include "ctlo/simulator.hpp"

#include <Eigen/Geometry>

#include "ctlo/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ctlo {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

struct Hit {
  double range;
  int plane_id;
  Eigen::Vector3d world_point;
};

// Exact ray-rectangle intersection; no acceleration structure needed at desk
// scale.
bool intersect(const ScenePlane& plane, double t, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir, double min_range, double max_range, Hit* hit) {
  const Eigen::Vector3d c = plane.center_at(t);
  const double denom = dir.dot(plane.normal);
  if (std::abs(denom) < 1e-12) return false;
  const double r = (c - origin).dot(plane.normal) / denom;
  if (r < min_range || r > max_range) return false;
  const Eigen::Vector3d p = origin + r * dir;
  const Eigen::Vector3d d = p - c;
  if (std::abs(d.dot(plane.u_axis)) > plane.half_u) return false;
  if (std::abs(d.dot(plane.v_axis)) > plane.half_v) return false;
  hit->range = r;
  hit->plane_id = -1;
  hit->world_point = p;
  return true;
}

}  // namespace

ScenePlane make_plane(const Eigen::Vector3d& center, const Eigen::Vector3d& normal,
                      const Eigen::Vector3d& u_hint, double half_u, double half_v) {
  ScenePlane p;
  p.center = center;
  p.normal = normal.normalized();
  p.u_axis = (u_hint - u_hint.dot(p.normal) * p.normal).normalized();
  p.v_axis = p.normal.cross(p.u_axis);
  p.half_u = half_u;
  p.half_v = half_v;
  return p;
}

Scene make_tunnel_scene(double length, double width, double height, bool end_caps) {
  Scene scene;
  const Eigen::Vector3d x(1, 0, 0), y(0, 1, 0), z(0, 0, 1);
  const Eigen::Vector3d mid(length / 2.0, 0.0, 0.0);
  scene.planes.push_back(
      make_plane(mid + Eigen::Vector3d(0, -width / 2, 0), y, x, length / 2, height / 2));
  scene.planes.push_back(
      make_plane(mid + Eigen::Vector3d(0, width / 2, 0), -y, x, length / 2, height / 2));
  scene.planes.push_back(
      make_plane(mid + Eigen::Vector3d(0, 0, -height / 2), z, x, length / 2, width / 2));
  scene.planes.push_back(
      make_plane(mid + Eigen::Vector3d(0, 0, height / 2), -z, x, length / 2, width / 2));
  if (end_caps) {
    scene.planes.push_back(
        make_plane(Eigen::Vector3d(0, 0, 0), x, y, width / 2, height / 2));
    scene.planes.push_back(
        make_plane(Eigen::Vector3d(length, 0, 0), -x, y, width / 2, height / 2));
  }
  return scene;
}

Scene make_corridor_scene(double length, double width, double height, double panel_offset,
                          double panel_spacing) {
  Scene scene = make_tunnel_scene(length, width, height, false);
  const Eigen::Vector3d x(1, 0, 0), y(0, 1, 0);
  // Longitudinal structure: panels facing the corridor axis, far to the sides.
  for (double s = panel_spacing / 2.0; s < length; s += panel_spacing) {
    scene.planes.push_back(make_plane(Eigen::Vector3d(s, -panel_offset, 0), x, y, 4.0, 4.0));
    scene.planes.push_back(make_plane(Eigen::Vector3d(s, panel_offset, 0), -x, y, 4.0, 4.0));
  }
  return scene;
}

Scene make_box_scene(double extent, int boxes, std::uint64_t seed) {
  Scene scene;
  const Eigen::Vector3d x(1, 0, 0), z(0, 0, 1);
  scene.planes.push_back(make_plane(Eigen::Vector3d(extent / 2, 0, -1.5), z, x,
                                    extent / 2 + 30.0, 60.0));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> along(0.0, extent);
  std::uniform_real_distribution<double> lateral(8.0, 45.0);
  std::uniform_real_distribution<double> yaw(0.0, 2.0 * 3.14159265358979323846);
  std::uniform_real_distribution<double> size(2.0, 6.0);
  std::bernoulli_distribution side(0.5);
  for (int i = 0; i < boxes; ++i) {
    const double cx = along(rng);
    const double cy = side(rng) ? lateral(rng) : -lateral(rng);
    const double a = yaw(rng);
    const Eigen::Vector3d n(std::cos(a), std::sin(a), 0.0);
    const double h = size(rng);
    // two perpendicular faces of a box-like obstacle
    scene.planes.push_back(
        make_plane(Eigen::Vector3d(cx, cy, h / 2 - 1.5), n, z, h / 2, h / 2));
    const Eigen::Vector3d n2(-n.y(), n.x(), 0.0);
    scene.planes.push_back(
        make_plane(Eigen::Vector3d(cx, cy, h / 2 - 1.5) + 0.5 * h * n, n2, z, h / 2, h / 2));
  }
  return scene;
}

void GtTrajectory::add_segment(const Twist& twist, double duration) {
  TrajectoryKnot& last = segment_starts_.back();
  last.twist = twist;
  end_time_ = last.time + duration;
  segment_starts_.push_back(
      TrajectoryKnot{end_time_, exp_se3(duration * twist.vec()) * last.pose, Twist{}});
}

Pose GtTrajectory::pose(double t) const {
  if (t < start_time() - 1e-9 || t > end_time_ + 1e-9) throw NoTrajectoryCoverage{};
  // last segment start with time <= t
  int lo = 0;
  for (int i = 1; i < static_cast<int>(segment_starts_.size()); ++i) {
    if (segment_starts_[i].time <= t) lo = i;
  }
  const TrajectoryKnot& k = segment_starts_[lo];
  return exp_se3((t - k.time) * k.twist.vec()) * k.pose;
}

Twist GtTrajectory::twist(double t) const {
  if (t < start_time() - 1e-9 || t > end_time_ + 1e-9) throw NoTrajectoryCoverage{};
  int lo = 0;
  for (int i = 1; i < static_cast<int>(segment_starts_.size()); ++i) {
    if (segment_starts_[i].time <= t) lo = i;
  }
  if (lo == static_cast<int>(segment_starts_.size()) - 1 && lo > 0) --lo;  // end boundary
  return segment_starts_[lo].twist;
}

GtTrajectory make_straight_trajectory(double speed, double duration, double start_time,
                                      const Pose& start_pose) {
  GtTrajectory traj(start_time, start_pose);
  // Forward motion at `speed` along vehicle +x; under T_dot = twist^ T the
  // world moves backward in the vehicle frame.
  Twist twist;
  twist.nu = Eigen::Vector3d(-speed, 0.0, 0.0);
  traj.add_segment(twist, duration);
  return traj;
}

SimulatedFrame simulate_frame(const GtTrajectory& traj, const Scene& scene,
                              const SensorModel& sensor, int frame_index, std::uint64_t seed,
                              const Extrinsic& extrinsic) {
  const double period = 1.0 / sensor.frame_rate;
  const double t0 = frame_index * period;
  const double t1 = t0 + period;
  if (t0 < traj.start_time() - 1e-9 || t1 > traj.end_time() + 1e-9)
    throw NoTrajectoryCoverage{};

  SimulatedFrame out;
  out.frame.index = frame_index;
  out.frame.start_time = t0;
  out.frame.end_time = t1;

  std::mt19937_64 rng(combine_seed(seed, static_cast<std::uint64_t>(frame_index)));
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double hfov = sensor.hfov_deg * kDegToRad;
  const double vfov = sensor.vfov_deg * kDegToRad;

  for (int s = 0; s < sensor.azimuth_steps; ++s) {
    const double frac = (s + 0.5) / sensor.azimuth_steps;
    const double t = t0 + frac * period;
    const double az = -hfov / 2.0 + frac * hfov;

    const Pose t_vi = traj.pose(t);
    const Pose t_li = extrinsic.t_lv * t_vi;  // lidar-from-world
    const Pose t_il = t_li.inverse();
    const Eigen::Vector3d origin = t_il.translation();

    // lidar-frame twist for the Doppler channel
    const Vector6d w_l = extrinsic.ad_lv * traj.twist(t).vec();

    for (int b = 0; b < sensor.beams; ++b) {
      // noise is drawn for every ray slot, hit or miss, so that adding or
      // moving scene objects does not shift the draws of unrelated rays
      const double range_eps = gauss(rng) * sensor.range_noise;
      const double doppler_eps = gauss(rng) * sensor.doppler_noise;

      const double el =
          sensor.beams > 1 ? -vfov / 2.0 + (b + 0.5) * vfov / sensor.beams : 0.0;
      const Eigen::Vector3d dir_l(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                  std::sin(el));
      const Eigen::Vector3d dir_w = t_il.rotation() * dir_l;

      Hit best{};
      int best_id = -1;
      for (int pi = 0; pi < static_cast<int>(scene.planes.size()); ++pi) {
        Hit h;
        if (intersect(scene.planes[pi], t, origin, dir_w, sensor.min_range, sensor.max_range,
                      &h) &&
            (best_id < 0 || h.range < best.range)) {
          best = h;
          best_id = pi;
        }
      }
      if (best_id < 0) continue;

      const Eigen::Vector3d q_true = best.range * dir_l;  // sensor frame, exact
      const double pred_static =
          q_true.dot(w_l.head<3>() + w_l.tail<3>().cross(q_true)) / q_true.norm();
      const Eigen::Vector3d& v_plane = scene.planes[best_id].velocity;
      const double doppler_true =
          pred_static + dir_l.dot(t_li.rotation() * v_plane);

      LidarPoint pt;
      pt.position = (best.range + range_eps) * dir_l;
      pt.timestamp = t;
      pt.doppler = doppler_true + doppler_eps;
      out.frame.points.push_back(pt);
      out.plane_ids.push_back(best_id);
    }
  }
  return out;
}

void export_dataset(const GtTrajectory& traj, const Scene& scene, const SensorModel& sensor,
                    int n_frames, const std::filesystem::path& out_dir, std::uint64_t seed,
                    const Extrinsic& extrinsic, int num_threads) {
  std::filesystem::create_directories(out_dir);

  std::vector<FrameMeta> metas(n_frames);
  std::vector<LidarFrame> frames(n_frames);
  parallel_for(n_frames, num_threads, [&](int i) {
    SimulatedFrame sf = simulate_frame(traj, scene, sensor, i, seed, extrinsic);
    metas[i] = FrameMeta{i, sf.frame.start_time, sf.frame.end_time};
    frames[i] = std::move(sf.frame);
  });

  for (int i = 0; i < n_frames; ++i) write_frame(frames[i], out_dir / frame_file_name(i));
  write_manifest(metas, out_dir / "manifest.txt");

  std::vector<StampedPose> gt;
  gt.reserve(n_frames);
  for (int i = 0; i < n_frames; ++i)
    gt.push_back(StampedPose{metas[i].end_time, traj.pose(metas[i].end_time).inverse()});
  write_poses(gt, out_dir / "groundtruth.txt");
}

}  // namespace ctlo
