#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <random>

#include "ctlo/dataset_io.hpp"
#include "ctlo/simulator.hpp"
#include "oracles.hpp"

using namespace ctlo;
namespace fs = std::filesystem;

namespace {

GtTrajectory stationary(double duration) {
  GtTrajectory traj(0.0, Pose());
  traj.add_segment(Twist{}, duration);
  return traj;
}

SensorModel noiseless() {
  SensorModel s;
  s.range_noise = 0.0;
  s.doppler_noise = 0.0;
  return s;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("stationary sensor sees pure doppler noise") {
  const Scene scene = make_tunnel_scene(120.0, 12.0, 6.0, true);
  GtTrajectory traj(0.0, Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(-40.0, 0, 0)));
  traj.add_segment(Twist{}, 2.0);

  SensorModel sensor;
  sensor.azimuth_steps = 700;
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  for (int f = 0; f < 2; ++f) {
    const SimulatedFrame sf = simulate_frame(traj, scene, sensor, f, 5);
    for (const auto& pt : sf.frame.points) {
      sum += pt.doppler;
      sum_sq += pt.doppler * pt.doppler;
      ++n;
    }
  }
  REQUIRE(n > 10000);
  const double mean = sum / n;
  const double std = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std == doctest::Approx(0.03).epsilon(0.1));
}

TEST_CASE("driving at a wall gives the radial projection of the speed") {
  Scene scene;
  scene.planes.push_back(make_plane(Eigen::Vector3d(30.0, 0, 0), Eigen::Vector3d(-1, 0, 0),
                                    Eigen::Vector3d(0, 1, 0), 60.0, 60.0));
  const GtTrajectory traj = make_straight_trajectory(10.0, 1.0);
  const SimulatedFrame sf = simulate_frame(traj, scene, noiseless(), 0, 3);
  REQUIRE(!sf.frame.points.empty());

  double straightest = 1e9;
  double straightest_doppler = 0.0;
  for (const auto& pt : sf.frame.points) {
    const Eigen::Vector3d dir = pt.position.normalized();
    const double expected = -10.0 * dir.x();  // -speed * cos(angle to ray)
    CHECK(pt.doppler == doctest::Approx(expected).epsilon(1e-9));
    const double off_axis = std::hypot(dir.y(), dir.z());
    if (off_axis < straightest) {
      straightest = off_axis;
      straightest_doppler = pt.doppler;
    }
  }
  CHECK(straightest_doppler == doctest::Approx(-10.0).epsilon(1e-3));
}

TEST_CASE("a plane moving with the sensor has zero doppler") {
  Scene scene;
  ScenePlane follower = make_plane(Eigen::Vector3d(25.0, 0, 0), Eigen::Vector3d(-1, 0, 0),
                                   Eigen::Vector3d(0, 1, 0), 30.0, 30.0);
  follower.velocity = Eigen::Vector3d(10.0, 0.0, 0.0);  // same as the vehicle
  scene.planes.push_back(follower);
  const GtTrajectory traj = make_straight_trajectory(10.0, 1.0);
  const SimulatedFrame sf = simulate_frame(traj, scene, noiseless(), 1, 3);
  REQUIRE(!sf.frame.points.empty());
  for (const auto& pt : sf.frame.points)
    CHECK(std::abs(pt.doppler) < 1e-9);
}

TEST_CASE("tunnel normals are orthogonal to the axis") {
  const Scene scene = make_tunnel_scene(200.0, 10.0, 5.0);
  for (const auto& plane : scene.planes)
    CHECK(std::abs(plane.normal.x()) < 1e-15);
}

TEST_CASE("tunnel p2p hessian is near-singular along the axis") {
  const GtTrajectory traj = make_straight_trajectory(10.0, 1.0, 0.0,
                                                     Pose(Eigen::Matrix3d::Identity(),
                                                          Eigen::Vector3d(-60.0, 0, 0)));
  const Extrinsic ext;
  auto hessian_for = [&](const Scene& scene) {
    const SimulatedFrame sf = simulate_frame(traj, scene, noiseless(), 0, 3);
    REQUIRE(sf.frame.points.size() > 500);
    const Pose t_vi = traj.pose(sf.frame.points[0].timestamp);
    Matrix6d h = Matrix6d::Zero();
    for (std::size_t i = 0; i < sf.frame.points.size(); ++i) {
      const ScenePlane& plane = scene.planes[sf.plane_ids[i]];
      Correspondence corr{sf.frame.points[i], plane.center, plane.normal, 1.0, {1, 1, 0}};
      const auto j = p2p_jacobian_pose(corr, t_vi, ext);
      h += j.transpose() * j;
    }
    return h;
  };

  const Matrix6d h_tunnel = hessian_for(make_tunnel_scene(200.0, 12.0, 6.0, false));
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(h_tunnel);
  const double ratio = es.eigenvalues()(0) / es.eigenvalues()(5);
  CHECK(ratio < 1e-3);

  // the degenerate direction is translational; compare translation blocks,
  // which are free of the rotation lever-arm scale
  auto trans_ratio = [](const Matrix6d& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> e(h.topLeftCorner<3, 3>());
    return e.eigenvalues()(0) / e.eigenvalues()(2);
  };
  CHECK(trans_ratio(h_tunnel) < 1e-3);

  // far end cap inside the 300 m range: the axis becomes observable
  const Matrix6d h_capped = hessian_for(make_tunnel_scene(200.0, 12.0, 6.0, true));
  CHECK(trans_ratio(h_capped) > 5e-3);
  CHECK(trans_ratio(h_capped) > 100.0 * trans_ratio(h_tunnel));
}

TEST_CASE("model consistency: factors invert the generator exactly") {
  // noiseless static scene: dv_error at the ground truth is zero for every
  // point, p2p_error against the hit plane likewise
  const Scene scene = make_tunnel_scene(200.0, 14.0, 7.0, true);
  GtTrajectory traj(0.0, Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(-20.0, 0, 0)));
  Twist w;  // forward plus slight yaw and climb: exercises all terms
  w.nu = Eigen::Vector3d(-8.0, 0.0, -0.2);
  w.omega = Eigen::Vector3d(0.0, 0.0, 0.05);
  traj.add_segment(w, 5.0);

  Vector6d ext_xi;
  ext_xi << 0.3, -0.1, 0.2, 0.02, -0.03, 0.04;  // non-trivial mounting
  const Extrinsic ext(exp_se3(ext_xi));

  for (int f = 0; f < 3; ++f) {
    const SimulatedFrame sf = simulate_frame(traj, scene, noiseless(), f, 11, ext);
    REQUIRE(sf.frame.points.size() > 1000);
    for (std::size_t i = 0; i < sf.frame.points.size(); ++i) {
      const auto& pt = sf.frame.points[i];
      const double e_dv = dv_error(pt, Twist::from_vec(traj.twist(pt.timestamp).vec()), ext);
      CHECK(std::abs(e_dv) < 1e-10);

      const ScenePlane& plane = scene.planes[sf.plane_ids[i]];
      const Correspondence corr{pt, plane.center, plane.normal, 1.0, {1, 1, 0}};
      const double e_p2p = p2p_error(corr, traj.pose(pt.timestamp), ext);
      CHECK(std::abs(e_p2p) < 1e-8);
    }
  }
}

TEST_CASE("timestamps increase strictly with azimuth step") {
  const Scene scene = make_tunnel_scene(120.0, 12.0, 6.0, true);
  GtTrajectory traj(0.0, Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(-40.0, 0, 0)));
  traj.add_segment(Twist{}, 1.0);
  const SimulatedFrame sf = simulate_frame(traj, scene, noiseless(), 0, 3);
  double prev = -1.0;
  for (const auto& pt : sf.frame.points) {
    CHECK(pt.timestamp >= prev);       // beams within a column share the stamp
    CHECK(pt.timestamp >= sf.frame.start_time);
    CHECK(pt.timestamp <= sf.frame.end_time);
    prev = pt.timestamp;
  }
  // distinct azimuth steps have strictly increasing stamps
  std::vector<double> stamps;
  for (const auto& pt : sf.frame.points)
    if (stamps.empty() || pt.timestamp != stamps.back()) stamps.push_back(pt.timestamp);
  CHECK(stamps.size() > 100);
  for (std::size_t i = 1; i < stamps.size(); ++i) CHECK(stamps[i] > stamps[i - 1]);
}

TEST_CASE("deterministic under a fixed seed") {
  const Scene scene = make_tunnel_scene(200.0, 12.0, 6.0);
  const GtTrajectory traj = make_straight_trajectory(10.0, 2.0);
  SensorModel sensor;
  const SimulatedFrame a = simulate_frame(traj, scene, sensor, 3, 77);
  const SimulatedFrame b = simulate_frame(traj, scene, sensor, 3, 77);
  REQUIRE(a.frame.points.size() == b.frame.points.size());
  for (std::size_t i = 0; i < a.frame.points.size(); ++i) {
    CHECK((a.frame.points[i].position - b.frame.points[i].position).norm() == 0.0);
    CHECK(a.frame.points[i].doppler == b.frame.points[i].doppler);
  }
  const SimulatedFrame c = simulate_frame(traj, scene, sensor, 3, 78);
  bool same = a.frame.points.size() == c.frame.points.size();
  if (same) {
    same = false;
    for (std::size_t i = 0; i < a.frame.points.size(); ++i)
      if (a.frame.points[i].doppler != c.frame.points[i].doppler) same = false;
  }
  CHECK_FALSE(same);
}

TEST_CASE("export then read gives identical frames") {
  const fs::path dir = fs::temp_directory_path() / "ctlo_sim_export_test";
  fs::remove_all(dir);
  const Scene scene = make_tunnel_scene(160.0, 12.0, 6.0);
  const GtTrajectory traj = make_straight_trajectory(10.0, 2.0);
  SensorModel sensor;
  sensor.beams = 4;
  sensor.azimuth_steps = 60;
  export_dataset(traj, scene, sensor, 10, dir, 5);

  DirectoryReader reader(dir);
  REQUIRE(reader.frame_count() == 10);
  for (int f = 0; f < 10; ++f) {
    const SimulatedFrame expected = simulate_frame(traj, scene, sensor, f, 5);
    const LidarFrame got = reader.read(f);
    REQUIRE(got.points.size() == expected.frame.points.size());
    for (std::size_t i = 0; i < got.points.size(); ++i) {
      // float32 quantization on disk
      CHECK((got.points[i].position.cast<float>() -
             expected.frame.points[i].position.cast<float>())
                .norm() == 0.0f);
      CHECK(static_cast<float>(got.points[i].doppler) ==
            static_cast<float>(expected.frame.points[i].doppler));
    }
  }
  const auto gt = read_poses(dir / "groundtruth.txt");
  CHECK(gt.size() == 10);
  fs::remove_all(dir);
}

TEST_CASE("zero-frame export writes an empty manifest") {
  const fs::path dir = fs::temp_directory_path() / "ctlo_sim_empty_test";
  fs::remove_all(dir);
  const Scene scene = make_tunnel_scene(100.0, 12.0, 6.0);
  const GtTrajectory traj = make_straight_trajectory(10.0, 1.0);
  export_dataset(traj, scene, SensorModel{}, 0, dir, 5);
  CHECK(read_manifest(dir / "manifest.txt").empty());
  CHECK(!fs::exists(dir / frame_file_name(0)));
  fs::remove_all(dir);
}

TEST_CASE("ground-truth path length integrates to speed times duration") {
  const GtTrajectory traj = make_straight_trajectory(10.0, 10.0 + 0.2,
                                                     0.0, Pose());
  double length = 0.0;
  Eigen::Vector3d prev = traj.pose(0.0).inverse().translation();
  for (int i = 1; i <= 1000; ++i) {
    const double t = 10.0 * i / 1000.0;
    const Eigen::Vector3d p = traj.pose(t).inverse().translation();
    length += (p - prev).norm();
    prev = p;
  }
  CHECK(std::abs(length - 100.0) < 0.1);

  CHECK_THROWS_AS(traj.pose(11.0), NoTrajectoryCoverage);
  CHECK_THROWS_AS(simulate_frame(traj, make_tunnel_scene(100, 10, 5), SensorModel{}, 200, 1),
                  NoTrajectoryCoverage);
}

}  // TEST_SUITE
