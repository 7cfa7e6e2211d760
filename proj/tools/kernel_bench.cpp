// Compares the serial reference path (one thread) against the OpenMP path for
// the data-parallel kernels: factor evaluation, association, and frame
// simulation.

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>

#include "ctlo/simulator.hpp"
#include "ctlo/solver.hpp"
#include "ctlo/timing.hpp"

using namespace ctlo;

namespace {

struct BenchSetup {
  SlidingWindow window;
  FactorParams params;
  LocalMap map{LocalMap::Config{}};
  std::vector<LidarPoint> points;
  Scene scene;
  GtTrajectory traj = make_straight_trajectory(10.0, 10.0);
  SensorModel sensor;
};

BenchSetup make_setup(int frames_of_points) {
  BenchSetup s;
  s.scene = make_tunnel_scene(160.0, 12.0, 6.0, true);
  s.sensor.azimuth_steps = 400;
  s.sensor.beams = 24;

  TrajectoryKnot k0{0.0, Pose(), Twist{}};
  TrajectoryKnot k1 = extrapolate(TrajectoryKnot{0.0, Pose(), s.traj.twist(0.05)}, 0.1);
  k1.time = 0.1;
  s.window.knots.push_back(WindowKnot{k0, false});
  s.window.knots.push_back(WindowKnot{k1, false});
  s.window.marginal.valid = true;
  s.window.marginal.anchor = k0;
  s.window.marginal.info = 1e2 * Matrix12d::Identity();

  FrameFactors ff{0, 0.0, 0.1, {}, {}};
  for (int f = 0; f < frames_of_points; ++f) {
    const SimulatedFrame sf = simulate_frame(s.traj, s.scene, s.sensor, f, 7);
    for (std::size_t i = 0; i < sf.frame.points.size(); ++i) {
      LidarPoint pt = sf.frame.points[i];
      pt.timestamp = pt.timestamp - sf.frame.start_time;  // squeeze into [0, 0.1]
      const ScenePlane& plane = s.scene.planes[sf.plane_ids[i]];
      const Eigen::Vector3d world = s.traj.pose(sf.frame.points[i].timestamp).inverse() *
                                    sf.frame.points[i].position;
      ff.p2p.push_back(Correspondence{pt, world, plane.normal, 1.0, {1.0, 1.0, 0.0}});
      ff.doppler.push_back(pt);
      s.points.push_back(pt);
      s.map.insert(world);
    }
  }
  s.window.frames.push_back(std::move(ff));
  return s;
}

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e18;
  for (int i = 0; i < reps; ++i) {
    Stopwatch w;
    fn();
    best = std::min(best, w.seconds());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int threads = resolve_threads(0);
  int reps = 5;
  app.add_option("--threads", threads, "thread count for the parallel runs");
  app.add_option("--reps", reps, "repetitions (best-of)");
  CLI11_PARSE(app, argc, argv);

  BenchSetup setup = make_setup(3);
  std::printf("workload: %zu p2p + %zu doppler factors, map of %zu points\n",
              setup.window.frames[0].p2p.size(), setup.window.frames[0].doppler.size(),
              setup.map.size());
  std::printf("%-24s %12s %12s %9s\n", "kernel", "serial[ms]", "omp[ms]", "speedup");

  SolverConfig cfg;
  cfg.num_threads = threads;

  {
    const double serial = time_best_of(
        reps, [&] { build_normal_equations(setup.window, setup.params, 1); });
    const double par = time_best_of(
        reps, [&] { build_normal_equations(setup.window, setup.params, threads); });
    std::printf("%-24s %12.3f %12.3f %8.2fx\n", "normal_equations", 1e3 * serial, 1e3 * par,
                serial / par);
  }
  {
    SolverConfig serial_cfg = cfg;
    serial_cfg.num_threads = 1;
    const auto& k0 = setup.window.knots[0].state;
    const auto& k1 = setup.window.knots[1].state;
    const double serial = time_best_of(reps, [&] {
      associate(setup.points, k0, k1, setup.map, setup.params, serial_cfg);
    });
    const double par = time_best_of(
        reps, [&] { associate(setup.points, k0, k1, setup.map, setup.params, cfg); });
    std::printf("%-24s %12.3f %12.3f %8.2fx\n", "association", 1e3 * serial, 1e3 * par,
                serial / par);
  }
  {
    const double serial = time_best_of(reps, [&] {
      for (int f = 0; f < 10; ++f) simulate_frame(setup.traj, setup.scene, setup.sensor, f, 3);
    });
    const double par = time_best_of(reps, [&] {
      parallel_for(10, threads,
                   [&](int f) { simulate_frame(setup.traj, setup.scene, setup.sensor, f, 3); });
    });
    std::printf("%-24s %12.3f %12.3f %8.2fx\n", "simulate_frames", 1e3 * serial, 1e3 * par,
                serial / par);
  }

  // identical results regardless of thread count
  const NormalEquations a = build_normal_equations(setup.window, setup.params, 1);
  const NormalEquations b = build_normal_equations(setup.window, setup.params, threads);
  const double diff = (a.dense() - b.dense()).norm() + (a.rhs - b.rhs).norm();
  std::printf("serial vs omp result difference: %g\n", diff);
  return diff == 0.0 ? 0 : 1;
}
