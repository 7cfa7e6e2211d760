#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "ctlo/dataset_io.hpp"
#include "ctlo/metrics.hpp"
#include "ctlo/pipeline.hpp"
#include "ctlo/simulator.hpp"

namespace fs = std::filesystem;
using namespace ctlo;

namespace {

int cmd_run(const std::string& config_path, const std::string& dataset, const std::string& mode,
            double range_limit, const std::string& out_dir, bool timing, bool dump_config) {
  PipelineConfig config;
  if (!config_path.empty()) config = load_config(config_path);
  if (mode == "icp")
    config.mode = OdometryMode::IcpOnly;
  else if (mode == "doppler")
    config.mode = OdometryMode::Doppler;
  else if (!mode.empty())
    throw std::runtime_error("mode must be icp or doppler");
  if (range_limit > 0.0) config.range_limit = range_limit;

  if (dump_config) {
    std::cout << config_to_json(config);
    return 0;
  }
  if (dataset.empty()) throw std::runtime_error("--dataset is required");

  DirectoryReader reader(dataset, DirectoryReader::Options{config.doppler_sign});
  // the reader applied the sign; the pipeline must not flip twice
  PipelineConfig run_config = config;
  run_config.doppler_sign = 1.0;
  const OdometryResult result = run_pipeline(run_config, reader, timing);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_poses(to_stamped_poses(result), fs::path(out_dir) / "trajectory.txt");
    std::ofstream cfg(fs::path(out_dir) / "effective_config.json");
    cfg << config_to_json(config);
    std::ofstream tim(fs::path(out_dir) / "timing.txt");
    tim << format_report(result.timing) << report_key_values(result.timing);
  }
  if (timing) std::cout << format_report(result.timing);
  std::cout << "frames: " << result.frames.size() << "  skipped: " << result.skipped_frames
            << "  diverged: " << result.diverged_frames << "\n";
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path, int exclude_first,
             const std::string& plot_dir) {
  const auto est = read_poses(est_path);
  const auto gt = read_poses(gt_path);
  const MetricsReport report = evaluate_trajectories(est, gt, exclude_first);
  std::cout << report.format() << report.key_values();
  if (!plot_dir.empty()) {
    fs::create_directories(plot_dir);
    std::ofstream seg(fs::path(plot_dir) / "segment_errors.txt");
    seg << segment_plot_data(report);
    std::ofstream f2f(fs::path(plot_dir) / "f2f_errors.txt");
    f2f << f2f_plot_data(report);
  }
  return 0;
}

int cmd_sim(const std::string& scene_name, double speed, int frames, const std::string& out_dir,
            std::uint64_t seed, int moving_objects, double noise_scale) {
  SensorModel sensor;
  sensor.range_noise *= noise_scale;
  sensor.doppler_noise *= noise_scale;

  const double duration = frames / sensor.frame_rate + 1.0;
  const double travel = speed * frames / sensor.frame_rate;

  Scene scene;
  Pose start;
  if (scene_name == "tunnel") {
    scene = make_tunnel_scene(travel + 60.0, 12.0, 6.0);
    start = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(-20.0, 0.0, 0.0));
  } else if (scene_name == "corridor") {
    scene = make_corridor_scene(travel + 60.0, 16.0, 7.0, 45.0, 50.0);
    start = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(-20.0, 0.0, 0.0));
  } else if (scene_name == "box") {
    scene = make_box_scene(travel + 60.0, 40, seed + 17);
    start = Pose(Eigen::Matrix3d::Identity(), Eigen::Vector3d(-20.0, 0.0, 0.0));
  } else {
    throw std::runtime_error("scene must be tunnel, corridor or box");
  }
  // start pose maps world to vehicle; vehicle begins 20 m inside the scene
  for (int k = 0; k < moving_objects; ++k) {
    ScenePlane mover = make_plane(Eigen::Vector3d(20.0 + 15.0 * k, 0.0, 0.0),
                                  Eigen::Vector3d(-1, 0, 0), Eigen::Vector3d(0, 1, 0), 1.2, 0.8);
    mover.velocity = Eigen::Vector3d(speed + 15.0, 0.0, 0.0);
    scene.planes.push_back(mover);
  }

  const GtTrajectory traj = make_straight_trajectory(speed, duration, 0.0, start);
  export_dataset(traj, scene, sensor, frames, out_dir, seed);
  std::cout << "wrote " << frames << " frames to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous-time lidar odometry with Doppler velocity factors"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run odometry on a dataset directory");
  std::string config_path, dataset, mode, out_dir;
  double range_limit = 0.0;
  bool timing = false, dump_config = false;
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--dataset", dataset, "dataset directory (manifest + frame files)");
  run->add_option("--mode", mode, "icp or doppler")
      ->check(CLI::IsMember({"icp", "doppler", ""}));
  run->add_option("--range-limit", range_limit, "drop points beyond this range [m]");
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--timing", timing, "print and save the per-stage timing report");
  run->add_flag("--dump-config", dump_config, "print the effective config and exit");

  auto* eval = app.add_subcommand("eval", "evaluate a trajectory against ground truth");
  std::string est_path, gt_path, plot_dir;
  int exclude_first = 60;
  eval->add_option("--est", est_path, "estimated trajectory file")->required();
  eval->add_option("--gt", gt_path, "ground-truth trajectory file")->required();
  eval->add_option("--exclude-first", exclude_first, "frames excluded from evaluation");
  eval->add_option("--plot-out", plot_dir, "directory for columnar plot data");

  auto* sim = app.add_subcommand("sim", "generate a synthetic FMCW dataset");
  std::string scene_name = "tunnel", sim_out;
  double speed = 10.0, noise_scale = 1.0;
  int frames = 100, moving_objects = 0;
  std::uint64_t seed = 1;
  sim->add_option("--scene", scene_name, "tunnel, corridor or box")
      ->check(CLI::IsMember({"tunnel", "corridor", "box"}));
  sim->add_option("--speed", speed, "vehicle speed [m/s]");
  sim->add_option("--frames", frames, "number of frames");
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--seed", seed, "noise seed");
  sim->add_option("--moving-objects", moving_objects, "number of moving planes");
  sim->add_option("--noise-scale", noise_scale, "scales sensor noise (0 = noiseless)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, dataset, mode, range_limit, out_dir, timing, dump_config);
    if (eval->parsed()) return cmd_eval(est_path, gt_path, exclude_first, plot_dir);
    if (sim->parsed())
      return cmd_sim(scene_name, speed, frames, sim_out, seed, moving_objects, noise_scale);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
