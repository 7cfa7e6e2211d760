#include "ctlo/pipeline.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <future>
#include <set>

namespace ctlo {

using nlohmann::json;

FactorParams PipelineConfig::factor_params() const {
  FactorParams p;
  p.prior = prior;
  p.weights = FactorWeights{beta, p2p_sigma, dv_sigma};
  // kernel cutoffs live in whitened units; configs state them raw
  p.p2p_kernel = RobustKernel{p2p_cauchy_k, p2p_truncation / p2p_sigma};
  p.dv_kernel = RobustKernel{dv_cauchy_k, std::sqrt(beta) * dv_truncation / dv_sigma};
  p.extrinsic = Extrinsic(t_lv);
  p.use_doppler = mode == OdometryMode::Doppler;
  return p;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["mode"] = c.mode == OdometryMode::Doppler ? "doppler" : "icp";
  j["keypoint_grid"] = c.keypoint_grid;
  j["map_voxel_size"] = c.map_voxel_size;
  j["map_max_points_per_voxel"] = c.map_max_points_per_voxel;
  j["map_crop_radius"] = c.map_crop_radius;
  if (c.range_limit)
    j["range_limit"] = *c.range_limit;
  else
    j["range_limit"] = nullptr;
  j["seed"] = c.seed;
  j["qc_diag"] = std::vector<double>(c.prior.qc_diag.data(), c.prior.qc_diag.data() + 6);
  j["beta"] = c.beta;
  j["p2p_sigma"] = c.p2p_sigma;
  j["dv_sigma"] = c.dv_sigma;
  j["p2p_truncation"] = c.p2p_truncation;
  j["dv_truncation"] = c.dv_truncation;
  j["p2p_cauchy_k"] = c.p2p_cauchy_k;
  j["dv_cauchy_k"] = c.dv_cauchy_k;
  j["window_size"] = c.solver.window_size;
  j["max_iterations"] = c.solver.max_iterations;
  j["convergence_tol"] = c.solver.convergence_tol;
  j["reassociate_every"] = c.solver.reassociate_every;
  j["max_correspondences"] = c.solver.max_correspondences;
  j["neighbors"] = c.solver.neighbors;
  j["min_neighbors"] = c.solver.min_neighbors;
  j["max_association_distance"] = c.solver.max_association_distance;
  j["neighbor_search_radius"] = c.solver.neighbor_search_radius;
  j["num_threads"] = c.solver.num_threads;
  std::vector<double> ext;
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 3; ++col) ext.push_back(c.t_lv.rotation()(r, col));
    ext.push_back(c.t_lv.translation()(r));
  }
  j["t_lv"] = ext;
  j["doppler_sign"] = c.doppler_sign;
  j["publish_latest_immediately"] = c.publish_latest_immediately;
  return j.dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text) {
  const json j = json::parse(text);
  static const std::set<std::string> known = {
      "mode",           "keypoint_grid",     "map_voxel_size",
      "map_max_points_per_voxel",            "map_crop_radius",
      "range_limit",    "seed",              "qc_diag",
      "beta",           "p2p_sigma",         "dv_sigma",
      "p2p_truncation", "dv_truncation",     "p2p_cauchy_k",
      "dv_cauchy_k",    "window_size",       "max_iterations",
      "convergence_tol", "reassociate_every", "max_correspondences",
      "neighbors",      "min_neighbors",     "max_association_distance",
      "neighbor_search_radius",              "num_threads",
      "t_lv",           "doppler_sign",      "publish_latest_immediately"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) log_warn("unknown config key ignored: " + key);
  PipelineConfig c;
  if (j.contains("mode")) {
    const std::string mode = j["mode"];
    if (mode == "doppler")
      c.mode = OdometryMode::Doppler;
    else if (mode == "icp")
      c.mode = OdometryMode::IcpOnly;
    else
      throw ReaderError("unknown mode: " + mode);
  }
  auto get = [&](const char* key, auto& value) {
    if (j.contains(key) && !j[key].is_null()) value = j[key].get<std::decay_t<decltype(value)>>();
  };
  get("keypoint_grid", c.keypoint_grid);
  get("map_voxel_size", c.map_voxel_size);
  get("map_max_points_per_voxel", c.map_max_points_per_voxel);
  get("map_crop_radius", c.map_crop_radius);
  if (j.contains("range_limit") && !j["range_limit"].is_null())
    c.range_limit = j["range_limit"].get<double>();
  get("seed", c.seed);
  if (j.contains("qc_diag")) {
    const auto v = j["qc_diag"].get<std::vector<double>>();
    if (v.size() != 6) throw ReaderError("qc_diag must have 6 entries");
    for (int i = 0; i < 6; ++i) c.prior.qc_diag(i) = v[i];
  }
  get("beta", c.beta);
  get("p2p_sigma", c.p2p_sigma);
  get("dv_sigma", c.dv_sigma);
  get("p2p_truncation", c.p2p_truncation);
  get("dv_truncation", c.dv_truncation);
  get("p2p_cauchy_k", c.p2p_cauchy_k);
  get("dv_cauchy_k", c.dv_cauchy_k);
  get("window_size", c.solver.window_size);
  get("max_iterations", c.solver.max_iterations);
  get("convergence_tol", c.solver.convergence_tol);
  get("reassociate_every", c.solver.reassociate_every);
  get("max_correspondences", c.solver.max_correspondences);
  get("neighbors", c.solver.neighbors);
  get("min_neighbors", c.solver.min_neighbors);
  get("max_association_distance", c.solver.max_association_distance);
  get("neighbor_search_radius", c.solver.neighbor_search_radius);
  get("num_threads", c.solver.num_threads);
  if (j.contains("t_lv")) {
    const auto v = j["t_lv"].get<std::vector<double>>();
    if (v.size() != 12) throw ReaderError("t_lv must be a row-major 3x4 [R|t]");
    Eigen::Matrix3d r;
    r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    c.t_lv = Pose(r, Eigen::Vector3d(v[3], v[7], v[11]));
  }
  get("doppler_sign", c.doppler_sign);
  get("publish_latest_immediately", c.publish_latest_immediately);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReaderError("cannot open config: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

OdometryResult run_pipeline(const PipelineConfig& config, FrameReader& reader,
                            bool include_io_timing) {
  const int n_frames = reader.frame_count();
  if (n_frames < 1) throw ReaderError("reader yields no frames");

  const FactorParams params = config.factor_params();
  LocalMap map(LocalMap::Config{config.map_voxel_size, config.map_max_points_per_voxel,
                                config.map_crop_radius});
  SlidingWindow window;
  std::vector<TrajectoryKnot> published;
  std::vector<TrajectoryKnot> latest;  // newest-knot estimates per frame
  StageTimers timers;
  OdometryResult result;
  const Stopwatch total_watch;

  // One frame of read-ahead; the io scope times only the blocking wait.
  auto fetch = [&reader](int idx) { return reader.read(idx); };
  std::future<LidarFrame> next = std::async(std::launch::async, fetch, 0);
  for (int i = 0; i < n_frames; ++i) {
    LidarFrame raw;
    {
      StageTimers::Scope scope(&timers, Stage::DatasetIo);
      raw = next.get();
    }
    if (i + 1 < n_frames) next = std::async(std::launch::async, fetch, i + 1);
    if (config.mode == OdometryMode::IcpOnly) {
      for (auto& pt : raw.points) pt.doppler = std::numeric_limits<double>::quiet_NaN();
    } else if (config.doppler_sign != 1.0) {
      for (auto& pt : raw.points)
        if (pt.has_doppler()) pt.doppler *= config.doppler_sign;
    }
    std::erase_if(raw.points, [](const LidarPoint& p) { return p.position.norm() < 1e-6; });
    if (config.range_limit) {
      std::erase_if(raw.points,
                    [&](const LidarPoint& p) { return p.position.norm() > *config.range_limit; });
    }

    LidarFrame keypoints;
    bool empty = raw.points.empty();
    if (!empty) {
      StageTimers::Scope scope(&timers, Stage::KeypointExtraction);
      keypoints = extract_keypoints(raw, config.keypoint_grid,
                                    combine_seed(config.seed, static_cast<std::uint64_t>(i)));
    }

    if (window.knots.empty()) {
      // Bootstrap: identity pose, zero twist; both datum knots are fixed and
      // the first frame's points seed the map directly.
      window.knots.push_back(
          WindowKnot{TrajectoryKnot{raw.start_time, Pose(), Twist{}}, true, true});
      window.knots.push_back(
          WindowKnot{TrajectoryKnot{raw.end_time, Pose(), Twist{}}, true, false});
      window.frames.push_back(
          FrameFactors{raw.index, raw.start_time, raw.end_time, {}, {}});
      if (empty) {
        log_warn("frame " + std::to_string(i) + " empty, map not initialized");
        ++result.skipped_frames;
      } else {
        StageTimers::Scope scope(&timers, Stage::MapUpdate);
        std::vector<Eigen::Vector3d> world;
        world.reserve(keypoints.points.size());
        for (const auto& pt : keypoints.points)
          world.push_back(params.extrinsic.t_lv.inverse() * pt.position);
        map.insert_frame(world, Eigen::Vector3d::Zero());
      }
      latest.push_back(window.knots.back().state);
      continue;
    }

    if (empty || map.empty()) {
      log_warn("frame " + std::to_string(i) + (empty ? " empty" : " with empty map") +
               ", extrapolating");
      ++result.skipped_frames;
      window.knots.push_back(
          WindowKnot{extrapolate(window.knots.back().state, raw.end_time), false});
      window.frames.push_back(FrameFactors{raw.index, raw.start_time, raw.end_time, {}, {}});
      if (!empty && map.empty()) {
        // late map bootstrap at the extrapolated poses
        StageTimers::Scope scope(&timers, Stage::MapUpdate);
        const int ki = static_cast<int>(window.knots.size()) - 2;
        const KnotPairCache cache =
            make_pair_cache(window.knots[ki].state, window.knots[ki + 1].state);
        std::vector<Eigen::Vector3d> world;
        world.reserve(keypoints.points.size());
        for (const auto& pt : keypoints.points) {
          const TrajectoryKnot st = interpolate_state_cached(cache, pt.timestamp);
          world.push_back(st.pose.inverse() * (params.extrinsic.t_lv.inverse() * pt.position));
        }
        map.insert_frame(world, window.knots.back().state.pose.inverse().translation());
      }
      while (static_cast<int>(window.knots.size()) > config.solver.window_size + 1)
        published.push_back(marginalize_oldest(window, params));
      latest.push_back(window.knots.back().state);
      continue;
    }

    const AlignResult res =
        align_frame(window, keypoints, map, config.solver, params, published, &timers);
    if (res.diverged) ++result.diverged_frames;
    latest.push_back(window.knots.back().state);
  }

  // Remaining knots leave the window in order; the first knot overall sits at
  // the start of frame 0 and is not a frame record.
  std::vector<TrajectoryKnot> all_knots = std::move(published);
  for (const auto& k : window.knots) all_knots.push_back(k.state);
  result.frames.reserve(n_frames);
  for (int i = 0; i < n_frames; ++i) {
    const TrajectoryKnot& k = config.publish_latest_immediately
                                  ? latest[static_cast<std::size_t>(i)]
                                  : all_knots[static_cast<std::size_t>(i) + 1];
    result.frames.push_back(FrameEstimate{i, k.time, k.pose, k.twist});
  }

  double wall = total_watch.seconds();
  if (!include_io_timing) {
    for (double v : timers.samples(Stage::DatasetIo)) wall -= v;
  }
  result.timing = make_report(timers, wall, n_frames, include_io_timing);
  return result;
}

std::vector<StampedPose> to_stamped_poses(const OdometryResult& result) {
  std::vector<StampedPose> out;
  out.reserve(result.frames.size());
  for (const auto& f : result.frames)
    out.push_back(StampedPose{f.time, f.pose.inverse()});  // world-from-vehicle on disk
  return out;
}

}  // namespace ctlo
