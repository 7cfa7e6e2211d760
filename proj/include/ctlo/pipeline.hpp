#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctlo/dataset_io.hpp"
#include "ctlo/factors.hpp"
#include "ctlo/frontend.hpp"
#include "ctlo/solver.hpp"
#include "ctlo/timing.hpp"

namespace ctlo {

enum class OdometryMode { IcpOnly, Doppler };

struct PipelineConfig {
  OdometryMode mode = OdometryMode::Doppler;

  // front-end
  double keypoint_grid = 1.5;         // m, one random point kept per voxel
  double map_voxel_size = 1.0;        // m
  int map_max_points_per_voxel = 20;
  double map_crop_radius = 100.0;     // m around the latest estimate
  std::optional<double> range_limit;  // m; drops far points before extraction
  std::uint64_t seed = 0;

  // motion prior
  WnoaPriorParams prior;

  // factor weights / robust kernels (truncations in raw units)
  double beta = 0.1;
  double p2p_sigma = 0.1;       // m
  double dv_sigma = 0.1;        // m/s
  double p2p_truncation = 0.5;  // m, raw point-to-plane error
  double dv_truncation = 2.0;   // m/s, raw Doppler error
  double p2p_cauchy_k = 1.0;    // whitened units
  double dv_cauchy_k = 1.0;

  // solver
  SolverConfig solver;

  // extrinsic (vehicle-to-lidar), row-major 3x4 [R|t]
  Pose t_lv;

  double doppler_sign = 1.0;
  bool publish_latest_immediately = false;  // publish newest-knot estimates instead
                                            // of window-exit estimates

  FactorParams factor_params() const;
};

std::string config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

struct FrameEstimate {
  int frame_index = 0;
  double time = 0.0;
  Pose pose;    // T_vi at the frame end
  Twist twist;  // body-centric velocity at the frame end
};

struct OdometryResult {
  std::vector<FrameEstimate> frames;
  TimingReport timing;
  int skipped_frames = 0;
  int diverged_frames = 0;
};

// Streams frames through front-end and solver. The first frame bootstraps
// the map at identity pose with zero twist; later frames are aligned in the
// sliding window. Per-frame solver failures keep the extrapolated state and
// the run continues.
OdometryResult run_pipeline(const PipelineConfig& config, FrameReader& reader,
                            bool include_io_timing = false);

std::vector<StampedPose> to_stamped_poses(const OdometryResult& result);

}  // namespace ctlo
