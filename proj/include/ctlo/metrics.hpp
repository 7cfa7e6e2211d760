#pragma once

#include <string>
#include <vector>

#include "ctlo/dataset_io.hpp"

namespace ctlo {

struct SegmentStats {
  double length = 0.0;  // nominal segment length, m
  std::size_t count = 0;
  double mean_translation_pct = 0.0;
  double mean_rotation_deg_per_m = 0.0;
};

struct MetricsReport {
  double kitti_rte_percent = 0.0;
  double kitti_rre_deg_per_m = 0.0;
  double f2f_rte_m = 0.0;
  double f2f_rre_deg = 0.0;
  std::vector<SegmentStats> per_segment;
  std::vector<double> f2f_per_frame;  // translation error per consecutive pair
  int excluded_frames = 0;
  std::size_t paired_frames = 0;

  std::string format() const;      // human-readable table
  std::string key_values() const;  // machine-readable block
};

// Pairs estimate and ground truth by nearest timestamp (within half the
// median frame period), drops the first exclude_first pairs, then computes
// the relative-error metrics over 100..800 m segments and consecutive
// frames. Throws SequenceTooShort when no 100 m segment exists.
MetricsReport evaluate_trajectories(const std::vector<StampedPose>& est,
                                    const std::vector<StampedPose>& gt, int exclude_first);

// Columnar plot data: "length mean_translation_pct" per segment length.
std::string segment_plot_data(const MetricsReport& report);
// "pair_index translation_error_m" per consecutive frame pair.
std::string f2f_plot_data(const MetricsReport& report);

}  // namespace ctlo
