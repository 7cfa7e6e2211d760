#include "ctlo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctlo {

namespace {

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

double rotation_angle(const Eigen::Matrix3d& r) {
  return std::acos(std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0));
}

}  // namespace

MetricsReport evaluate_trajectories(const std::vector<StampedPose>& est,
                                    const std::vector<StampedPose>& gt, int exclude_first) {
  if (est.empty() || gt.empty()) throw SequenceTooShort{};

  // median frame period of the estimate, for the pairing tolerance
  std::vector<double> periods;
  for (std::size_t i = 1; i < est.size(); ++i) periods.push_back(est[i].time - est[i - 1].time);
  double tol = 0.05;
  if (!periods.empty()) {
    std::nth_element(periods.begin(), periods.begin() + periods.size() / 2, periods.end());
    tol = 0.5 * periods[periods.size() / 2];
  }

  // nearest-timestamp pairing
  std::vector<std::pair<Pose, Pose>> pairs;  // (est, gt), world-from-vehicle
  for (const auto& e : est) {
    std::size_t best = 0;
    double best_dt = std::abs(gt[0].time - e.time);
    for (std::size_t j = 1; j < gt.size(); ++j) {
      const double dt = std::abs(gt[j].time - e.time);
      if (dt < best_dt) {
        best = j;
        best_dt = dt;
      }
    }
    if (best_dt <= tol) pairs.emplace_back(e.world_from_vehicle, gt[best].world_from_vehicle);
  }

  MetricsReport report;
  report.excluded_frames = std::min<int>(exclude_first, static_cast<int>(pairs.size()));
  pairs.erase(pairs.begin(), pairs.begin() + report.excluded_frames);
  report.paired_frames = pairs.size();
  if (pairs.size() < 2) throw SequenceTooShort{};

  const std::size_t n = pairs.size();
  std::vector<double> cumdist(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    cumdist[i] = cumdist[i - 1] +
                 (pairs[i].second.translation() - pairs[i - 1].second.translation()).norm();
  }

  // KITTI-style relative errors over 100..800 m segments; start indices
  // advance every frame.
  constexpr int kLengths = 8;
  std::vector<double> t_sum(kLengths, 0.0), r_sum(kLengths, 0.0);
  std::vector<std::size_t> seg_count(kLengths, 0);
#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    std::vector<double> t_local(kLengths, 0.0), r_local(kLengths, 0.0);
    std::vector<std::size_t> c_local(kLengths, 0);
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (long long start = 0; start < static_cast<long long>(n); ++start) {
      std::size_t j = static_cast<std::size_t>(start);
      for (int li = 0; li < kLengths; ++li) {
        const double length = 100.0 * (li + 1);
        while (j < n && cumdist[j] - cumdist[start] < length) ++j;
        if (j >= n) break;
        const Pose est_rel = pairs[start].first.inverse() * pairs[j].first;
        const Pose gt_rel = pairs[start].second.inverse() * pairs[j].second;
        const Pose err = gt_rel.inverse() * est_rel;
        t_local[li] += err.translation().norm() / length;
        r_local[li] += rotation_angle(err.rotation()) * kRadToDeg / length;
        ++c_local[li];
      }
    }
#ifdef _OPENMP
#pragma omp critical(metrics_reduce)
#endif
    for (int li = 0; li < kLengths; ++li) {
      t_sum[li] += t_local[li];
      r_sum[li] += r_local[li];
      seg_count[li] += c_local[li];
    }
  }

  std::size_t total_segments = 0;
  double t_total = 0.0, r_total = 0.0;
  for (int li = 0; li < kLengths; ++li) {
    if (seg_count[li] == 0) continue;
    SegmentStats s;
    s.length = 100.0 * (li + 1);
    s.count = seg_count[li];
    s.mean_translation_pct = 100.0 * t_sum[li] / seg_count[li];
    s.mean_rotation_deg_per_m = r_sum[li] / seg_count[li];
    report.per_segment.push_back(s);
    total_segments += seg_count[li];
    t_total += t_sum[li];
    r_total += r_sum[li];
  }
  if (total_segments == 0) throw SequenceTooShort{};
  report.kitti_rte_percent = 100.0 * t_total / total_segments;
  report.kitti_rre_deg_per_m = r_total / total_segments;

  // frame-to-frame relative errors over consecutive pairs
  double f2f_t = 0.0, f2f_r = 0.0;
  report.f2f_per_frame.reserve(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    const Pose est_rel = pairs[i - 1].first.inverse() * pairs[i].first;
    const Pose gt_rel = pairs[i - 1].second.inverse() * pairs[i].second;
    const Pose err = gt_rel.inverse() * est_rel;
    const double te = err.translation().norm();
    report.f2f_per_frame.push_back(te);
    f2f_t += te;
    f2f_r += rotation_angle(err.rotation()) * kRadToDeg;
  }
  report.f2f_rte_m = f2f_t / static_cast<double>(n - 1);
  report.f2f_rre_deg = f2f_r / static_cast<double>(n - 1);
  return report;
}

std::string MetricsReport::format() const {
  std::ostringstream os;
  os << "paired frames: " << paired_frames << " (excluded first " << excluded_frames << ")\n";
  os << "KITTI RTE:          " << kitti_rte_percent << " %\n";
  os << "KITTI RRE:          " << kitti_rre_deg_per_m << " deg/m\n";
  os << "Frame-to-Frame RTE: " << f2f_rte_m << " m\n";
  os << "Frame-to-Frame RRE: " << f2f_rre_deg << " deg\n";
  os << "segment   count   trans[%]   rot[deg/m]\n";
  char line[128];
  for (const auto& s : per_segment) {
    std::snprintf(line, sizeof(line), "%6.0fm %7zu %10.4f %12.6f\n", s.length, s.count,
                  s.mean_translation_pct, s.mean_rotation_deg_per_m);
    os << line;
  }
  return os.str();
}

std::string MetricsReport::key_values() const {
  std::ostringstream os;
  os << "metrics.kitti_rte_percent " << kitti_rte_percent << "\n";
  os << "metrics.kitti_rre_deg_per_m " << kitti_rre_deg_per_m << "\n";
  os << "metrics.f2f_rte_m " << f2f_rte_m << "\n";
  os << "metrics.f2f_rre_deg " << f2f_rre_deg << "\n";
  os << "metrics.paired_frames " << paired_frames << "\n";
  os << "metrics.excluded_frames " << excluded_frames << "\n";
  for (const auto& s : per_segment) {
    os << "metrics.segment_" << static_cast<int>(s.length) << "m.count " << s.count << "\n";
    os << "metrics.segment_" << static_cast<int>(s.length) << "m.trans_pct "
       << s.mean_translation_pct << "\n";
    os << "metrics.segment_" << static_cast<int>(s.length) << "m.rot_deg_per_m "
       << s.mean_rotation_deg_per_m << "\n";
  }
  return os.str();
}

std::string segment_plot_data(const MetricsReport& report) {
  std::ostringstream os;
  os << "# segment_length_m mean_translation_error_pct mean_rotation_error_deg_per_m\n";
  for (const auto& s : report.per_segment)
    os << s.length << " " << s.mean_translation_pct << " " << s.mean_rotation_deg_per_m << "\n";
  return os.str();
}

std::string f2f_plot_data(const MetricsReport& report) {
  std::ostringstream os;
  os << "# pair_index translation_error_m\n";
  for (std::size_t i = 0; i < report.f2f_per_frame.size(); ++i)
    os << i << " " << report.f2f_per_frame[i] << "\n";
  return os.str();
}

}  // namespace ctlo
