#include "ctlo/timing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctlo {

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::KeypointExtraction: return "keypoint_extraction";
    case Stage::Association: return "association";
    case Stage::FactorEvaluation: return "factor_evaluation";
    case Stage::LinearSolve: return "linear_solve";
    case Stage::Marginalization: return "marginalization";
    case Stage::MapUpdate: return "map_update";
    case Stage::DatasetIo: return "dataset_io";
    default: return "unknown";
  }
}

TimingReport make_report(const StageTimers& timers, double wall_time, int frames,
                         bool include_io) {
  TimingReport report;
  report.wall_time = wall_time;
  report.frames = frames;
  report.include_io = include_io;
  for (std::size_t s = 0; s < static_cast<std::size_t>(Stage::kCount); ++s) {
    const Stage stage = static_cast<Stage>(s);
    if (stage == Stage::DatasetIo && !include_io) continue;
    const auto& samples = timers.samples(stage);
    if (samples.empty()) continue;
    StageTiming t;
    t.stage = stage_name(stage);
    t.count = samples.size();
    for (double v : samples) {
      t.total += v;
      t.max = std::max(t.max, v);
    }
    t.mean = t.total / static_cast<double>(samples.size());
    std::vector<double> sorted(samples);
    std::sort(sorted.begin(), sorted.end());
    const std::size_t idx = static_cast<std::size_t>(
        std::min<double>(sorted.size() - 1.0, std::ceil(0.95 * sorted.size()) - 1.0));
    t.p95 = sorted[idx];
    report.stages.push_back(std::move(t));
  }
  return report;
}

std::string format_report(const TimingReport& report) {
  std::ostringstream os;
  os << "stage                 count      total[s]    mean[ms]     p95[ms]     max[ms]\n";
  char line[160];
  for (const auto& t : report.stages) {
    std::snprintf(line, sizeof(line), "%-20s %6zu %13.4f %11.3f %11.3f %11.3f\n",
                  t.stage.c_str(), t.count, t.total, 1e3 * t.mean, 1e3 * t.p95, 1e3 * t.max);
    os << line;
  }
  os << "frames: " << report.frames << "  wall time: " << report.wall_time << " s  throughput: ";
  if (report.hz() >= 0.0)
    os << report.hz() << " Hz\n";
  else
    os << "n/a\n";
  return os.str();
}

std::string report_key_values(const TimingReport& report) {
  std::ostringstream os;
  for (const auto& t : report.stages) {
    os << "timing." << t.stage << ".count " << t.count << "\n";
    os << "timing." << t.stage << ".total_s " << t.total << "\n";
    os << "timing." << t.stage << ".mean_s " << t.mean << "\n";
    os << "timing." << t.stage << ".p95_s " << t.p95 << "\n";
  }
  os << "timing.frames " << report.frames << "\n";
  os << "timing.wall_time_s " << report.wall_time << "\n";
  os << "timing.hz " << (report.hz() >= 0.0 ? std::to_string(report.hz()) : "n/a") << "\n";
  return os.str();
}

}  // namespace ctlo
