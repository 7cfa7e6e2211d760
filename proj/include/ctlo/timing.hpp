#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <string>
#include <vector>

namespace ctlo {

enum class Stage {
  KeypointExtraction = 0,
  Association,
  FactorEvaluation,
  LinearSolve,
  Marginalization,
  MapUpdate,
  DatasetIo,
  kCount
};

const char* stage_name(Stage stage);

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Per-stage scoped accumulators; aggregation happens at report time.
class StageTimers {
 public:
  class Scope {
   public:
    Scope(StageTimers* timers, Stage stage) : timers_(timers), stage_(stage) {}
    ~Scope() {
      if (timers_) timers_->add(stage_, watch_.seconds());
    }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    StageTimers* timers_;
    Stage stage_;
    Stopwatch watch_;
  };

  Scope scoped(Stage stage) { return Scope(this, stage); }
  void add(Stage stage, double seconds) {
    samples_[static_cast<std::size_t>(stage)].push_back(seconds);
  }
  const std::vector<double>& samples(Stage stage) const {
    return samples_[static_cast<std::size_t>(stage)];
  }

 private:
  std::array<std::vector<double>, static_cast<std::size_t>(Stage::kCount)> samples_;
};

struct StageTiming {
  std::string stage;
  std::size_t count = 0;
  double total = 0.0;
  double mean = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

struct TimingReport {
  std::vector<StageTiming> stages;
  double wall_time = 0.0;  // whole-run wall time, excluding dataset io when asked
  int frames = 0;
  bool include_io = false;

  // frames / wall_time; < 0 when undefined (no frames)
  double hz() const { return frames > 0 && wall_time > 0.0 ? frames / wall_time : -1.0; }
};

TimingReport make_report(const StageTimers& timers, double wall_time, int frames,
                         bool include_io);

std::string format_report(const TimingReport& report);   // human table
std::string report_key_values(const TimingReport& report);  // machine-readable lines

}  // namespace ctlo
