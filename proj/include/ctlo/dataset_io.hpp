#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ctlo/frontend.hpp"
#include "ctlo/se3.hpp"

namespace ctlo {

// On-disk frame record: little-endian float32 x, y, z, relative_timestamp,
// doppler per point (20 bytes); NaN doppler means the channel is absent.
// Frame files are named frame_NNNNNN.bin; the manifest holds one
// "index start_time end_time" line per frame.

struct FrameMeta {
  int index = 0;
  double start_time = 0.0;
  double end_time = 0.0;
};

std::vector<FrameMeta> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<FrameMeta>& metas, const std::filesystem::path& path);

std::filesystem::path frame_file_name(int index);

LidarFrame read_frame(const std::filesystem::path& path, const FrameMeta& meta);
void write_frame(const LidarFrame& frame, const std::filesystem::path& path);

// Timestamped poses, one line each: timestamp + row-major 3x4 [R|t],
// world-from-vehicle. Rotations are checked for orthonormality on read.
struct StampedPose {
  double time = 0.0;
  Pose world_from_vehicle;
};

std::vector<StampedPose> read_poses(const std::filesystem::path& path);
void write_poses(const std::vector<StampedPose>& poses, const std::filesystem::path& path);

// Streaming access to a dataset directory (manifest + frame files + optional
// ground truth). Adapters for other on-disk layouts only need to implement
// this interface.
class FrameReader {
 public:
  virtual ~FrameReader() = default;
  virtual int frame_count() const = 0;
  virtual LidarFrame read(int i) = 0;
};

class DirectoryReader final : public FrameReader {
 public:
  struct Options {
    double doppler_sign = 1.0;  // flip for sensors with the opposite convention
  };

  explicit DirectoryReader(const std::filesystem::path& dir) : DirectoryReader(dir, Options{}) {}
  DirectoryReader(const std::filesystem::path& dir, const Options& options);

  int frame_count() const override { return static_cast<int>(metas_.size()); }
  LidarFrame read(int i) override;
  const std::vector<FrameMeta>& metas() const { return metas_; }

 private:
  std::filesystem::path dir_;
  Options options_;
  std::vector<FrameMeta> metas_;
};

}  // namespace ctlo
