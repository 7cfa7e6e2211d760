#include "ctlo/dataset_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ctlo {

namespace {

constexpr std::size_t kRecordBytes = 20;

float read_f32_le(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) |
                    (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void write_f32_le(float f, unsigned char* p) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  p[0] = static_cast<unsigned char>(u & 0xff);
  p[1] = static_cast<unsigned char>((u >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((u >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((u >> 24) & 0xff);
}

}  // namespace

std::vector<FrameMeta> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReaderError("cannot open manifest: " + path.string());
  std::vector<FrameMeta> metas;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    FrameMeta m;
    if (!(ss >> m.index >> m.start_time >> m.end_time))
      throw MalformedRecord("bad manifest line: " + line);
    metas.push_back(m);
  }
  return metas;
}

void write_manifest(const std::vector<FrameMeta>& metas, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out.precision(17);
  for (const auto& m : metas) out << m.index << " " << m.start_time << " " << m.end_time << "\n";
}

std::filesystem::path frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.bin", index);
  return buf;
}

LidarFrame read_frame(const std::filesystem::path& path, const FrameMeta& meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReaderError("cannot open frame: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() % kRecordBytes != 0)
    throw MalformedRecord("frame file size not a multiple of 20: " + path.string());

  LidarFrame frame;
  frame.index = meta.index;
  frame.start_time = meta.start_time;
  frame.end_time = meta.end_time;
  const std::size_t n = bytes.size() / kRecordBytes;
  frame.points.reserve(n);
  const double span = meta.end_time - meta.start_time;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = bytes.data() + i * kRecordBytes;
    LidarPoint pt;
    pt.position = Eigen::Vector3d(read_f32_le(p), read_f32_le(p + 4), read_f32_le(p + 8));
    const double rel = read_f32_le(p + 12);
    if (rel < 0.0 || rel > span + 1e-6) throw TimestampOutOfRange{};
    pt.timestamp = meta.start_time + rel;
    pt.doppler = read_f32_le(p + 16);
    frame.points.push_back(pt);
  }
  return frame;
}

void write_frame(const LidarFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write frame: " + path.string());
  std::vector<unsigned char> bytes(frame.points.size() * kRecordBytes);
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    unsigned char* p = bytes.data() + i * kRecordBytes;
    const auto& pt = frame.points[i];
    write_f32_le(static_cast<float>(pt.position.x()), p);
    write_f32_le(static_cast<float>(pt.position.y()), p + 4);
    write_f32_le(static_cast<float>(pt.position.z()), p + 8);
    write_f32_le(static_cast<float>(pt.timestamp - frame.start_time), p + 12);
    write_f32_le(static_cast<float>(pt.doppler), p + 16);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<StampedPose> read_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReaderError("cannot open pose file: " + path.string());
  std::vector<StampedPose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    double t;
    double v[12];
    if (!(ss >> t)) throw MalformedRecord("bad pose line: " + line);
    for (double& x : v)
      if (!(ss >> x)) throw MalformedRecord("bad pose line: " + line);
    Eigen::Matrix3d r;
    r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).norm() > 1e-6)
      throw MalformedRecord("non-orthonormal rotation in pose file");
    poses.push_back(StampedPose{t, Pose(r, Eigen::Vector3d(v[3], v[7], v[11]))});
  }
  return poses;
}

void write_poses(const std::vector<StampedPose>& poses, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose file: " + path.string());
  out.precision(17);
  for (const auto& sp : poses) {
    const Eigen::Matrix3d& r = sp.world_from_vehicle.rotation();
    const Eigen::Vector3d& t = sp.world_from_vehicle.translation();
    out << sp.time;
    for (int i = 0; i < 3; ++i)
      out << " " << r(i, 0) << " " << r(i, 1) << " " << r(i, 2) << " " << t(i);
    out << "\n";
  }
}

DirectoryReader::DirectoryReader(const std::filesystem::path& dir, const Options& options)
    : dir_(dir), options_(options) {
  metas_ = read_manifest(dir_ / "manifest.txt");
}

LidarFrame DirectoryReader::read(int i) {
  if (i < 0 || i >= frame_count()) throw ReaderError("frame index out of range");
  LidarFrame frame = read_frame(dir_ / frame_file_name(metas_[i].index), metas_[i]);
  if (options_.doppler_sign != 1.0)
    for (auto& pt : frame.points)
      if (pt.has_doppler()) pt.doppler *= options_.doppler_sign;
  return frame;
}

}  // namespace ctlo
