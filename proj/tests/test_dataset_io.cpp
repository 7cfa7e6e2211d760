#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "ctlo/dataset_io.hpp"
#include "oracles.hpp"

using namespace ctlo;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  const fs::path dir =
      fs::temp_directory_path() / ("ctlo_io_test_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("dataset_io") {

TEST_CASE("frame round trip is bit identical") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> ut(0.0, 0.1);

  LidarFrame frame;
  frame.index = 7;
  frame.start_time = 12.3;
  frame.end_time = 12.4;
  for (int i = 0; i < 1000; ++i) {
    LidarPoint pt;
    // float32 storage: generate values that are exactly representable
    pt.position = Eigen::Vector3d(static_cast<float>(u(rng)), static_cast<float>(u(rng)),
                                  static_cast<float>(u(rng)));
    pt.timestamp = frame.start_time + static_cast<double>(static_cast<float>(ut(rng)));
    pt.doppler = i % 3 == 0 ? std::numeric_limits<double>::quiet_NaN()
                            : static_cast<double>(static_cast<float>(u(rng) / 10.0));
    frame.points.push_back(pt);
  }

  const fs::path file = dir / frame_file_name(frame.index);
  write_frame(frame, file);
  CHECK(fs::file_size(file) == 1000 * 20);

  const LidarFrame back = read_frame(file, FrameMeta{7, 12.3, 12.4});
  REQUIRE(back.points.size() == frame.points.size());
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    CHECK((back.points[i].position - frame.points[i].position).norm() == 0.0);
    CHECK(back.points[i].timestamp ==
          doctest::Approx(frame.points[i].timestamp).epsilon(1e-9));
    CHECK(back.points[i].has_doppler() == frame.points[i].has_doppler());
    if (back.points[i].has_doppler()) CHECK(back.points[i].doppler == frame.points[i].doppler);
  }
  fs::remove_all(dir);
}

TEST_CASE("zero-point frame reads back empty") {
  const fs::path dir = temp_dir();
  LidarFrame frame;
  frame.index = 0;
  frame.start_time = 0.0;
  frame.end_time = 0.1;
  write_frame(frame, dir / "empty.bin");
  const LidarFrame back = read_frame(dir / "empty.bin", FrameMeta{0, 0.0, 0.1});
  CHECK(back.points.empty());
  fs::remove_all(dir);
}

TEST_CASE("trailing bytes are a framing error") {
  const fs::path dir = temp_dir();
  std::ofstream out(dir / "bad.bin", std::ios::binary);
  std::vector<char> bytes(41, 0);
  out.write(bytes.data(), bytes.size());
  out.close();
  CHECK_THROWS_AS(read_frame(dir / "bad.bin", FrameMeta{0, 0.0, 0.1}), MalformedRecord);
  fs::remove_all(dir);
}

TEST_CASE("timestamps outside the frame span are rejected") {
  const fs::path dir = temp_dir();
  LidarFrame frame;
  frame.index = 0;
  frame.start_time = 0.0;
  frame.end_time = 0.1;
  LidarPoint pt;
  pt.position = Eigen::Vector3d(1, 0, 0);
  pt.timestamp = 0.5;  // far beyond the 0.1 s span
  frame.points.push_back(pt);
  write_frame(frame, dir / "late.bin");
  CHECK_THROWS_AS(read_frame(dir / "late.bin", FrameMeta{0, 0.0, 0.1}), TimestampOutOfRange);
  fs::remove_all(dir);
}

TEST_CASE("manifest round trip") {
  const fs::path dir = temp_dir();
  std::vector<FrameMeta> metas = {{0, 0.0, 0.1}, {1, 0.1, 0.2}, {2, 0.2, 0.3}};
  write_manifest(metas, dir / "manifest.txt");
  const auto back = read_manifest(dir / "manifest.txt");
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].index == metas[i].index);
    CHECK(back[i].start_time == metas[i].start_time);
    CHECK(back[i].end_time == metas[i].end_time);
  }
  fs::remove_all(dir);
}

TEST_CASE("pose file round trip") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(5);
  std::vector<StampedPose> poses;
  for (int i = 0; i < 1000; ++i)
    poses.push_back(StampedPose{0.1 * i, test::random_pose(rng, 100.0, 3.0)});
  write_poses(poses, dir / "traj.txt");
  const auto back = read_poses(dir / "traj.txt");
  REQUIRE(back.size() == poses.size());
  double prev_time = -1.0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(back[i].time == poses[i].time);
    CHECK((back[i].world_from_vehicle.matrix() - poses[i].world_from_vehicle.matrix()).norm() <
          1e-12);
    CHECK(back[i].time > prev_time);
    prev_time = back[i].time;
  }
  fs::remove_all(dir);
}

TEST_CASE("identity-only trajectory writes [I | 0] rows") {
  const fs::path dir = temp_dir();
  write_poses({StampedPose{0.0, Pose()}}, dir / "id.txt");
  std::ifstream in(dir / "id.txt");
  std::string line;
  std::getline(in, line);
  CHECK(line == "0 1 0 0 0 0 1 0 0 0 0 1 0");
  fs::remove_all(dir);
}

TEST_CASE("non-orthonormal ground truth is rejected") {
  const fs::path dir = temp_dir();
  std::ofstream out(dir / "bad.txt");
  out << "0 1 0.1 0 0 0 1 0 0 0 0 1 0\n";
  out.close();
  CHECK_THROWS_AS(read_poses(dir / "bad.txt"), MalformedRecord);
  fs::remove_all(dir);
}

TEST_CASE("directory reader applies the doppler sign flip") {
  const fs::path dir = temp_dir();
  LidarFrame frame;
  frame.index = 0;
  frame.start_time = 0.0;
  frame.end_time = 0.1;
  LidarPoint pt;
  pt.position = Eigen::Vector3d(1, 2, 3);
  pt.timestamp = 0.05;
  pt.doppler = -4.0;
  frame.points.push_back(pt);
  write_frame(frame, dir / frame_file_name(0));
  write_manifest({{0, 0.0, 0.1}}, dir / "manifest.txt");

  DirectoryReader plain(dir);
  CHECK(plain.frame_count() == 1);
  CHECK(plain.read(0).points[0].doppler == -4.0);

  DirectoryReader flipped(dir, DirectoryReader::Options{-1.0});
  CHECK(flipped.read(0).points[0].doppler == 4.0);
  CHECK_THROWS_AS(plain.read(5), ReaderError);
  fs::remove_all(dir);
}

}  // TEST_SUITE
