#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ctlo {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector12d = Eigen::Matrix<double, 12, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix12d = Eigen::Matrix<double, 12, 12>;
using Matrix3x4d = Eigen::Matrix<double, 3, 4>;
using Matrix4x6d = Eigen::Matrix<double, 4, 6>;

struct AngleNearPi : std::runtime_error {
  AngleNearPi() : std::runtime_error("rotation angle too close to pi") {}
};
struct NonPositiveDt : std::runtime_error {
  NonPositiveDt() : std::runtime_error("knot times must be strictly increasing") {}
};
struct TauOutOfRange : std::runtime_error {
  TauOutOfRange() : std::runtime_error("query time outside knot interval") {}
};
struct TauBeforeKnot : std::runtime_error {
  TauBeforeKnot() : std::runtime_error("extrapolation time before knot") {}
};
struct EmptyFrame : std::runtime_error {
  EmptyFrame() : std::runtime_error("frame has no points") {}
};
struct EmptyMap : std::runtime_error {
  EmptyMap() : std::runtime_error("local map is empty") {}
};
struct DegenerateNeighborhood : std::runtime_error {
  DegenerateNeighborhood() : std::runtime_error("all neighbors coincident") {}
};
struct ZeroRangePoint : std::runtime_error {
  ZeroRangePoint() : std::runtime_error("point at sensor origin") {}
};
struct MissingDoppler : std::runtime_error {
  MissingDoppler() : std::runtime_error("point carries no doppler measurement") {}
};
struct FactorOutsideWindow : std::runtime_error {
  FactorOutsideWindow() : std::runtime_error("factor timestamp outside window span") {}
};
struct MalformedRecord : std::runtime_error {
  explicit MalformedRecord(const std::string& what) : std::runtime_error(what) {}
};
struct TimestampOutOfRange : std::runtime_error {
  TimestampOutOfRange() : std::runtime_error("point timestamp outside frame bounds") {}
};
struct SequenceTooShort : std::runtime_error {
  SequenceTooShort() : std::runtime_error("trajectory too short for requested segments") {}
};
struct ReaderError : std::runtime_error {
  explicit ReaderError(const std::string& what) : std::runtime_error(what) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};
struct NoTrajectoryCoverage : std::runtime_error {
  NoTrajectoryCoverage() : std::runtime_error("trajectory does not cover frame interval") {}
};

inline void log_warn(const std::string& msg) { std::cerr << "[warn] " << msg << "\n"; }
inline void log_info(const std::string& msg) { std::cerr << "[info] " << msg << "\n"; }

inline int resolve_threads(int requested) {
#ifdef _OPENMP
  if (requested <= 0) return omp_get_max_threads();
  return requested;
#else
  (void)requested;
  return 1;
#endif
}

// Runs fn(i) for i in [0, n). Results must be written to per-index slots so
// the output is identical for any thread count.
template <typename Fn>
void parallel_for(int n, int num_threads, Fn&& fn) {
  const int threads = resolve_threads(num_threads);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1 && n > 1)
#endif
  for (int i = 0; i < n; ++i) fn(i);
}

// splitmix64; used to derive independent per-frame / per-voxel seeds.
inline std::uint64_t hash_u64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t salt) {
  return hash_u64(seed ^ hash_u64(salt));
}

}  // namespace ctlo
