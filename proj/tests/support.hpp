#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "canopy/core.hpp"

namespace canopy::testing {

inline LidarPoint pt(double x, double y, double z, std::uint64_t pulse = 0, bool ground = false) {
  LidarPoint p;
  p.x = x;
  p.y = y;
  p.z = z;
  p.pulse_id = pulse;
  p.is_ground = ground;
  return p;
}

// Already-normalized point: z doubles as height above ground.
inline LidarPoint hpt(double x, double y, double h, std::uint64_t pulse = 0) {
  LidarPoint p = pt(x, y, h, pulse);
  p.height_above_ground = h;
  return p;
}

inline PointCloud square_cloud(std::vector<LidarPoint> pts, double side) {
  return PointCloud(std::move(pts), {0.0, 0.0, side, side}, side * side);
}

// Horizontally uniform points with heights drawn from the given bands; `truth`
// receives the band index of each point. Every point is its own pulse.
struct Band {
  double low, high;
  double density;  // pt/m^2
};

inline PointCloud banded_cloud(double side, const std::vector<Band>& bands, std::uint64_t seed,
                               std::vector<int>* truth = nullptr) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LidarPoint> pts;
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const auto n = static_cast<std::size_t>(bands[b].density * side * side);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = bands[b].low + (bands[b].high - bands[b].low) * u(g);
      pts.push_back(hpt(u(g) * side, u(g) * side, h, pts.size()));
      if (truth) truth->push_back(static_cast<int>(b) + 1);
    }
  }
  return square_cloud(std::move(pts), side);
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("canopy_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace canopy::testing
