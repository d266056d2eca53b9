#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "canopy/core.hpp"
#include "canopy/rng.hpp"

namespace canopy {

struct DecimationSpec {
  double target_pcd = 4.0;  // pt/m^2
  std::uint64_t seed = 0;
};

struct DecimationResult {
  PointCloud cloud;
  double target_pcd = 0.0;
  double achieved_pcd = 0.0;
  std::uint64_t seed = 0;
};

// Thins a cloud to roughly one pulse per footprint cell of the target
// density: one first return is drawn per cell and every return of its pulse
// is kept. Cells without a first return contribute nothing, so the achieved
// density can fall short of the target near the source density.
inline DecimationResult decimate(const PointCloud& cloud, const DecimationSpec& spec) {
  if (!(spec.target_pcd > 0.0)) throw Error(ErrorKind::InvalidArgument, "target density must be positive");
  validate_returns(cloud.points());

  const GridIndex grid = build_grid(cloud, compute_afp(spec.target_pcd));
  const auto& pts = cloud.points();

  std::unordered_set<std::uint64_t> kept_pulses;
  kept_pulses.reserve(grid.cell_count());
  std::vector<std::size_t> candidates;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    candidates.clear();
    for (auto id : grid.cell_points(c))
      if (pts[id].return_number == 1) candidates.push_back(id);
    if (candidates.empty()) continue;
    const auto cell = grid.cell(c);
    StreamRng rng(mix_seed(spec.seed, {static_cast<std::uint64_t>(cell.col), static_cast<std::uint64_t>(cell.row)}));
    kept_pulses.insert(pts[candidates[rng.below(candidates.size())]].pulse_id);
  }

  std::vector<LidarPoint> out;
  for (const auto& p : pts)
    if (kept_pulses.count(p.pulse_id)) out.push_back(p);
  DecimationResult r;
  r.cloud = PointCloud(std::move(out), cloud.extent(), cloud.area());
  r.target_pcd = spec.target_pcd;
  r.achieved_pcd = point_density(r.cloud);
  r.seed = spec.seed;
  return r;
}

}  // namespace canopy
