#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "canopy/core.hpp"
#include "canopy/evaluate.hpp"
#include "canopy/rng.hpp"

namespace canopy {

enum class TerrainKind { Flat, Ramp };

// Flat ground at `base`, or a ramp rising `slope` metres per metre along x.
struct Terrain {
  TerrainKind kind = TerrainKind::Flat;
  double base = 0.0;
  double slope = 0.0;

  double elevation(double x, double /*y*/) const {
    return kind == TerrainKind::Ramp ? base + slope * x : base;
  }
};

// Ellipsoidal crown; heights are above ground at the stem.
struct CrownShape {
  double center_height = 0.0;
  double vertical_semi_axis = 0.0;
  double horizontal_semi_axis = 0.0;
};

struct StandStem {
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  int tier = 1;          // 1 = overstory, 3 = lowest
  double height = 0.0;   // crown top above ground
  CrownShape crown;
};

struct SyntheticStand {
  std::vector<StandStem> stems;
  Terrain terrain;
  Extent extent;
  double area = 0.0;
};

struct TierCounts {
  std::size_t tier1 = 0;
  std::size_t tier2 = 0;
  std::size_t tier3 = 0;
};

struct TierBand {
  double min_height, max_height;          // crown top, m
  double min_crown_radius, max_crown_radius;
  double crown_depth_ratio;               // vertical semi-axis / height
};

inline constexpr TierBand kTierBands[3] = {
    {18.0, 28.0, 3.0, 5.0, 0.22},
    {8.0, 15.0, 1.5, 2.6, 0.22},
    {4.0, 8.0, 1.0, 1.8, 0.22},
};
inline constexpr double kMinStemSpacing = 1.5;
inline constexpr int kMaxPlacementRejections = 10000;

// Stems drawn uniformly over the extent with rejection against a 1.5 m
// minimum spacing; tier 1 is placed first.
inline SyntheticStand generate_stand(const Extent& extent, TierCounts counts, std::uint64_t seed,
                                     Terrain terrain = {}) {
  if (!extent.valid() || !(extent.width() > 0.0) || !(extent.height() > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "stand extent must have positive size");
  }
  SyntheticStand stand;
  stand.extent = extent;
  stand.area = extent.width() * extent.height();
  stand.terrain = terrain;
  StreamRng rng(mix_seed(seed, {0x57A4D}));
  const std::size_t per_tier[3] = {counts.tier1, counts.tier2, counts.tier3};
  int next_id = 0;
  for (int tier = 1; tier <= 3; ++tier) {
    const TierBand& band = kTierBands[tier - 1];
    for (std::size_t k = 0; k < per_tier[tier - 1]; ++k) {
      StandStem s;
      int attempts = 0;
      for (;;) {
        s.x = rng.uniform(extent.min_x, extent.max_x);
        s.y = rng.uniform(extent.min_y, extent.max_y);
        const bool clear = std::none_of(stand.stems.begin(), stand.stems.end(), [&](const StandStem& o) {
          return std::hypot(o.x - s.x, o.y - s.y) < kMinStemSpacing;
        });
        if (clear) break;
        if (++attempts >= kMaxPlacementRejections) {
          throw Error(ErrorKind::PlacementFailure,
                      "could not place stem " + std::to_string(next_id) + " with 1.5 m spacing");
        }
      }
      s.id = next_id++;
      s.tier = tier;
      s.height = rng.uniform(band.min_height, band.max_height);
      s.crown.horizontal_semi_axis = rng.uniform(band.min_crown_radius, band.max_crown_radius);
      s.crown.vertical_semi_axis = band.crown_depth_ratio * s.height;
      s.crown.center_height = s.height - s.crown.vertical_semi_axis;
      stand.stems.push_back(s);
    }
  }
  return stand;
}

struct ScanConfig {
  double pulse_density = 44.0;  // pulses/m^2, about 50 returns/m^2 with the default stand
  int max_returns = 4;
  double scan_half_angle = 20.0;  // degrees
  // Chance a crown traversal echoes; an echoing crown also stops the pulse
  // with the same probability.
  double attenuation = 0.6;
  double ground_reflect = 0.9;
  std::uint64_t seed = 1;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!(pulse_density > 0.0)) throw Error(ErrorKind::InvalidArgument, "pulse density must be positive");
    if (max_returns < 1 || max_returns > 15) throw Error(ErrorKind::InvalidArgument, "max_returns must be 1..15");
    if (!(scan_half_angle >= 0.0 && scan_half_angle < 90.0)) {
      throw Error(ErrorKind::InvalidArgument, "scan half angle must lie in [0, 90)");
    }
    if (!prob(attenuation) || !prob(ground_reflect)) {
      throw Error(ErrorKind::InvalidArgument, "attenuation and ground_reflect must lie in [0, 1]");
    }
  }
};

struct ScanResult {
  PointCloud cloud;
  // Per point: generating stem id (-1 for ground) and tier (0 for ground).
  std::vector<int> stem_id;
  std::vector<int> tier;
  std::size_t pulses = 0;
};

namespace detail {

// Crowns bucketed by the cells their horizontal footprint overlaps.
class CrownBuckets {
 public:
  CrownBuckets(const SyntheticStand& stand, double cell) : cell_(cell) {
    double min_x = stand.extent.min_x, min_y = stand.extent.min_y;
    double max_x = stand.extent.max_x, max_y = stand.extent.max_y;
    for (const auto& s : stand.stems) {
      min_x = std::min(min_x, s.x - s.crown.horizontal_semi_axis);
      min_y = std::min(min_y, s.y - s.crown.horizontal_semi_axis);
      max_x = std::max(max_x, s.x + s.crown.horizontal_semi_axis);
      max_y = std::max(max_y, s.y + s.crown.horizontal_semi_axis);
    }
    ox_ = min_x;
    oy_ = min_y;
    cols_ = static_cast<std::int64_t>(std::floor((max_x - min_x) / cell)) + 1;
    rows_ = static_cast<std::int64_t>(std::floor((max_y - min_y) / cell)) + 1;
    buckets_.resize(static_cast<std::size_t>(cols_ * rows_));
    for (std::size_t i = 0; i < stand.stems.size(); ++i) {
      const auto& s = stand.stems[i];
      const double r = s.crown.horizontal_semi_axis;
      for (auto row = clamp_row(s.y - r); row <= clamp_row(s.y + r); ++row)
        for (auto col = clamp_col(s.x - r); col <= clamp_col(s.x + r); ++col)
          buckets_[static_cast<std::size_t>(row * cols_ + col)].push_back(i);
    }
  }

  // Crowns whose footprint may meet the planar box [x0,x1] x [y0,y1].
  void collect(double x0, double y0, double x1, double y1, std::vector<std::size_t>& out) const {
    out.clear();
    for (auto row = clamp_row(y0); row <= clamp_row(y1); ++row)
      for (auto col = clamp_col(x0); col <= clamp_col(x1); ++col) {
        const auto& b = buckets_[static_cast<std::size_t>(row * cols_ + col)];
        out.insert(out.end(), b.begin(), b.end());
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }

 private:
  std::int64_t clamp_col(double x) const {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((x - ox_) / cell_)), 0, cols_ - 1);
  }
  std::int64_t clamp_row(double y) const {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((y - oy_) / cell_)), 0, rows_ - 1);
  }

  double cell_;
  double ox_ = 0.0, oy_ = 0.0;
  std::int64_t cols_ = 1, rows_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

}  // namespace detail

// Airborne scan of a stand. Pulses sit on a jittered grid, each tilted up to
// the scan half angle and traced downward to its ground point. Every crown
// entered echoes with probability `attenuation`; an echoing crown stops the
// pulse with the same probability, and a pulse ends after max_returns echoes.
// Pulses reaching the ground echo there with probability `ground_reflect`.
inline ScanResult scan_stand(const SyntheticStand& stand, const ScanConfig& config) {
  config.validate();
  const Extent& e = stand.extent;
  const double spacing = 1.0 / std::sqrt(config.pulse_density);
  const auto nx = std::max<std::int64_t>(1, std::llround(e.width() / spacing));
  // Rows follow from the pulse budget so rounding nx cannot inflate the count.
  const auto ny = std::max<std::int64_t>(
      1, std::llround(e.width() * e.height() * config.pulse_density / static_cast<double>(nx)));
  const double sx = e.width() / static_cast<double>(nx);
  const double sy = e.height() / static_cast<double>(ny);
  const double max_tilt = config.scan_half_angle * std::numbers::pi / 180.0;

  double top = 0.0;
  for (const auto& s : stand.stems) top = std::max(top, s.height);
  const detail::CrownBuckets buckets(stand, 4.0);

  ScanResult out;
  std::vector<LidarPoint> points;
  points.reserve(static_cast<std::size_t>(nx * ny * 2));
  std::vector<std::size_t> candidates;
  struct Hit {
    double s;
    std::size_t stem;
  };
  std::vector<Hit> hits;

  for (std::int64_t j = 0; j < ny; ++j) {
    for (std::int64_t i = 0; i < nx; ++i) {
      const auto pulse = static_cast<std::uint64_t>(j * nx + i);
      StreamRng rng(mix_seed(config.seed, {pulse}));
      const double gx = e.min_x + (static_cast<double>(i) + rng.uniform()) * sx;
      const double gy = e.min_y + (static_cast<double>(j) + rng.uniform()) * sy;
      const double gz = stand.terrain.elevation(gx, gy);
      const double tilt = rng.uniform(0.0, max_tilt);
      const double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
      // Unit vector from the ground point back toward the sensor.
      const double ux = std::sin(tilt) * std::cos(azimuth);
      const double uy = std::sin(tilt) * std::sin(azimuth);
      const double uz = std::cos(tilt);

      const double far_x = gx + ux / uz * (top + 1.0), far_y = gy + uy / uz * (top + 1.0);
      buckets.collect(std::min(gx, far_x), std::min(gy, far_y), std::max(gx, far_x), std::max(gy, far_y),
                      candidates);
      hits.clear();
      for (auto k : candidates) {
        const auto& st = stand.stems[k];
        const double a = st.crown.vertical_semi_axis, b = st.crown.horizontal_semi_axis;
        const double cz = stand.terrain.elevation(st.x, st.y) + st.crown.center_height;
        const double px = (gx - st.x) / b, py = (gy - st.y) / b, pz = (gz - cz) / a;
        const double dx = ux / b, dy = uy / b, dz = uz / a;
        const double A = dx * dx + dy * dy + dz * dz;
        const double B = 2.0 * (px * dx + py * dy + pz * dz);
        const double C = px * px + py * py + pz * pz - 1.0;
        const double disc = B * B - 4.0 * A * C;
        if (disc <= 0.0) continue;
        const double entry = (-B + std::sqrt(disc)) / (2.0 * A);
        if (entry > 0.0) hits.push_back({entry, k});
      }
      std::sort(hits.begin(), hits.end(), [](const Hit& l, const Hit& r) {
        return l.s > r.s || (l.s == r.s && l.stem < r.stem);
      });

      const std::size_t first = points.size();
      bool travelling = true;
      int returns = 0;
      for (const auto& h : hits) {
        if (!travelling || returns >= config.max_returns) break;
        if (rng.uniform() < config.attenuation) {
          LidarPoint p;
          p.x = gx + ux * h.s;
          p.y = gy + uy * h.s;
          p.z = gz + uz * h.s;
          p.pulse_id = pulse;
          points.push_back(p);
          out.stem_id.push_back(stand.stems[h.stem].id);
          out.tier.push_back(stand.stems[h.stem].tier);
          ++returns;
          if (rng.uniform() < config.attenuation) travelling = false;
        }
      }
      if (travelling && returns < config.max_returns && rng.uniform() < config.ground_reflect) {
        LidarPoint p;
        p.x = gx;
        p.y = gy;
        p.z = gz;
        p.pulse_id = pulse;
        p.is_ground = true;
        points.push_back(p);
        out.stem_id.push_back(-1);
        out.tier.push_back(0);
        ++returns;
      }
      for (std::size_t q = first; q < points.size(); ++q) {
        points[q].return_number = static_cast<std::uint8_t>(q - first + 1);
        points[q].returns_of_pulse = static_cast<std::uint8_t>(returns);
      }
    }
  }
  out.pulses = static_cast<std::size_t>(nx * ny);
  const Extent cloud_extent = points.empty() ? e : e.united(bounding_extent(points));
  out.cloud = PointCloud(std::move(points), cloud_extent, stand.area);
  return out;
}

// Synthetic field record for a stand stem: crown class from tier and height,
// DBH from a monotone height allometry that stays above the 12.5 cm survey
// threshold.
inline FieldStem field_stem(const StandStem& s, std::string plot_id) {
  FieldStem f;
  f.plot_id = std::move(plot_id);
  f.x = s.x;
  f.y = s.y;
  f.height = s.height;
  f.dbh = 13.0 + 1.8 * (s.height - 4.0);
  if (s.tier == 1) {
    f.crown_class = s.height >= 25.0 ? CrownClass::Dominant : CrownClass::CoDominant;
  } else {
    f.crown_class = s.tier == 2 ? CrownClass::Intermediate : CrownClass::Overtopped;
  }
  f.species = s.tier == 1 ? "synthetic-overstory" : "synthetic-understory";
  return f;
}

// Circular plot cut from a scan: points within radius + buffer of the center,
// area of that disk.
struct SimulatedPlot {
  std::string plot_id;
  PlotGeometry geometry;
  PointCloud cloud;
  std::vector<FieldStem> stems;
  std::vector<int> stem_id;  // truth, aligned with cloud points
  std::vector<int> tier;
  SyntheticStand stand;
};

inline SimulatedPlot cut_plot(const SyntheticStand& stand, const ScanResult& scan, const PlotGeometry& geometry,
                              std::string plot_id) {
  geometry.validate();
  SimulatedPlot plot;
  plot.plot_id = plot_id;
  plot.geometry = geometry;
  const double outer = geometry.radius + geometry.buffer_width;
  std::vector<LidarPoint> pts;
  const auto& src = scan.cloud.points();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (planar_distance(src[i].xy(), geometry.center) <= outer) {
      pts.push_back(src[i]);
      plot.stem_id.push_back(scan.stem_id[i]);
      plot.tier.push_back(scan.tier[i]);
    }
  }
  const Extent ext{geometry.center.x - outer, geometry.center.y - outer, geometry.center.x + outer,
                   geometry.center.y + outer};
  plot.cloud = PointCloud(std::move(pts), ext, std::numbers::pi * outer * outer);
  plot.stand = stand;
  for (const auto& s : stand.stems)
    if (geometry.in_plot({s.x, s.y})) plot.stems.push_back(field_stem(s, plot_id));
  return plot;
}

// Recipe for a set of independent plots, each simulated on its own stand
// around the plot center.
struct PlotSetConfig {
  std::size_t plots = 23;
  ScanConfig scan;
  PlotGeometry geometry;
  double stand_margin = 5.0;   // m beyond plot + buffer on each side
  // Stem densities per hectare; each plot draws counts around these.
  double tier1_per_ha = 140.0;
  double tier2_per_ha = 160.0;
  double tier3_per_ha = 100.0;
  Terrain terrain;
  std::uint64_t seed = 1;
};

inline std::vector<SimulatedPlot> simulate_plots(const PlotSetConfig& cfg) {
  std::vector<SimulatedPlot> out;
  const double half = cfg.geometry.radius + cfg.geometry.buffer_width + cfg.stand_margin;
  const Extent extent{-half, -half, half, half};
  const double ha = (2.0 * half) * (2.0 * half) / 10000.0;
  for (std::size_t k = 0; k < cfg.plots; ++k) {
    StreamRng rng(mix_seed(cfg.seed, {0x9107, k}));
    auto draw = [&](double per_ha) {
      const double mean = per_ha * ha;
      return static_cast<std::size_t>(std::llround(mean * rng.uniform(0.75, 1.25)));
    };
    TierCounts counts{draw(cfg.tier1_per_ha), draw(cfg.tier2_per_ha), draw(cfg.tier3_per_ha)};
    const auto stand = generate_stand(extent, counts, mix_seed(cfg.seed, {0x57A4D, k}), cfg.terrain);
    ScanConfig scan = cfg.scan;
    scan.seed = mix_seed(cfg.seed, {0x5CA9, k});
    const auto result = scan_stand(stand, scan);
    PlotGeometry g = cfg.geometry;
    g.center = {0.0, 0.0};
    char id[32];
    std::snprintf(id, sizeof id, "P%02zu", k + 1);
    out.push_back(cut_plot(stand, result, g, id));
  }
  return out;
}

}  // namespace canopy
