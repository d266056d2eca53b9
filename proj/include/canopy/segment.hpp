#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "canopy/core.hpp"
#include "canopy/stratify.hpp"

namespace canopy {

struct TreeCrown {
  double apex_x = 0.0;
  double apex_y = 0.0;
  double apex_height = 0.0;  // m above ground
  std::vector<std::size_t> member_points;
  int source_layer = 1;

  Point2 apex() const { return {apex_x, apex_y}; }
};

// Canopy height model: per-cell maximum height, absent where no point fell.
struct Chm {
  Point2 origin;
  double cell_width = 0.5;
  std::int64_t cols = 0;
  std::int64_t rows = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> present;

  std::size_t index(std::int64_t col, std::int64_t row) const {
    return static_cast<std::size_t>(row * cols + col);
  }
  Point2 center(std::size_t idx) const {
    const auto col = static_cast<std::int64_t>(idx) % cols;
    const auto row = static_cast<std::int64_t>(idx) / cols;
    return {origin.x + (static_cast<double>(col) + 0.5) * cell_width,
            origin.y + (static_cast<double>(row) + 0.5) * cell_width};
  }
};

inline double height_of(const LidarPoint& p) { return p.height_above_ground.value_or(0.0); }

// Max-height raster of the given points followed by one 3x3 mean pass over
// the present cells.
inline Chm build_chm(std::span<const LidarPoint> points, std::span<const std::size_t> ids, double cell_width) {
  if (ids.empty()) throw Error(ErrorKind::EmptyInput, "cannot build a canopy height model from no points");
  if (!(cell_width > 0.0)) throw Error(ErrorKind::InvalidArgument, "CHM cell width must be positive");
  double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
  double max_x = -min_x, max_y = -min_x;
  for (auto id : ids) {
    min_x = std::min(min_x, points[id].x);
    min_y = std::min(min_y, points[id].y);
    max_x = std::max(max_x, points[id].x);
    max_y = std::max(max_y, points[id].y);
  }
  Chm chm;
  chm.origin = {min_x, min_y};
  chm.cell_width = cell_width;
  chm.cols = static_cast<std::int64_t>(std::floor((max_x - min_x) / cell_width)) + 1;
  chm.rows = static_cast<std::int64_t>(std::floor((max_y - min_y) / cell_width)) + 1;
  std::vector<double> raw(static_cast<std::size_t>(chm.cols * chm.rows), 0.0);
  chm.present.assign(raw.size(), 0);
  for (auto id : ids) {
    const auto c = static_cast<std::int64_t>(std::floor((points[id].x - min_x) / cell_width));
    const auto r = static_cast<std::int64_t>(std::floor((points[id].y - min_y) / cell_width));
    const auto idx = chm.index(c, r);
    const double h = height_of(points[id]);
    if (!chm.present[idx] || h > raw[idx]) raw[idx] = h;
    chm.present[idx] = 1;
  }
  chm.values.assign(raw.size(), 0.0);
  for (std::int64_t r = 0; r < chm.rows; ++r) {
    for (std::int64_t c = 0; c < chm.cols; ++c) {
      const auto idx = chm.index(c, r);
      if (!chm.present[idx]) continue;
      double sum = 0.0;
      int n = 0;
      for (std::int64_t dr = -1; dr <= 1; ++dr) {
        for (std::int64_t dc = -1; dc <= 1; ++dc) {
          const auto cc = c + dc, rr = r + dr;
          if (cc < 0 || rr < 0 || cc >= chm.cols || rr >= chm.rows) continue;
          const auto j = chm.index(cc, rr);
          if (!chm.present[j]) continue;
          sum += raw[j];
          ++n;
        }
      }
      chm.values[idx] = sum / n;
    }
  }
  return chm;
}

inline Chm build_chm(std::span<const LidarPoint> points, double cell_width) {
  std::vector<std::size_t> ids(points.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return build_chm(points, ids, cell_width);
}

// Present cells that dominate every present cell whose center lies within
// `min_separation`; equal heights go to the smaller cell index.
inline std::vector<std::size_t> chm_maxima(const Chm& chm, double min_separation) {
  struct Offset {
    std::int64_t dc, dr;
  };
  std::vector<Offset> disk;
  const auto reach = static_cast<std::int64_t>(std::ceil(min_separation / chm.cell_width));
  for (std::int64_t dr = -reach; dr <= reach; ++dr) {
    for (std::int64_t dc = -reach; dc <= reach; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const double d = std::hypot(static_cast<double>(dc), static_cast<double>(dr)) * chm.cell_width;
      if (d <= min_separation) disk.push_back({dc, dr});
    }
  }
  std::vector<std::size_t> out;
  for (std::int64_t r = 0; r < chm.rows; ++r) {
    for (std::int64_t c = 0; c < chm.cols; ++c) {
      const auto idx = chm.index(c, r);
      if (!chm.present[idx]) continue;
      const double v = chm.values[idx];
      bool dominant = true;
      for (const auto& o : disk) {
        const auto cc = c + o.dc, rr = r + o.dr;
        if (cc < 0 || rr < 0 || cc >= chm.cols || rr >= chm.rows) continue;
        const auto j = chm.index(cc, rr);
        if (!chm.present[j]) continue;
        if (chm.values[j] > v || (chm.values[j] == v && j < idx)) {
          dominant = false;
          break;
        }
      }
      if (dominant) out.push_back(idx);
    }
  }
  return out;
}

// Baseline crown delineation on one layer: CHM local maxima become apexes,
// points join the nearest apex within `assignment_radius`, and small crowns
// are dropped. All parameters are configuration, not calibrated values.
struct BaselineSegmenter {
  double min_separation = 2.0;     // m
  double cell_width = 0.5;         // m
  double assignment_radius = 10.0; // m
  std::size_t min_points = 5;

  std::vector<TreeCrown> operator()(std::span<const LidarPoint> points, std::span<const std::size_t> ids,
                                    int layer) const {
    std::vector<TreeCrown> crowns;
    if (ids.empty()) return crowns;
    const Chm chm = build_chm(points, ids, cell_width);
    const auto maxima = chm_maxima(chm, min_separation);
    if (maxima.empty()) return crowns;

    std::vector<LidarPoint> seeds(maxima.size());
    std::vector<std::size_t> seed_ids(maxima.size());
    for (std::size_t k = 0; k < maxima.size(); ++k) {
      const auto c = chm.center(maxima[k]);
      seeds[k].x = c.x;
      seeds[k].y = c.y;
      seed_ids[k] = k;
    }
    const GridIndex seed_grid(seeds, seed_ids, chm.origin, std::max(assignment_radius / 4.0, cell_width));

    std::vector<std::vector<std::size_t>> members(maxima.size());
    const double r2max = assignment_radius * assignment_radius;
    for (auto id : ids) {
      const auto& p = points[id];
      std::size_t best = maxima.size();
      double best_d2 = std::numeric_limits<double>::infinity();
      seed_grid.for_each_in_radius(p.xy(), assignment_radius, [&](std::size_t k) {
        const double dx = seeds[k].x - p.x, dy = seeds[k].y - p.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 < best_d2 || (d2 == best_d2 && k < best)) {
          best_d2 = d2;
          best = k;
        }
      });
      if (best < maxima.size() && best_d2 <= r2max) members[best].push_back(id);
    }

    for (auto& m : members) {
      if (m.size() < min_points) continue;
      std::size_t top = m.front();
      for (auto id : m)
        if (height_of(points[id]) > height_of(points[top])) top = id;
      TreeCrown crown;
      crown.apex_x = points[top].x;
      crown.apex_y = points[top].y;
      crown.apex_height = height_of(points[top]);
      crown.member_points = std::move(m);
      crown.source_layer = layer;
      crowns.push_back(std::move(crown));
    }
    return crowns;
  }
};

// Layer points -> crowns. Anything with this signature can replace the
// baseline segmenter in the pipeline.
using Segmenter = std::function<std::vector<TreeCrown>(std::span<const LidarPoint>, std::span<const std::size_t>, int)>;

inline std::vector<TreeCrown> segment_layer(std::span<const LidarPoint> points, double min_separation = 2.0,
                                            double cell_width = 0.5) {
  std::vector<std::size_t> ids(points.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  BaselineSegmenter seg;
  seg.min_separation = min_separation;
  seg.cell_width = cell_width;
  return seg(points, ids, 1);
}

// Stratifies the cloud and segments every canopy layer; ground vegetation is
// not segmented. Member ids refer to the input cloud.
inline std::vector<TreeCrown> segment_cloud(const PointCloud& cloud, const StratificationResult& strata,
                                            const Segmenter& segmenter = BaselineSegmenter{}) {
  std::vector<TreeCrown> crowns;
  for (const auto& layer : strata.layers) {
    auto part = segmenter(cloud.points(), layer.member_points, layer.index_from_top);
    for (auto& c : part) crowns.push_back(std::move(c));
  }
  return crowns;
}

inline std::vector<TreeCrown> segment_cloud(const PointCloud& cloud,
                                            const Segmenter& segmenter = BaselineSegmenter{}) {
  if (cloud.empty()) return {};
  return segment_cloud(cloud, stratify(cloud), segmenter);
}

}  // namespace canopy
