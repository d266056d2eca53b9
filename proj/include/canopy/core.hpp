#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "canopy/error.hpp"

namespace canopy {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double planar_distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Axis-aligned planar bounding region, closed on all sides.
struct Extent {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool contains(double x, double y) const {
    return x >= min_x && x <= max_x && y >= min_y && y <= max_y;
  }
  bool valid() const { return min_x <= max_x && min_y <= max_y; }

  Extent united(const Extent& o) const {
    return {std::min(min_x, o.min_x), std::min(min_y, o.min_y), std::max(max_x, o.max_x),
            std::max(max_y, o.max_y)};
  }
};

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::uint8_t return_number = 1;
  std::uint8_t returns_of_pulse = 1;
  std::uint64_t pulse_id = 0;
  bool is_ground = false;
  // Absent until the cloud has been normalized against a DEM.
  std::optional<double> height_above_ground;

  Point2 xy() const { return {x, y}; }
};

template <class Range>
Extent bounding_extent(const Range& points) {
  Extent e{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : points) {
    e.min_x = std::min(e.min_x, p.x);
    e.min_y = std::min(e.min_y, p.y);
    e.max_x = std::max(e.max_x, p.x);
    e.max_y = std::max(e.max_y, p.y);
  }
  return e;
}

// Checks the per-pulse return model: return_number <= returns_of_pulse, and all
// returns of one pulse agree on returns_of_pulse with distinct return numbers.
inline void validate_returns(std::span<const LidarPoint> points) {
  struct PulseSeen {
    std::uint8_t returns_of_pulse;
    std::uint32_t mask;
  };
  std::unordered_map<std::uint64_t, PulseSeen> pulses;
  pulses.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (p.return_number < 1 || p.returns_of_pulse < 1 || p.return_number > p.returns_of_pulse ||
        p.returns_of_pulse > 31) {
      throw Error(ErrorKind::MalformedInput,
                  "point " + std::to_string(i) + " has inconsistent return numbering");
    }
    auto [it, inserted] = pulses.try_emplace(p.pulse_id, PulseSeen{p.returns_of_pulse, 0u});
    const std::uint32_t bit = 1u << p.return_number;
    if (!inserted && (it->second.returns_of_pulse != p.returns_of_pulse || (it->second.mask & bit))) {
      throw Error(ErrorKind::MalformedInput,
                  "pulse " + std::to_string(p.pulse_id) + " has conflicting returns");
    }
    it->second.mask |= bit;
  }
}

// Georeferenced returns over a declared region of interest. The area is
// explicit because circular plots have area pi*r^2 regardless of where the
// points happen to fall.
class PointCloud {
 public:
  PointCloud() = default;

  PointCloud(std::vector<LidarPoint> points, Extent extent, double area)
      : points_(std::move(points)), extent_(extent), area_(area) {
    if (!(area_ > 0.0) || !std::isfinite(area_)) {
      throw Error(ErrorKind::InvalidArgument, "point cloud area must be positive");
    }
    if (!extent_.valid()) {
      throw Error(ErrorKind::InvalidArgument, "point cloud extent is inverted");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!extent_.contains(points_[i].x, points_[i].y)) {
        throw Error(ErrorKind::MalformedInput,
                    "point " + std::to_string(i) + " lies outside the cloud extent");
      }
    }
  }

  const std::vector<LidarPoint>& points() const { return points_; }
  const Extent& extent() const { return extent_; }
  double area() const { return area_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  // Copy of the cloud restricted to the given point indices, same region.
  PointCloud subset(std::span<const std::size_t> ids) const {
    std::vector<LidarPoint> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(points_[id]);
    PointCloud c;
    c.points_ = std::move(out);
    c.extent_ = extent_;
    c.area_ = area_;
    return c;
  }

 private:
  std::vector<LidarPoint> points_;
  Extent extent_{};
  double area_ = 1.0;
};

struct PlotGeometry {
  Point2 center;
  double radius = 11.283791670955125;  // 0.04 ha circle
  double buffer_width = 4.7;

  void validate() const {
    if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "plot radius must be positive");
    if (!(buffer_width >= 0.0)) throw Error(ErrorKind::InvalidArgument, "buffer width must be >= 0");
  }
  bool in_plot(Point2 p) const { return planar_distance(p, center) <= radius; }
  bool in_buffer(Point2 p) const {
    const double d = planar_distance(p, center);
    return d > radius && d <= radius + buffer_width;
  }
};

// Average footprint: the cell width at which about one point falls per cell.
inline double compute_afp(double density) {
  if (!(density > 0.0) || !std::isfinite(density)) {
    throw Error(ErrorKind::InvalidArgument, "density must be positive to compute a footprint");
  }
  return 1.0 / std::sqrt(density);
}

inline double point_density(std::size_t count, double area) {
  if (!(area > 0.0)) throw Error(ErrorKind::InvalidArgument, "area must be positive");
  return static_cast<double>(count) / area;
}

inline double point_density(const PointCloud& cloud) { return point_density(cloud.size(), cloud.area()); }

struct CellCoord {
  std::int64_t col = 0;
  std::int64_t row = 0;
  friend bool operator==(const CellCoord&, const CellCoord&) = default;
};

// Sparse uniform grid over planar positions. Occupied cells are stored in
// row-major key order with their point ids in CSR form; ids keep input order
// within a cell.
class GridIndex {
 public:
  GridIndex() = default;

  // `ids` name the points in the caller's own numbering; `points` is indexed by
  // those ids.
  GridIndex(std::span<const LidarPoint> points, std::span<const std::size_t> ids, Point2 origin,
            double cell_width)
      : origin_(origin), cell_width_(cell_width) {
    if (!(cell_width > 0.0) || !std::isfinite(cell_width)) {
      throw Error(ErrorKind::InvalidArgument, "cell width must be positive");
    }
    double max_x = origin.x, max_y = origin.y;
    for (auto id : ids) {
      const auto& p = points[id];
      if (p.x < origin.x || p.y < origin.y) {
        throw Error(ErrorKind::InvalidArgument, "grid origin must be the minimum corner");
      }
      max_x = std::max(max_x, p.x);
      max_y = std::max(max_y, p.y);
    }
    ncols_ = static_cast<std::int64_t>(std::floor((max_x - origin.x) / cell_width)) + 1;
    nrows_ = static_cast<std::int64_t>(std::floor((max_y - origin.y) / cell_width)) + 1;

    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(ids.size());
    for (auto id : ids) {
      const auto c = cell_of(points[id].x, points[id].y);
      keyed.emplace_back(key(c), id);
    }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    ids_.reserve(keyed.size());
    xy_.reserve(keyed.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      if (i == 0 || keyed[i].first != keyed[i - 1].first) {
        keys_.push_back(keyed[i].first);
        offsets_.push_back(i);
      }
      ids_.push_back(keyed[i].second);
      xy_.push_back(points[keyed[i].second].xy());
    }
    offsets_.push_back(keyed.size());
    const auto raster = static_cast<std::uint64_t>(ncols_) * static_cast<std::uint64_t>(nrows_);
    if (raster <= 4 * keys_.size() + 4096 && keys_.size() < 0xFFFFFFFFu) {
      rank_.assign(static_cast<std::size_t>(raster) + 1, 0);
      std::size_t o = 0;
      for (std::uint64_t k = 0; k <= raster; ++k) {
        while (o < keys_.size() && keys_[o] < k) ++o;
        rank_[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(o);
      }
    }
  }

  double cell_width() const { return cell_width_; }
  Point2 origin() const { return origin_; }
  std::int64_t cols() const { return ncols_; }
  std::int64_t rows() const { return nrows_; }
  std::size_t cell_count() const { return keys_.size(); }
  std::size_t point_count() const { return ids_.size(); }

  CellCoord cell_of(double x, double y) const {
    return {static_cast<std::int64_t>(std::floor((x - origin_.x) / cell_width_)),
            static_cast<std::int64_t>(std::floor((y - origin_.y) / cell_width_))};
  }

  // Occupied cell by ordinal (row-major order).
  CellCoord cell(std::size_t ordinal) const {
    const auto k = static_cast<std::int64_t>(keys_[ordinal]);
    return {k % ncols_, k / ncols_};
  }
  Point2 cell_center(CellCoord c) const {
    return {origin_.x + (static_cast<double>(c.col) + 0.5) * cell_width_,
            origin_.y + (static_cast<double>(c.row) + 0.5) * cell_width_};
  }
  std::span<const std::size_t> cell_points(std::size_t ordinal) const {
    return std::span<const std::size_t>(ids_).subspan(offsets_[ordinal],
                                                      offsets_[ordinal + 1] - offsets_[ordinal]);
  }
  std::optional<std::size_t> find_cell(CellCoord c) const {
    if (c.col < 0 || c.row < 0 || c.col >= ncols_ || c.row >= nrows_) return std::nullopt;
    const auto k = key(c);
    auto it = std::lower_bound(keys_.begin(), keys_.end(), k);
    if (it == keys_.end() || *it != k) return std::nullopt;
    return static_cast<std::size_t>(it - keys_.begin());
  }

  // Visits every indexed point whose planar distance to `center` is <= radius.
  template <class Fn>
  void for_each_in_radius(Point2 center, double radius, Fn&& fn) const {
    for_each_slot_in_radius(center, radius, [&](std::size_t slot) { fn(ids_[slot]); });
  }

  // Same query, reporting positions in cell order (see slot_ids) so callers
  // can keep per-point data laid out the way the grid walks it.
  template <class Fn>
  void for_each_slot_in_radius(Point2 center, double radius, Fn&& fn) const {
    if (keys_.empty()) return;
    const double r2 = radius * radius;
    // One extra cell of slack keeps floating rounding at the window edge from
    // dropping boundary points.
    const auto lo = cell_of(center.x - radius, center.y - radius);
    const auto hi = cell_of(center.x + radius, center.y + radius);
    const std::int64_t c0 = std::max<std::int64_t>(lo.col - 1, 0);
    const std::int64_t c1 = std::min<std::int64_t>(hi.col + 1, ncols_ - 1);
    const std::int64_t r0 = std::max<std::int64_t>(lo.row - 1, 0);
    const std::int64_t r1 = std::min<std::int64_t>(hi.row + 1, nrows_ - 1);
    if (c0 > c1 || r0 > r1) return;
    auto tested = [&](std::size_t begin, std::size_t end) {
      for (std::size_t j = begin; j < end; ++j) {
        const double dx = xy_[j].x - center.x;
        const double dy = xy_[j].y - center.y;
        if (dx * dx + dy * dy <= r2) fn(j);
      }
    };
    for (std::int64_t row = r0; row <= r1; ++row) {
      if (rank_.empty()) {
        const std::uint64_t first = key({c0, row});
        const std::uint64_t last = key({c1, row});
        auto it = std::lower_bound(keys_.begin(), keys_.end(), first);
        for (; it != keys_.end() && *it <= last; ++it) {
          const auto ord = static_cast<std::size_t>(it - keys_.begin());
          tested(offsets_[ord], offsets_[ord + 1]);
        }
        continue;
      }
      // Columns whose cells lie wholly inside the disk skip the distance test;
      // the shrink keeps that classification on the safe side of rounding.
      std::int64_t a = c1 + 1, b = c1;
      const double y0 = origin_.y + static_cast<double>(row) * cell_width_ - center.y;
      const double fy = std::max(std::abs(y0), std::abs(y0 + cell_width_));
      const double room = r2 * (1.0 - 1e-9) - fy * fy;
      if (room > 0.0) {
        const double hx = std::sqrt(room) * (1.0 - 1e-9);
        a = std::max(c0, static_cast<std::int64_t>(std::ceil((center.x - hx - origin_.x) / cell_width_)));
        b = std::min(c1, static_cast<std::int64_t>(std::floor((center.x + hx - origin_.x) / cell_width_)) - 1);
        if (a > b) {
          a = c1 + 1;
          b = c1;
        }
      }
      const auto slot = [&](std::int64_t col) {
        return offsets_[rank_[static_cast<std::size_t>(key({col, row}))]];
      };
      if (a > c1) {
        tested(slot(c0), slot(c1 + 1));
        continue;
      }
      tested(slot(c0), slot(a));
      for (std::size_t j = slot(a), end = slot(b + 1); j < end; ++j) fn(j);
      tested(slot(b + 1), slot(c1 + 1));
    }
  }

  // Point ids in cell order; slot j of a query refers to slot_ids()[j].
  std::span<const std::size_t> slot_ids() const { return ids_; }

 private:
  std::uint64_t key(CellCoord c) const {
    return static_cast<std::uint64_t>(c.row) * static_cast<std::uint64_t>(ncols_) +
           static_cast<std::uint64_t>(c.col);
  }

  Point2 origin_{};
  double cell_width_ = 1.0;
  std::int64_t ncols_ = 0;
  std::int64_t nrows_ = 0;
  std::vector<std::uint64_t> keys_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> ids_;
  std::vector<Point2> xy_;
  // rank_[k]: occupied cells with key < k, for keys 0..cols*rows; kept only
  // when the raster is not much larger than the occupied set.
  std::vector<std::uint32_t> rank_;
};

// Grid over every point of the cloud, anchored at the extent minimum corner.
inline GridIndex build_grid(const PointCloud& cloud, double cell_width) {
  std::vector<std::size_t> ids(cloud.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return GridIndex(cloud.points(), ids, {cloud.extent().min_x, cloud.extent().min_y}, cell_width);
}

// Closed-disk query; ids are returned in ascending order.
inline std::vector<std::size_t> radius_query(const GridIndex& grid, Point2 center, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "query radius must be positive");
  std::vector<std::size_t> out;
  grid.for_each_in_radius(center, radius, [&](std::size_t id) { out.push_back(id); });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace canopy
