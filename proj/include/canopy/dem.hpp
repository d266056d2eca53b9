#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "canopy/core.hpp"

namespace canopy {

// Ground elevation raster. Row 0 is the southernmost row; cell (col, row) spans
// [origin + col*res, origin + (col+1)*res) in x and likewise in y.
class Dem {
 public:
  Dem() = default;
  Dem(Point2 origin, double resolution, std::int64_t cols, std::int64_t rows,
      std::vector<double> elevations, std::vector<std::uint8_t> void_mask)
      : origin_(origin),
        resolution_(resolution),
        cols_(cols),
        rows_(rows),
        elevations_(std::move(elevations)),
        void_mask_(std::move(void_mask)) {
    if (!(resolution_ > 0.0)) throw Error(ErrorKind::InvalidArgument, "DEM resolution must be positive");
    if (cols_ < 1 || rows_ < 1 || elevations_.size() != static_cast<std::size_t>(cols_ * rows_)) {
      throw Error(ErrorKind::MalformedInput, "DEM dimensions do not match its elevation array");
    }
    if (void_mask_.empty()) void_mask_.assign(elevations_.size(), 0);
  }

  Point2 origin() const { return origin_; }
  double resolution() const { return resolution_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t rows() const { return rows_; }
  double at(std::int64_t col, std::int64_t row) const { return elevations_[index(col, row)]; }
  // True when the cell held no ground point before void filling.
  bool was_void(std::int64_t col, std::int64_t row) const { return void_mask_[index(col, row)] != 0; }
  const std::vector<double>& elevations() const { return elevations_; }

  Extent coverage() const {
    return {origin_.x, origin_.y, origin_.x + static_cast<double>(cols_) * resolution_,
            origin_.y + static_cast<double>(rows_) * resolution_};
  }

  // Bilinear interpolation between cell centers; the outer half cells are
  // extrapolated from the nearest pair of centers so affine fields are
  // reproduced over the whole coverage.
  double elevation_at(double x, double y) const {
    if (!coverage().contains(x, y)) {
      std::ostringstream msg;
      msg << std::setprecision(10) << "point (" << x << ", " << y << ") is outside DEM coverage";
      throw Error(ErrorKind::OutOfCoverage, msg.str());
    }
    const double u = (x - origin_.x) / resolution_ - 0.5;
    const double v = (y - origin_.y) / resolution_ - 0.5;
    auto axis = [](double t, std::int64_t n, std::int64_t& i0, std::int64_t& i1, double& f) {
      if (n == 1) {
        i0 = i1 = 0;
        f = 0.0;
        return;
      }
      i0 = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(t)), 0, n - 2);
      i1 = i0 + 1;
      f = t - static_cast<double>(i0);
    };
    std::int64_t c0, c1, r0, r1;
    double fu, fv;
    axis(u, cols_, c0, c1, fu);
    axis(v, rows_, r0, r1, fv);
    const double bottom = at(c0, r0) + (at(c1, r0) - at(c0, r0)) * fu;
    const double top = at(c0, r1) + (at(c1, r1) - at(c0, r1)) * fu;
    return bottom + (top - bottom) * fv;
  }

 private:
  std::size_t index(std::int64_t col, std::int64_t row) const {
    return static_cast<std::size_t>(row * cols_ + col);
  }

  Point2 origin_{};
  double resolution_ = 1.0;
  std::int64_t cols_ = 0;
  std::int64_t rows_ = 0;
  std::vector<double> elevations_;
  std::vector<std::uint8_t> void_mask_;
};

namespace detail {

// Nearest non-void cell by center distance, ties to the smaller row-major
// index. Searches square rings outward and stops once the ring distance
// exceeds the best candidate.
inline std::size_t nearest_filled(const std::vector<std::uint8_t>& void_mask, std::int64_t cols,
                                  std::int64_t rows, std::int64_t col, std::int64_t row) {
  std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
  std::size_t best = 0;
  const std::int64_t max_ring = std::max(cols, rows);
  for (std::int64_t k = 1; k <= max_ring; ++k) {
    if (k * k > best_d2) break;
    for (std::int64_t dr = -k; dr <= k; ++dr) {
      const bool edge_row = (dr == -k || dr == k);
      for (std::int64_t dc = -k; dc <= k; dc += edge_row ? 1 : 2 * k) {
        const std::int64_t c = col + dc, r = row + dr;
        if (c < 0 || r < 0 || c >= cols || r >= rows) continue;
        const auto idx = static_cast<std::size_t>(r * cols + c);
        if (void_mask[idx]) continue;
        const std::int64_t d2 = dc * dc + dr * dr;
        if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
          best_d2 = d2;
          best = idx;
        }
      }
    }
  }
  return best;
}

}  // namespace detail

// Mean ground elevation per cell, voids filled from the nearest non-void cell.
// `cover` widens the raster to the full cloud extent.
inline Dem build_dem(std::span<const LidarPoint> ground_points, double resolution,
                     std::optional<Extent> cover = std::nullopt) {
  if (!(resolution > 0.0)) throw Error(ErrorKind::InvalidArgument, "DEM resolution must be positive");
  if (ground_points.empty()) throw Error(ErrorKind::EmptyInput, "no ground points to build a DEM from");
  Extent e = bounding_extent(ground_points);
  if (cover) e = e.united(*cover);
  const auto cols = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(e.width() / resolution)));
  const auto rows = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(e.height() / resolution)));
  const auto n = static_cast<std::size_t>(cols * rows);

  std::vector<double> sum(n, 0.0);
  std::vector<std::uint32_t> count(n, 0);
  for (const auto& p : ground_points) {
    const auto c = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((p.x - e.min_x) / resolution)), 0, cols - 1);
    const auto r = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((p.y - e.min_y) / resolution)), 0, rows - 1);
    const auto idx = static_cast<std::size_t>(r * cols + c);
    sum[idx] += p.z;
    ++count[idx];
  }
  std::vector<double> elev(n, 0.0);
  std::vector<std::uint8_t> void_mask(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] > 0) {
      elev[i] = sum[i] / count[i];
    } else {
      void_mask[i] = 1;
    }
  }
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      const auto idx = static_cast<std::size_t>(r * cols + c);
      if (void_mask[idx]) elev[idx] = elev[detail::nearest_filled(void_mask, cols, rows, c, r)];
    }
  }
  return Dem({e.min_x, e.min_y}, resolution, cols, rows, std::move(elev), std::move(void_mask));
}

inline Dem build_dem(const PointCloud& cloud, double resolution = 1.0) {
  std::vector<LidarPoint> ground;
  for (const auto& p : cloud.points())
    if (p.is_ground) ground.push_back(p);
  return build_dem(ground, resolution, cloud.extent());
}

struct NormalizedCloud {
  PointCloud cloud;
  // Points found below the DEM surface and clamped to height 0.
  std::size_t clamped_below_ground = 0;
};

inline NormalizedCloud normalize_heights(const PointCloud& cloud, const Dem& dem) {
  std::vector<LidarPoint> pts = cloud.points();
  std::size_t clamped = 0;
  for (auto& p : pts) {
    double h = p.z - dem.elevation_at(p.x, p.y);
    if (h < 0.0) {
      h = 0.0;
      ++clamped;
    }
    p.height_above_ground = h;
  }
  return {PointCloud(std::move(pts), cloud.extent(), cloud.area()), clamped};
}

// Plain-text grid: six header lines then rows from north to south.
inline void write_ascii_grid(std::ostream& os, const Dem& dem, double nodata = -9999.0) {
  os << std::setprecision(12);
  os << "ncols " << dem.cols() << "\n"
     << "nrows " << dem.rows() << "\n"
     << "xllcorner " << dem.origin().x << "\n"
     << "yllcorner " << dem.origin().y << "\n"
     << "cellsize " << dem.resolution() << "\n"
     << "nodata_value " << nodata << "\n";
  os << std::fixed << std::setprecision(3);
  for (std::int64_t r = dem.rows() - 1; r >= 0; --r) {
    for (std::int64_t c = 0; c < dem.cols(); ++c) {
      if (c) os << ' ';
      os << dem.at(c, r);
    }
    os << "\n";
  }
  os << std::defaultfloat;
}

inline Dem read_ascii_grid(std::istream& is) {
  std::int64_t cols = 0, rows = 0;
  double xll = 0, yll = 0, cell = 0, nodata = -9999.0;
  for (int i = 0; i < 6; ++i) {
    std::string keyword;
    double value;
    if (!(is >> keyword >> value)) throw Error(ErrorKind::MalformedInput, "truncated grid header");
    for (auto& ch : keyword) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (keyword == "ncols") cols = static_cast<std::int64_t>(value);
    else if (keyword == "nrows") rows = static_cast<std::int64_t>(value);
    else if (keyword == "xllcorner") xll = value;
    else if (keyword == "yllcorner") yll = value;
    else if (keyword == "cellsize") cell = value;
    else if (keyword == "nodata_value") nodata = value;
    else throw Error(ErrorKind::MalformedInput, "unknown grid header field '" + keyword + "'");
  }
  if (cols < 1 || rows < 1) throw Error(ErrorKind::MalformedInput, "grid dimensions must be positive");
  std::vector<double> elev(static_cast<std::size_t>(cols * rows));
  std::vector<std::uint8_t> mask(elev.size(), 0);
  for (std::int64_t r = rows - 1; r >= 0; --r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      double v;
      if (!(is >> v)) throw Error(ErrorKind::MalformedInput, "truncated grid body");
      const auto idx = static_cast<std::size_t>(r * cols + c);
      elev[idx] = v;
      if (v == nodata) mask[idx] = 1;
    }
  }
  return Dem({xll, yll}, cell, cols, rows, std::move(elev), std::move(mask));
}

}  // namespace canopy
