#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canopy/core.hpp"
#include "canopy/parallel.hpp"

namespace canopy {

inline constexpr double kHistogramBinWidth = 0.25;      // m
inline constexpr double kSmoothingSigma = 5.0;          // m
inline constexpr double kKernelHalfWidthSigmas = 4.0;   // truncation of the smoothing kernel
inline constexpr double kLocaleRadiusFootprints = 6.0;  // locale radius in AFP units
inline constexpr double kMinLocaleRadius = 1.5;         // m
inline constexpr double kGroundVegetationHeight = 4.0;  // m
inline constexpr int kMaxStratifyIterations = 32;

struct HeightHistogram {
  double bin_width = kHistogramBinWidth;
  // counts[i] holds heights in [i*bin_width, (i+1)*bin_width).
  std::vector<double> counts;
  std::vector<double> smoothed;
};

// Discretized normal density on the bin lattice, truncated at +-4 sigma and
// renormalized to unit sum so a flat profile stays flat.
class GaussianKernel {
 public:
  explicit GaussianKernel(double sigma = kSmoothingSigma, double bin_width = kHistogramBinWidth) {
    if (!(sigma > 0.0) || !(bin_width > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "kernel sigma and bin width must be positive");
    }
    half_ = static_cast<std::size_t>(std::ceil(kKernelHalfWidthSigmas * sigma / bin_width));
    weights_.resize(2 * half_ + 1);
    double total = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      const double d = (static_cast<double>(k) - static_cast<double>(half_)) * bin_width;
      weights_[k] = std::exp(-0.5 * d * d / (sigma * sigma));
      total += weights_[k];
    }
    for (auto& w : weights_) w /= total;
    // Analytic second derivative of the same truncated kernel, scaled to
    // one bin so it is comparable with a central second difference.
    curvature_.resize(weights_.size());
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      const double d = (static_cast<double>(k) - static_cast<double>(half_)) * bin_width;
      curvature_[k] = weights_[k] * (d * d / (sigma * sigma) - 1.0) * bin_width * bin_width / (sigma * sigma);
    }
  }

  std::size_t half_width() const { return half_; }
  std::span<const double> weights() const { return weights_; }

  // out = kernel * counts with zero padding beyond both ends.
  void apply(std::span<const double> counts, std::span<double> out) const { convolve(weights_, counts, out); }

  // Second derivative of the smoothed profile. Differencing the truncated
  // profile instead would see the step at each +-4 sigma cut as curvature.
  void apply_curvature(std::span<const double> counts, std::span<double> out) const {
    convolve(curvature_, counts, out);
  }

 private:
  void convolve(const std::vector<double>& kernel, std::span<const double> counts, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    const auto n = static_cast<std::ptrdiff_t>(counts.size());
    const auto h = static_cast<std::ptrdiff_t>(half_);
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const double c = counts[static_cast<std::size_t>(j)];
      if (c == 0.0) continue;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, j - h);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, j + h);
      const double* w = kernel.data() + (lo - (j - h));
      double* o = out.data() + lo;
      for (std::ptrdiff_t i = 0; i <= hi - lo; ++i) o[i] += c * w[i];
    }
  }

  std::size_t half_ = 0;
  std::vector<double> weights_;
  std::vector<double> curvature_;
};

// Histogram with `headroom` metres of empty bins above the highest point so
// smoothing loses no mass off the top.
inline HeightHistogram make_histogram(std::span<const double> heights,
                                      double bin_width = kHistogramBinWidth,
                                      double headroom = kKernelHalfWidthSigmas * kSmoothingSigma) {
  HeightHistogram hist;
  hist.bin_width = bin_width;
  double top = 0.0;
  for (double h : heights) top = std::max(top, h);
  const auto bins = static_cast<std::size_t>(std::floor(top / bin_width)) + 1 +
                    static_cast<std::size_t>(std::ceil(headroom / bin_width));
  hist.counts.assign(bins, 0.0);
  for (double h : heights) {
    const auto b = static_cast<std::size_t>(std::floor(std::max(h, 0.0) / bin_width));
    hist.counts[b] += 1.0;
  }
  return hist;
}

inline HeightHistogram smooth_histogram(HeightHistogram hist, double sigma = kSmoothingSigma) {
  if (hist.counts.empty()) throw Error(ErrorKind::InvalidArgument, "histogram has no bins");
  const GaussianKernel kernel(sigma, hist.bin_width);
  hist.smoothed.assign(hist.counts.size(), 0.0);
  kernel.apply(hist.counts, hist.smoothed);
  return hist;
}

struct HeightRange {
  double low = 0.0;
  double high = 0.0;
};

namespace detail {

// Maximal runs of bins whose curvature is below -eps, top down, as bin-center
// heights. `first`/`last` bound the bins that carry a curvature value.
inline std::vector<HeightRange> negative_runs(std::span<const double> curvature, std::ptrdiff_t first,
                                              std::ptrdiff_t last, double eps, double bin_width) {
  std::vector<HeightRange> ranges;
  std::ptrdiff_t run_start = -1;
  auto close_run = [&](std::ptrdiff_t end) {
    if (run_start >= 0 && end > run_start) {
      ranges.push_back({(static_cast<double>(run_start) + 0.5) * bin_width,
                        (static_cast<double>(end) + 0.5) * bin_width});
    }
    run_start = -1;
  };
  for (std::ptrdiff_t i = first; i <= last; ++i) {
    if (curvature[static_cast<std::size_t>(i)] < -eps) {
      if (run_start < 0) run_start = i;
    } else {
      close_run(i - 1);
    }
  }
  close_run(last);
  std::reverse(ranges.begin(), ranges.end());
  return ranges;
}

}  // namespace detail

// Maximal runs of strictly negative central second difference, reported top
// down as bin-center heights. Single-bin runs have zero length and are
// dropped. Curvature within 1e-12 of the profile peak counts as zero so
// rounding noise on flat stretches cannot open a range.
inline std::vector<HeightRange> salient_ranges(std::span<const double> smoothed, double bin_width) {
  if (smoothed.size() < 3) return {};
  double peak = 0.0;
  for (double v : smoothed) peak = std::max(peak, std::abs(v));
  std::vector<double> d2(smoothed.size(), 0.0);
  for (std::size_t i = 1; i + 1 < smoothed.size(); ++i) d2[i] = smoothed[i - 1] - 2.0 * smoothed[i] + smoothed[i + 1];
  return detail::negative_runs(d2, 1, static_cast<std::ptrdiff_t>(smoothed.size()) - 2, 1e-12 * peak, bin_width);
}

inline std::vector<HeightRange> salient_ranges(const HeightHistogram& hist) {
  return salient_ranges(hist.smoothed, hist.bin_width);
}

// Reusable scratch for per-locale analysis; one instance per worker.
class LocaleAnalyzer {
 public:
  LocaleAnalyzer() : kernel_(kSmoothingSigma, kHistogramBinWidth) {}

  // Midpoint between the bottom of the topmost salient range and the top of
  // the one below it; absent when the locale shows fewer than two ranges.
  std::optional<double> threshold(std::span<const double> heights) {
    if (heights.empty()) throw Error(ErrorKind::InvalidArgument, "locale has no points");
    double top = 0.0;
    for (double h : heights) top = std::max(top, h);
    const auto bins = static_cast<std::size_t>(std::floor(top / kHistogramBinWidth)) + 1 +
                      kernel_.half_width();
    counts_.assign(bins, 0.0);
    for (double h : heights) counts_[static_cast<std::size_t>(std::floor(std::max(h, 0.0) / kHistogramBinWidth))] += 1.0;
    curvature_.resize(bins);
    kernel_.apply_curvature(counts_, curvature_);
    // Peak of the smoothed profile is at most the count total times the
    // central kernel weight; that sets the rounding floor.
    const double eps = 1e-12 * static_cast<double>(heights.size()) * kernel_.weights()[kernel_.half_width()];
    const auto ranges =
        detail::negative_runs(curvature_, 0, static_cast<std::ptrdiff_t>(bins) - 1, eps, kHistogramBinWidth);
    if (ranges.size() < 2) return std::nullopt;
    return 0.5 * (ranges[0].low + ranges[1].high);
  }

 private:
  GaussianKernel kernel_;
  std::vector<double> counts_;
  std::vector<double> curvature_;
};

inline std::optional<double> locale_threshold(std::span<const double> heights) {
  LocaleAnalyzer analyzer;
  return analyzer.threshold(heights);
}

inline std::optional<double> locale_threshold(std::span<const LidarPoint> points) {
  std::vector<double> heights;
  heights.reserve(points.size());
  for (const auto& p : points) {
    if (!p.height_above_ground) throw Error(ErrorKind::MalformedInput, "locale point lacks a normalized height");
    heights.push_back(*p.height_above_ground);
  }
  return locale_threshold(std::span<const double>(heights));
}

// Height bounds of the stratum removed from one grid cell.
struct CellBound {
  CellCoord cell;
  double lower = 0.0;
  double upper = 0.0;
};

struct CanopyLayer {
  int index_from_top = 1;
  std::vector<std::size_t> member_points;  // indices into the stratified cloud
  double cell_width = 0.0;                 // grid width the layer was stripped at
  std::vector<CellBound> cell_thresholds;
  double starting_height = 0.0;  // median of per-cell lower bounds
  double thickness = 0.0;        // median of per-cell (upper - lower)
  double density = 0.0;          // pt/m^2 over the cloud area
};

struct StratificationResult {
  std::vector<CanopyLayer> layers;
  std::vector<std::size_t> ground_vegetation;
  int iterations = 0;
  double area = 0.0;

  // Per input point: -1 for excluded ground returns, 0 for ground
  // vegetation, n for canopy layer n.
  std::vector<int> labels(std::size_t point_count) const {
    std::vector<int> out(point_count, -1);
    for (auto id : ground_vegetation) out[id] = 0;
    for (const auto& layer : layers)
      for (auto id : layer.member_points) out[id] = layer.index_from_top;
    return out;
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

struct CellAnalysis {
  std::optional<double> threshold;
  double locale_min = 0.0;
  double locale_max = 0.0;
};

}  // namespace detail

// Peels canopy layers off the top of a height-normalized cloud, one stratum
// per iteration. Ground returns are ignored; every other point ends up in
// exactly one layer or in ground vegetation.
inline StratificationResult stratify(const PointCloud& cloud, unsigned workers = worker_count()) {
  StratificationResult result;
  result.area = cloud.area();
  const auto& pts = cloud.points();

  std::vector<std::size_t> remaining;
  remaining.reserve(pts.size());
  std::vector<double> height(pts.size(), 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].is_ground) continue;
    if (!pts[i].height_above_ground) {
      throw Error(ErrorKind::MalformedInput,
                  "point " + std::to_string(i) + " has no height above ground; normalize first");
    }
    height[i] = *pts[i].height_above_ground;
    remaining.push_back(i);
  }

  const Point2 origin{cloud.extent().min_x, cloud.extent().min_y};
  std::vector<std::uint8_t> stripped(pts.size(), 0);

  while (!remaining.empty()) {
    if (result.iterations == kMaxStratifyIterations) {
      throw Error(ErrorKind::AlgorithmDivergence,
                  "stratification did not empty the cloud within " +
                      std::to_string(kMaxStratifyIterations) + " iterations");
    }
    ++result.iterations;

    const double afp = compute_afp(point_density(remaining.size(), cloud.area()));
    const GridIndex grid(pts, remaining, origin, afp);
    const double radius = std::max(kLocaleRadiusFootprints * afp, kMinLocaleRadius);
    std::vector<double> slot_height;
    slot_height.reserve(grid.point_count());
    for (auto id : grid.slot_ids()) slot_height.push_back(height[id]);

    std::vector<detail::CellAnalysis> cells(grid.cell_count());
    parallel_for(
        grid.cell_count(),
        [&](std::size_t c) {
          thread_local LocaleAnalyzer analyzer;
          thread_local std::vector<double> locale;
          locale.clear();
          grid.for_each_slot_in_radius(grid.cell_center(grid.cell(c)), radius,
                                       [&](std::size_t slot) { locale.push_back(slot_height[slot]); });
          auto& out = cells[c];
          out.threshold = analyzer.threshold(locale);
          const auto [lo, hi] = std::minmax_element(locale.begin(), locale.end());
          out.locale_min = *lo;
          out.locale_max = *hi;
        },
        workers);

    std::vector<std::size_t> stratum;
    std::vector<CellBound> bounds;
    bool reaches_canopy = false;
    for (std::size_t c = 0; c < grid.cell_count(); ++c) {
      const auto& a = cells[c];
      bool any = false;
      for (auto id : grid.cell_points(c)) {
        if (!a.threshold || height[id] > *a.threshold) {
          stripped[id] = 1;
          any = true;
        }
      }
      if (!any) continue;
      const double lower = a.threshold ? *a.threshold : a.locale_min;
      bounds.push_back({grid.cell(c), lower, a.locale_max});
      if (a.locale_max >= kGroundVegetationHeight) reaches_canopy = true;
    }

    std::vector<std::size_t> next;
    next.reserve(remaining.size());
    for (auto id : remaining) (stripped[id] ? stratum : next).push_back(id);
    remaining.swap(next);

    if (!reaches_canopy) {
      result.ground_vegetation.insert(result.ground_vegetation.end(), stratum.begin(), stratum.end());
      continue;
    }
    CanopyLayer layer;
    layer.index_from_top = static_cast<int>(result.layers.size()) + 1;
    layer.cell_width = afp;
    std::vector<double> lowers, thicknesses;
    lowers.reserve(bounds.size());
    thicknesses.reserve(bounds.size());
    for (const auto& b : bounds) {
      lowers.push_back(b.lower);
      thicknesses.push_back(b.upper - b.lower);
    }
    layer.starting_height = detail::median(std::move(lowers));
    layer.thickness = detail::median(std::move(thicknesses));
    layer.density = point_density(stratum.size(), cloud.area());
    layer.member_points = std::move(stratum);
    layer.cell_thresholds = std::move(bounds);
    result.layers.push_back(std::move(layer));
  }
  std::sort(result.ground_vegetation.begin(), result.ground_vegetation.end());
  return result;
}

struct SummaryStat {
  double mean = 0.0;
  double sd = 0.0;
};

struct LayerSummaryRow {
  std::string layer;     // "1", "2", ... or "aggregate"
  double plot_fraction;  // plots with exactly this many layers (aggregate: >= 1)
  std::size_t plots = 0; // plots contributing to the statistics below
  SummaryStat starting_height;
  SummaryStat thickness;
  SummaryStat density;
};

namespace detail {

inline SummaryStat summarize(const std::vector<double>& v) {
  SummaryStat s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace detail

// Per-depth statistics across plots, in the shape of a layer summary table:
// share of plots having exactly n layers, then mean/SD of starting height,
// thickness and density over the plots that have layer n. The aggregate row
// treats all layers of a plot as one canopy.
inline std::vector<LayerSummaryRow> layer_summary(std::span<const StratificationResult> results) {
  if (results.empty()) throw Error(ErrorKind::EmptyInput, "layer summary needs at least one result");
  std::size_t depth = 0;
  for (const auto& r : results) depth = std::max(depth, r.layers.size());
  const auto n_plots = static_cast<double>(results.size());

  std::vector<LayerSummaryRow> rows;
  for (std::size_t n = 1; n <= depth; ++n) {
    std::vector<double> start, thick, dens;
    std::size_t exactly = 0;
    for (const auto& r : results) {
      if (r.layers.size() == n) ++exactly;
      if (r.layers.size() >= n) {
        const auto& l = r.layers[n - 1];
        start.push_back(l.starting_height);
        thick.push_back(l.thickness);
        dens.push_back(l.density);
      }
    }
    rows.push_back({std::to_string(n), static_cast<double>(exactly) / n_plots, start.size(),
                    detail::summarize(start), detail::summarize(thick), detail::summarize(dens)});
  }

  std::vector<double> start, thick, dens;
  for (const auto& r : results) {
    if (r.layers.empty()) continue;
    double lo = r.layers.front().starting_height, hi = 0.0, d = 0.0;
    for (const auto& l : r.layers) {
      lo = std::min(lo, l.starting_height);
      hi = std::max(hi, l.starting_height + l.thickness);
      d += l.density;
    }
    start.push_back(lo);
    thick.push_back(hi - lo);
    dens.push_back(d);
  }
  rows.push_back({"aggregate", static_cast<double>(start.size()) / n_plots, start.size(),
                  detail::summarize(start), detail::summarize(thick), detail::summarize(dens)});
  return rows;
}

}  // namespace canopy
