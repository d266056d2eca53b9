#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "canopy/decimate.hpp"
#include "canopy/evaluate.hpp"
#include "canopy/io.hpp"
#include "canopy/occlusion.hpp"
#include "canopy/parallel.hpp"
#include "canopy/rng.hpp"
#include "canopy/segment.hpp"
#include "canopy/stratify.hpp"

namespace canopy {

struct SweepConfig {
  std::vector<double> pcd_targets{1, 2, 3, 4, 6, 8, 10, 15, 20, 30, 40, 50};  // pt/m^2
  std::size_t repetitions = 5;
  std::uint64_t seed = 1;
  bool class_split = true;

  void validate() const {
    if (pcd_targets.empty()) throw Error(ErrorKind::InvalidArgument, "sweep needs at least one target density");
    for (std::size_t i = 0; i < pcd_targets.size(); ++i) {
      if (!(pcd_targets[i] > 0.0)) throw Error(ErrorKind::InvalidArgument, "target densities must be positive");
      if (i && !(pcd_targets[i] > pcd_targets[i - 1])) {
        throw Error(ErrorKind::InvalidArgument, "target densities must be strictly ascending");
      }
    }
    if (repetitions < 1) throw Error(ErrorKind::InvalidArgument, "repetitions must be >= 1");
  }
};

// One plot going into the sweep; the cloud must already be height-normalized.
struct SweepPlot {
  std::string plot_id;
  PointCloud cloud;
  std::vector<FieldStem> stems;
  PlotGeometry geometry;
};

// Outcome of one (target, repetition, plot) job.
struct SweepCell {
  std::size_t target_index = 0;
  double target_pcd = 0.0;
  double achieved_pcd = 0.0;
  double source_pcd = 0.0;
  std::size_t repetition = 0;
  std::string plot_id;
  std::string status = "ok";  // otherwise the error kind
  std::size_t layers = 0;
  std::size_t crowns = 0;
  std::size_t mt = 0, oe = 0, ce = 0;
  ClassCounts overstory, understory;

  bool ok() const { return status == "ok"; }
};

struct SweepResult {
  std::vector<SweepCell> cells;            // sorted by target, repetition, plot id
  std::vector<FractionSample> fractions;   // full-density fractions of plots with a canopy
  double mean_source_pcd = 0.0;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline void run_cell(const SweepPlot& plot, double source_pcd, const Segmenter& segmenter, std::uint64_t seed,
                     SweepCell& cell) {
  // A target at or above the source density leaves the cloud as it is.
  PointCloud cloud = cell.target_pcd >= source_pcd ? plot.cloud : decimate(plot.cloud, {cell.target_pcd, seed}).cloud;
  cell.achieved_pcd = point_density(cloud);
  const auto strata = stratify(cloud, 1);
  cell.layers = strata.layers.size();
  const auto crowns = segment_cloud(cloud, strata, segmenter);
  cell.crowns = crowns.size();
  const auto match = match_trees(crowns, plot.stems, plot.geometry);
  cell.mt = match.mt;
  cell.oe = match.oe;
  cell.ce = match.ce;
  const auto split = split_by_class(match, crowns, plot.stems);
  cell.overstory = split.overstory;
  cell.understory = split.understory;
}

}  // namespace detail

inline std::uint64_t sweep_cell_seed(std::uint64_t master, std::size_t target_index, std::size_t repetition,
                                     std::string_view plot_id) {
  return mix_seed(master, {target_index, repetition, detail::fnv1a(plot_id)});
}

// Decimate -> stratify -> segment -> match for every target x repetition x
// plot. Failing jobs keep their error kind in `status` and the sweep goes on.
inline SweepResult density_sweep(std::span<const SweepPlot> plots, const SweepConfig& config,
                                 const Segmenter& segmenter = BaselineSegmenter{},
                                 unsigned workers = worker_count()) {
  config.validate();
  if (plots.empty()) throw Error(ErrorKind::EmptyInput, "sweep needs at least one plot");
  SweepResult out;

  std::vector<double> source(plots.size(), 0.0);
  out.fractions.resize(plots.size());
  std::vector<std::string> fraction_status(plots.size());
  parallel_for(
      plots.size(),
      [&](std::size_t p) {
        source[p] = point_density(plots[p].cloud);
        out.fractions[p].plot_id = plots[p].plot_id;
        try {
          const auto strata = stratify(plots[p].cloud, 1);
          if (strata.layers.empty()) fraction_status[p] = "no-canopy";
          out.fractions[p] = observed_fractions(strata, source[p], plots[p].plot_id);
        } catch (const Error& e) {
          fraction_status[p] = std::string(to_string(e.kind()));
        }
      },
      workers);
  for (double s : source) out.mean_source_pcd += s / static_cast<double>(plots.size());
  // Only plots with at least one canopy layer enter the fit.
  std::vector<FractionSample> fitted;
  for (std::size_t p = 0; p < plots.size(); ++p)
    if (fraction_status[p].empty()) fitted.push_back(std::move(out.fractions[p]));
  out.fractions = std::move(fitted);

  const std::size_t per_target = config.repetitions * plots.size();
  out.cells.resize(config.pcd_targets.size() * per_target);
  parallel_for(
      out.cells.size(),
      [&](std::size_t job) {
        const std::size_t t = job / per_target;
        const std::size_t r = (job % per_target) / plots.size();
        const std::size_t p = job % plots.size();
        SweepCell& cell = out.cells[job];
        cell.target_index = t;
        cell.target_pcd = config.pcd_targets[t];
        cell.source_pcd = source[p];
        cell.repetition = r;
        cell.plot_id = plots[p].plot_id;
        try {
          detail::run_cell(plots[p], source[p], segmenter,
                           sweep_cell_seed(config.seed, t, r, plots[p].plot_id), cell);
        } catch (const Error& e) {
          cell.status = std::string(to_string(e.kind()));
        }
      },
      workers);
  std::stable_sort(out.cells.begin(), out.cells.end(), [](const SweepCell& a, const SweepCell& b) {
    if (a.target_index != b.target_index) return a.target_index < b.target_index;
    if (a.repetition != b.repetition) return a.repetition < b.repetition;
    return a.plot_id < b.plot_id;
  });
  return out;
}

// ---- reporting -------------------------------------------------------------

struct SweepRow {
  double target_pcd = 0.0;
  std::string crown_class;  // all, overstory, understory
  std::size_t cells = 0;    // jobs contributing
  std::size_t failed = 0;   // jobs skipped on error
  SummaryStat achieved_pcd, recall, precision, f_score;
};

// Mean/SD of per-job scores for each target and class. Jobs whose plot has no
// stem of a class do not enter that class's row.
inline std::vector<SweepRow> aggregate_sweep(std::span<const SweepCell> cells, bool class_split) {
  std::vector<double> targets;
  for (const auto& c : cells)
    if (std::find(targets.begin(), targets.end(), c.target_pcd) == targets.end()) targets.push_back(c.target_pcd);
  std::sort(targets.begin(), targets.end());

  std::vector<std::string> classes{"all"};
  if (class_split) {
    classes.emplace_back("overstory");
    classes.emplace_back("understory");
  }
  std::vector<SweepRow> rows;
  for (double t : targets) {
    for (const auto& cls : classes) {
      SweepRow row;
      row.target_pcd = t;
      row.crown_class = cls;
      std::vector<double> ach, re, pr, f;
      for (const auto& c : cells) {
        if (c.target_pcd != t) continue;
        if (!c.ok()) {
          ++row.failed;
          continue;
        }
        ClassCounts k{c.mt, c.oe, c.ce};
        if (cls == "overstory") k = c.overstory;
        if (cls == "understory") k = c.understory;
        if (cls != "all" && k.mt + k.oe == 0) continue;
        const auto s = k.scores();
        ach.push_back(c.achieved_pcd);
        re.push_back(s.recall);
        pr.push_back(s.precision);
        f.push_back(s.f_score);
      }
      row.cells = re.size();
      row.achieved_pcd = detail::summarize(ach);
      row.recall = detail::summarize(re);
      row.precision = detail::summarize(pr);
      row.f_score = detail::summarize(f);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string sweep_cells_csv(std::span<const SweepCell> cells) {
  std::string out =
      "target_index,target_pcd,achieved_pcd,source_pcd,repetition,plot_id,status,layers,crowns,mt,oe,ce,"
      "over_mt,over_oe,over_ce,under_mt,under_oe,under_ce,recall,precision,f_score\n";
  for (const auto& c : cells) {
    const auto s = metrics(c.mt, c.oe, c.ce);
    out += io::format("%zu,%.6f,%.6f,%.6f,%zu,", c.target_index, c.target_pcd, c.achieved_pcd, c.source_pcd,
                      c.repetition);
    out += c.plot_id + "," + c.status;
    out += io::format(",%zu,%zu,%zu,%zu,%zu,%zu,%zu,%zu,%zu,%zu,%zu,%.6f,%.6f,%.6f\n", c.layers, c.crowns, c.mt,
                      c.oe, c.ce, c.overstory.mt, c.overstory.oe, c.overstory.ce, c.understory.mt,
                      c.understory.oe, c.understory.ce, s.recall, s.precision, s.f_score);
  }
  return out;
}

inline std::vector<SweepCell> read_sweep_cells(const io::fs::path& path) {
  const io::CsvTable t(io::read_text(path), path.string());
  const auto col = [&](const char* name) { return t.column(name); };
  const auto cti = col("target_index"), ct = col("target_pcd"), ca = col("achieved_pcd"), cs = col("source_pcd");
  const auto cr = col("repetition"), cp = col("plot_id"), cst = col("status"), cl = col("layers"),
             ccr = col("crowns");
  const auto cmt = col("mt"), coe = col("oe"), cce = col("ce");
  const auto omt = col("over_mt"), ooe = col("over_oe"), oce = col("over_ce");
  const auto umt = col("under_mt"), uoe = col("under_oe"), uce = col("under_ce");
  std::vector<SweepCell> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto& c = out[r];
    c.target_index = t.number<std::size_t>(r, cti);
    c.target_pcd = t.number<double>(r, ct);
    c.achieved_pcd = t.number<double>(r, ca);
    c.source_pcd = t.number<double>(r, cs);
    c.repetition = t.number<std::size_t>(r, cr);
    c.plot_id = std::string(t.field(r, cp));
    c.status = std::string(t.field(r, cst));
    c.layers = t.number<std::size_t>(r, cl);
    c.crowns = t.number<std::size_t>(r, ccr);
    c.mt = t.number<std::size_t>(r, cmt);
    c.oe = t.number<std::size_t>(r, coe);
    c.ce = t.number<std::size_t>(r, cce);
    c.overstory = {t.number<std::size_t>(r, omt), t.number<std::size_t>(r, ooe), t.number<std::size_t>(r, oce)};
    c.understory = {t.number<std::size_t>(r, umt), t.number<std::size_t>(r, uoe), t.number<std::size_t>(r, uce)};
  }
  if (out.empty()) throw Error(ErrorKind::EmptyInput, path.string() + ": no sweep rows");
  return out;
}

inline std::string sweep_report_csv(std::span<const SweepRow> rows) {
  std::string out =
      "target_pcd,class,cells,failed,achieved_pcd_mean,achieved_pcd_sd,recall_mean,recall_sd,precision_mean,"
      "precision_sd,f_score_mean,f_score_sd\n";
  for (const auto& r : rows) {
    out += io::format("%.6f,", r.target_pcd) + r.crown_class;
    out += io::format(",%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.cells, r.failed, r.achieved_pcd.mean,
                      r.achieved_pcd.sd, r.recall.mean, r.recall.sd, r.precision.mean, r.precision.sd,
                      r.f_score.mean, r.f_score.sd);
  }
  return out;
}

// Published densities for layers 1..3 at theta = 0.266, carried next to our
// own evaluation for comparison.
inline constexpr double kReportedRequiredPcd[3] = {4.0, 30.07, 169.57};
inline constexpr double kDefaultPcdMin = 4.0;

struct OcclusionSummary {
  LogSeriesModel model;
  double pcd_min = kDefaultPcdMin;
  double required[3] = {0.0, 0.0, 0.0};
  double source_pcd = 0.0;
  double eupcd = 0.0;
};

inline OcclusionSummary summarize_occlusion(const LogSeriesModel& model, double source_pcd,
                                            double pcd_min = kDefaultPcdMin) {
  OcclusionSummary s;
  s.model = model;
  s.pcd_min = pcd_min;
  s.source_pcd = source_pcd;
  const auto p = logseries_fractions(model.theta, 3);
  for (unsigned n = 1; n <= 3; ++n) s.required[n - 1] = required_pcd(pcd_min, p, n);
  s.eupcd = eupcd(source_pcd, p[0], p[1]);
  return s;
}

inline std::string required_density_csv(const OcclusionSummary& s) {
  std::string out = "layer,required_pcd,paper_reported\n";
  for (unsigned n = 1; n <= 3; ++n)
    out += io::format("%u,%.6f,%.2f\n", n, s.required[n - 1], kReportedRequiredPcd[n - 1]);
  return out;
}

inline io::json occlusion_json(const OcclusionSummary& s) {
  io::json req = io::json::array();
  for (unsigned n = 1; n <= 3; ++n) {
    req.push_back({{"layer", n},
                   {"required_pcd", s.required[n - 1]},
                   {"paper_reported", kReportedRequiredPcd[n - 1]}});
  }
  return io::json{{"theta", s.model.theta},
                  {"fit_mse", s.model.fit_mse},
                  {"n_samples", s.model.n_samples},
                  {"pcd_min", s.pcd_min},
                  {"required_pcd", req},
                  {"source_pcd", s.source_pcd},
                  {"eupcd", s.eupcd}};
}

}  // namespace canopy
