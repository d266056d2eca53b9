// canopy: command-line front end for the stratification / occlusion /
// segmentation-evaluation pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canopy/canopy.hpp"

namespace {

using namespace canopy;
using io::json;
namespace fs = std::filesystem;

template <typename T>
struct is_optional : std::false_type {};
template <typename T>
struct is_optional<std::optional<T>> : std::true_type {};

// Flags registered through Bound also accept a value from the --config JSON
// document; a flag given on the command line wins.
class Bound {
 public:
  explicit Bound(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with defaults for this command's flags");
  }

  template <typename T>
  CLI::Option* add(const std::string& flag, T& target, const std::string& help) {
    auto* opt = app_->add_option(flag, target, help);
    remember(flag, opt, [&target](const json& v) {
      if constexpr (is_optional<T>::value)
        target = v.get<typename T::value_type>();
      else
        target = v.get<T>();
    });
    return opt;
  }

  CLI::Option* flag(const std::string& flag, bool& target, const std::string& help) {
    auto* opt = app_->add_flag(flag, target, help);
    remember(flag, opt, [&target](const json& v) { target = v.get<bool>(); });
    return opt;
  }

  void apply_config() {
    if (config_path_.empty()) return;
    const json doc = io::read_json(config_path_);
    if (!doc.is_object()) throw Error(ErrorKind::InvalidArgument, config_path_ + ": config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
      const auto it = setters_.find(normalize(key));
      if (it == setters_.end()) throw Error(ErrorKind::InvalidArgument, config_path_ + ": unknown key '" + key + "'");
      if (it->second.first->count() > 0) continue;
      try {
        it->second.second(value);
      } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, config_path_ + ": key '" + key + "': " + e.what());
      }
    }
  }

  CLI::App* app() const { return app_; }

 private:
  static std::string normalize(std::string s) {
    while (!s.empty() && s.front() == '-') s.erase(s.begin());
    for (auto& c : s)
      if (c == '_') c = '-';
    return s;
  }

  void remember(const std::string& flag, CLI::Option* opt, std::function<void(const json&)> set) {
    std::string name = flag;
    if (auto comma = name.find(','); comma != std::string::npos) name = name.substr(comma + 1);
    setters_[normalize(name)] = {opt, std::move(set)};
  }

  CLI::App* app_;
  std::string config_path_;
  std::map<std::string, std::pair<CLI::Option*, std::function<void(const json&)>>> setters_;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorKind::InvalidArgument, std::string(flag) + " is required");
}

void info(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

// Height-normalized cloud: DEM from file, or built from the cloud's own
// ground returns.
PointCloud load_normalized(const std::string& cloud_path, const std::string& dem_path, double resolution) {
  const PointCloud cloud = io::read_cloud(cloud_path);
  const Dem dem = dem_path.empty() ? build_dem(cloud, resolution) : io::read_dem(dem_path);
  auto norm = normalize_heights(cloud, dem);
  if (norm.clamped_below_ground > 0)
    info(io::format("note: %zu points below the ground surface clamped to height 0", norm.clamped_below_ground));
  return std::move(norm.cloud);
}

std::vector<double> parse_targets(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(start, end - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "bad target density '" + item + "'");
    }
    start = end + 1;
  }
  return out;
}

// ---- subcommands -----------------------------------------------------------

struct SimulateArgs {
  std::string out_dir;
  std::size_t plots = 23;
  std::uint64_t seed = 1;
  double pulse_density = ScanConfig{}.pulse_density;
  int max_returns = 4;
  double scan_half_angle = 20.0;
  double attenuation = 0.6;
  double ground_reflect = 0.9;
  double tier1 = PlotSetConfig{}.tier1_per_ha;
  double tier2 = PlotSetConfig{}.tier2_per_ha;
  double tier3 = PlotSetConfig{}.tier3_per_ha;
  double slope = 0.0;
};

int run_simulate(const SimulateArgs& a) {
  require(a.out_dir, "--out-dir");
  PlotSetConfig cfg;
  cfg.plots = a.plots;
  cfg.seed = a.seed;
  cfg.scan.pulse_density = a.pulse_density;
  cfg.scan.max_returns = a.max_returns;
  cfg.scan.scan_half_angle = a.scan_half_angle;
  cfg.scan.attenuation = a.attenuation;
  cfg.scan.ground_reflect = a.ground_reflect;
  cfg.tier1_per_ha = a.tier1;
  cfg.tier2_per_ha = a.tier2;
  cfg.tier3_per_ha = a.tier3;
  if (a.slope != 0.0) cfg.terrain = {TerrainKind::Ramp, 0.0, a.slope};
  cfg.scan.validate();
  if (a.plots == 0) throw Error(ErrorKind::InvalidArgument, "--plots must be >= 1");

  const auto plots = simulate_plots(cfg);
  const fs::path dir = a.out_dir;
  json manifest{{"plots", json::array()}};
  for (const auto& p : plots) {
    io::write_cloud(dir / (p.plot_id + ".csv"), p.cloud);
    io::write_text(dir / (p.plot_id + ".stems.csv"), io::stems_csv(p.stems));
    io::write_text(dir / (p.plot_id + ".truth.csv"), io::truth_csv(p.stem_id, p.tier));
    io::write_json(dir / (p.plot_id + ".stand.json"), io::stand_json(p.stand));
    manifest["plots"].push_back(
        io::manifest_entry({p.plot_id, p.plot_id + ".csv", p.plot_id + ".stems.csv", p.geometry}));
  }
  json scan = io::scan_config_json(cfg.scan);
  scan["seed"] = cfg.seed;
  io::write_json(dir / "scan_config.json", scan);
  io::write_json(dir / "manifest.json", manifest);
  info(io::format("simulated %zu plots into %s", plots.size(), dir.string().c_str()));
  return 0;
}

struct DemArgs {
  std::string input, output;
  double resolution = 1.0;
};

int run_dem(const DemArgs& a) {
  require(a.input, "--input");
  require(a.output, "--output");
  const PointCloud cloud = io::read_cloud(a.input);
  const Dem dem = build_dem(cloud, a.resolution);
  io::write_dem(a.output, dem);
  return 0;
}

struct StratifyArgs {
  std::string input, manifest, dem, labels, stats, summary, fractions;
  double dem_resolution = 1.0;
};

int run_stratify(const StratifyArgs& a) {
  if (a.input.empty() == a.manifest.empty())
    throw Error(ErrorKind::InvalidArgument, "give exactly one of --input or --manifest");
  if (!a.input.empty()) {
    const PointCloud cloud = load_normalized(a.input, a.dem, a.dem_resolution);
    const auto result = stratify(cloud);
    if (!a.labels.empty()) io::write_text(a.labels, io::labels_csv(result, cloud.size()));
    const json stats = io::layer_stats_json(result);
    if (a.stats.empty()) std::cout << stats.dump(2) << "\n";
    else io::write_json(a.stats, stats);
    return 0;
  }
  const auto entries = io::read_manifest(a.manifest);
  std::vector<StratificationResult> results(entries.size());
  std::vector<FractionSample> samples;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const PointCloud cloud = load_normalized(entries[i].cloud.string(), "", a.dem_resolution);
    results[i] = stratify(cloud);
    if (!results[i].layers.empty())
      samples.push_back(observed_fractions(results[i], point_density(cloud), entries[i].plot_id));
  }
  const json summary = io::layer_summary_json(layer_summary(results));
  if (a.summary.empty()) std::cout << summary.dump(2) << "\n";
  else io::write_json(a.summary, summary);
  if (!a.fractions.empty()) io::write_text(a.fractions, io::fractions_csv(samples));
  return 0;
}

struct DecimateArgs {
  std::string input, output;
  double target_pcd = 4.0;
  std::uint64_t seed = 0;
};

int run_decimate(const DecimateArgs& a) {
  require(a.input, "--input");
  require(a.output, "--output");
  if (!(a.target_pcd > 0.0)) throw Error(ErrorKind::InvalidArgument, "--target-pcd must be positive");
  const PointCloud cloud = io::read_cloud(a.input);
  const auto r = decimate(cloud, {a.target_pcd, a.seed});
  io::write_cloud(a.output, r.cloud, {{"target_pcd", r.target_pcd}, {"achieved_pcd", r.achieved_pcd}, {"seed", r.seed}});
  return 0;
}

struct FitArgs {
  std::string fractions, output;
};

int run_fit(const FitArgs& a) {
  require(a.fractions, "--fractions");
  const auto samples = io::read_fractions(a.fractions);
  const json model = io::model_json(fit_theta(samples));
  if (a.output.empty()) std::cout << model.dump(2) << "\n";
  else io::write_json(a.output, model);
  return 0;
}

struct RequiredArgs {
  std::string model, output;
  std::optional<double> theta;
  std::optional<double> source_pcd;
  double pcd_min = kDefaultPcdMin;
};

int run_required(const RequiredArgs& a) {
  if (a.model.empty() == !a.theta.has_value())
    throw Error(ErrorKind::InvalidArgument, "give exactly one of --theta or --model");
  LogSeriesModel m;
  if (a.theta) m.theta = *a.theta;
  else m = io::read_model(a.model);
  const auto s = summarize_occlusion(m, a.source_pcd.value_or(1.0), a.pcd_min);
  std::string text = required_density_csv(s);
  if (a.source_pcd) text += io::format("# eupcd at %.6f pt/m2: %.6f\n", s.source_pcd, s.eupcd);
  if (a.output.empty()) std::cout << text;
  else io::write_text(a.output, text);
  return 0;
}

struct SegmentArgs {
  std::string input, dem, output;
  double dem_resolution = 1.0;
  double min_separation = 2.0;
  double cell_width = 0.5;
};

int run_segment(const SegmentArgs& a) {
  require(a.input, "--input");
  require(a.output, "--output");
  const PointCloud cloud = load_normalized(a.input, a.dem, a.dem_resolution);
  BaselineSegmenter seg;
  seg.min_separation = a.min_separation;
  seg.cell_width = a.cell_width;
  const auto crowns = segment_cloud(cloud, seg);
  io::write_text(a.output, io::crowns_csv(crowns));
  return 0;
}

struct EvaluateArgs {
  std::string crowns, stems, plot_id, output;
  std::vector<double> center{0.0, 0.0};
  double radius = PlotGeometry{}.radius;
  double buffer_width = PlotGeometry{}.buffer_width;
  bool exclude_dead = false;
};

int run_evaluate(const EvaluateArgs& a) {
  require(a.crowns, "--crowns");
  require(a.stems, "--stems");
  if (a.center.size() != 2) throw Error(ErrorKind::InvalidArgument, "--center takes two numbers");
  const auto crowns = io::read_crowns(a.crowns);
  auto stems = io::read_stems(a.stems);
  if (!a.plot_id.empty()) std::erase_if(stems, [&](const FieldStem& s) { return s.plot_id != a.plot_id; });
  PlotGeometry g;
  g.center = {a.center[0], a.center[1]};
  g.radius = a.radius;
  g.buffer_width = a.buffer_width;
  const MatchOptions opt{!a.exclude_dead};
  const auto r = match_trees(crowns, stems, g, opt);
  if (r.degenerate_crowns > 0) info(io::format("warning: %zu crowns with non-positive apex height", r.degenerate_crowns));
  const json out = io::match_json(r, split_by_class(r, crowns, stems, opt));
  if (a.output.empty()) std::cout << out.dump(2) << "\n";
  else io::write_json(a.output, out);
  return 0;
}

void write_report(const fs::path& dir, std::span<const SweepCell> cells, std::span<const FractionSample> fractions,
                  bool class_split, double pcd_min) {
  const auto rows = aggregate_sweep(cells, class_split);
  io::write_text(dir / "report.csv", sweep_report_csv(rows));
  double source = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.target_index != 0) continue;
    source += c.source_pcd;
    ++n;
  }
  json summary{{"cells", cells.size()}};
  if (n > 0) summary["source_pcd"] = source / static_cast<double>(n);
  if (!fractions.empty()) {
    const auto model = fit_theta(fractions);
    summary["occlusion"] = occlusion_json(summarize_occlusion(model, source / static_cast<double>(n), pcd_min));
    io::write_text(dir / "required_density.csv", required_density_csv(summarize_occlusion(model, 1.0, pcd_min)));
  }
  io::write_json(dir / "report.json", summary);
}

struct SweepArgs {
  std::string manifest, out_dir;
  std::string targets = "1,2,3,4,6,8,10,15,20,30,40,50";
  std::size_t repetitions = 5;
  std::uint64_t seed = 1;
  bool no_class_split = false;
  double dem_resolution = 1.0;
  double pcd_min = kDefaultPcdMin;
};

int run_sweep(const SweepArgs& a) {
  require(a.manifest, "--manifest");
  require(a.out_dir, "--out-dir");
  SweepConfig cfg;
  cfg.pcd_targets = parse_targets(a.targets);
  cfg.repetitions = a.repetitions;
  cfg.seed = a.seed;
  cfg.class_split = !a.no_class_split;
  cfg.validate();

  const auto entries = io::read_manifest(a.manifest);
  std::vector<SweepPlot> plots(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    plots[i].plot_id = entries[i].plot_id;
    plots[i].cloud = load_normalized(entries[i].cloud.string(), "", a.dem_resolution);
    auto stems = io::read_stems(entries[i].stems);
    std::erase_if(stems, [&](const FieldStem& s) { return s.plot_id != entries[i].plot_id; });
    plots[i].stems = std::move(stems);
    plots[i].geometry = entries[i].geometry;
  });

  const auto result = density_sweep(plots, cfg);
  std::size_t failed = 0;
  for (const auto& c : result.cells) failed += c.ok() ? 0 : 1;
  if (failed > 0) info(io::format("warning: %zu of %zu sweep jobs failed and were skipped", failed, result.cells.size()));

  const fs::path dir = a.out_dir;
  io::write_text(dir / "cells.csv", sweep_cells_csv(result.cells));
  io::write_text(dir / "fractions.csv", io::fractions_csv(result.fractions));
  write_report(dir, result.cells, result.fractions, cfg.class_split, a.pcd_min);
  return 0;
}

struct ReportArgs {
  std::string cells, fractions, out_dir;
  bool no_class_split = false;
  double pcd_min = kDefaultPcdMin;
};

int run_report(const ReportArgs& a) {
  require(a.cells, "--cells");
  require(a.out_dir, "--out-dir");
  const auto cells = read_sweep_cells(a.cells);
  std::vector<FractionSample> fractions;
  if (!a.fractions.empty()) fractions = io::read_fractions(a.fractions);
  write_report(a.out_dir, cells, fractions, !a.no_class_split, a.pcd_min);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Canopy stratification, occlusion modelling and segmentation evaluation"};
  app.require_subcommand(1);

  std::vector<std::unique_ptr<Bound>> bound;
  std::function<int()> action;
  auto command = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    bound.push_back(std::make_unique<Bound>(sub));
    return bound.back().get();
  };

  SimulateArgs sim;
  {
    auto* b = command("simulate", "generate synthetic stands, scan them and cut plots");
    b->add("--out-dir", sim.out_dir, "output directory");
    b->add("--plots", sim.plots, "number of plots");
    b->add("--seed", sim.seed, "master seed");
    b->add("--pulse-density", sim.pulse_density, "pulses per m2");
    b->add("--max-returns", sim.max_returns, "echoes per pulse");
    b->add("--scan-half-angle", sim.scan_half_angle, "degrees");
    b->add("--attenuation", sim.attenuation, "per-crown echo / stop probability");
    b->add("--ground-reflect", sim.ground_reflect, "ground echo probability");
    b->add("--tier1-per-ha", sim.tier1, "overstory stems per ha");
    b->add("--tier2-per-ha", sim.tier2, "mid-tier stems per ha");
    b->add("--tier3-per-ha", sim.tier3, "low-tier stems per ha");
    b->add("--slope", sim.slope, "ramp terrain slope (m/m); 0 is flat");
    b->app()->callback([&] { action = [&] { return run_simulate(sim); }; });
  }

  DemArgs dem;
  {
    auto* b = command("dem", "build a DEM from ground returns");
    b->add("--input", dem.input, "point CSV");
    b->add("--output", dem.output, "ASCII grid output");
    b->add("--resolution", dem.resolution, "cell size (m)");
    b->app()->callback([&] { action = [&] { return run_dem(dem); }; });
  }

  StratifyArgs strat;
  {
    auto* b = command("stratify", "split a cloud into canopy layers");
    b->add("--input", strat.input, "point CSV");
    b->add("--manifest", strat.manifest, "plot manifest (layer summary mode)");
    b->add("--dem", strat.dem, "DEM grid; built from ground returns when absent");
    b->add("--dem-resolution", strat.dem_resolution, "cell size of a built DEM (m)");
    b->add("--labels", strat.labels, "per-point layer CSV");
    b->add("--stats", strat.stats, "layer statistics JSON");
    b->add("--summary", strat.summary, "layer summary JSON (manifest mode)");
    b->add("--fractions", strat.fractions, "layer fraction CSV (manifest mode)");
    b->app()->callback([&] { action = [&] { return run_stratify(strat); }; });
  }

  DecimateArgs dec;
  {
    auto* b = command("decimate", "thin a cloud to a target density");
    b->add("--input", dec.input, "point CSV");
    b->add("--output", dec.output, "point CSV");
    b->add("--target-pcd", dec.target_pcd, "target pt/m2");
    b->add("--seed", dec.seed, "seed");
    b->app()->callback([&] { action = [&] { return run_decimate(dec); }; });
  }

  FitArgs fit;
  {
    auto* b = command("fit", "fit the logarithmic series to layer fractions");
    b->add("--fractions", fit.fractions, "fractions CSV");
    b->add("--output", fit.output, "model JSON (stdout when absent)");
    b->app()->callback([&] { action = [&] { return run_fit(fit); }; });
  }

  RequiredArgs req;
  {
    auto* b = command("required-density", "density needed per layer under the occlusion model");
    b->add("--theta", req.theta, "log-series parameter");
    b->add("--model", req.model, "model JSON from fit");
    b->add("--pcd-min", req.pcd_min, "density the layer itself needs (pt/m2)");
    b->add("--source-pcd", req.source_pcd, "acquisition density for the EUPCD line");
    b->add("--output", req.output, "CSV output (stdout when absent)");
    b->app()->callback([&] { action = [&] { return run_required(req); }; });
  }

  SegmentArgs seg;
  {
    auto* b = command("segment", "stratify and delineate crowns layer by layer");
    b->add("--input", seg.input, "point CSV");
    b->add("--output", seg.output, "crown CSV");
    b->add("--dem", seg.dem, "DEM grid; built from ground returns when absent");
    b->add("--dem-resolution", seg.dem_resolution, "cell size of a built DEM (m)");
    b->add("--min-separation", seg.min_separation, "minimum apex spacing (m)");
    b->add("--cell-width", seg.cell_width, "CHM cell width (m)");
    b->app()->callback([&] { action = [&] { return run_segment(seg); }; });
  }

  EvaluateArgs ev;
  {
    auto* b = command("evaluate", "match crowns to field stems");
    b->add("--crowns", ev.crowns, "crown CSV");
    b->add("--stems", ev.stems, "stem map CSV");
    b->add("--plot-id", ev.plot_id, "only stems of this plot");
    b->add("--center", ev.center, "plot center x y")->expected(2);
    b->add("--radius", ev.radius, "plot radius (m)");
    b->add("--buffer-width", ev.buffer_width, "buffer annulus width (m)");
    b->flag("--exclude-dead", ev.exclude_dead, "leave dead stems out of matching");
    b->add("--output", ev.output, "result JSON (stdout when absent)");
    b->app()->callback([&] { action = [&] { return run_evaluate(ev); }; });
  }

  SweepArgs sw;
  {
    auto* b = command("sweep", "segmentation accuracy across decimated densities");
    b->add("--manifest", sw.manifest, "plot manifest");
    b->add("--out-dir", sw.out_dir, "output directory");
    b->add("--targets", sw.targets, "comma-separated target densities, ascending");
    b->add("--repetitions", sw.repetitions, "decimation repetitions per target");
    b->add("--seed", sw.seed, "master seed");
    b->flag("--no-class-split", sw.no_class_split, "skip overstory/understory rows");
    b->add("--dem-resolution", sw.dem_resolution, "cell size of the per-plot DEM (m)");
    b->add("--pcd-min", sw.pcd_min, "density the top layer needs (pt/m2)");
    b->app()->callback([&] { action = [&] { return run_sweep(sw); }; });
  }

  ReportArgs rep;
  {
    auto* b = command("report", "aggregate sweep cells into the report files");
    b->add("--cells", rep.cells, "cells CSV from sweep");
    b->add("--fractions", rep.fractions, "fractions CSV for the occlusion summary");
    b->add("--out-dir", rep.out_dir, "output directory");
    b->flag("--no-class-split", rep.no_class_split, "skip overstory/understory rows");
    b->add("--pcd-min", rep.pcd_min, "density the top layer needs (pt/m2)");
    b->app()->callback([&] { action = [&] { return run_report(rep); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (auto& b : bound)
      if (b->app()->parsed()) b->apply_config();
    return action ? action() : 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
