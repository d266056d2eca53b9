#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "canopy/core.hpp"
#include "canopy/dem.hpp"
#include "canopy/evaluate.hpp"
#include "canopy/occlusion.hpp"
#include "canopy/segment.hpp"
#include "canopy/simulate.hpp"
#include "canopy/stratify.hpp"

namespace canopy::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---- plumbing --------------------------------------------------------------

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, "'" + path.string() + "': " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

// printf-style formatting into a std::string.
template <typename... Args>
std::string format(const char* fmt, Args... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string s(static_cast<std::size_t>(n) + 1, '\0');
  std::snprintf(s.data(), s.size(), fmt, args...);
  s.resize(static_cast<std::size_t>(n));
  return s;
}

// Comma-separated table with a named header. Fields are not quoted.
class CsvTable {
 public:
  CsvTable(std::string text_in, std::string source) : source_(std::move(source)), text_(std::move(text_in)) {
    const std::string_view text = text_;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      std::vector<std::string_view> fields;
      std::size_t start = 0;
      while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      if (header_.empty()) {
        for (std::size_t i = 0; i < fields.size(); ++i) header_.emplace(std::string(fields[i]), i);
        width_ = fields.size();
        continue;
      }
      if (fields.size() != width_) {
        throw Error(ErrorKind::MalformedInput, source_ + " line " + std::to_string(line_no) + ": expected " +
                                                   std::to_string(width_) + " fields, got " +
                                                   std::to_string(fields.size()));
      }
      rows_.push_back(std::move(fields));
      lines_.push_back(line_no);
    }
    if (header_.empty()) throw Error(ErrorKind::MalformedInput, source_ + ": missing header");
  }

  // Fields point into text_, so the table stays where it was built.
  CsvTable(const CsvTable&) = delete;
  CsvTable& operator=(const CsvTable&) = delete;

  std::size_t rows() const { return rows_.size(); }

  std::size_t column(const std::string& name) const {
    const auto it = header_.find(name);
    if (it == header_.end()) throw Error(ErrorKind::MalformedInput, source_ + ": missing column '" + name + "'");
    return it->second;
  }

  std::string_view field(std::size_t row, std::size_t col) const { return rows_[row][col]; }

  template <typename T>
  T number(std::size_t row, std::size_t col) const {
    const auto f = field(row, col);
    T value{};
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
    if (ec != std::errc() || ptr != f.data() + f.size()) {
      throw Error(ErrorKind::MalformedInput, source_ + " line " + std::to_string(lines_[row]) + ": bad number '" +
                                                 std::string(f) + "'");
    }
    return value;
  }

 private:
  std::string source_;
  std::string text_;
  std::unordered_map<std::string, std::size_t> header_;
  std::size_t width_ = 0;
  std::vector<std::vector<std::string_view>> rows_;
  std::vector<std::size_t> lines_;
};

inline fs::path meta_path_for(const fs::path& cloud_path) {
  fs::path p = cloud_path;
  p.replace_extension(".meta.json");
  return p;
}

// ---- point clouds ----------------------------------------------------------

inline std::string point_csv(const PointCloud& cloud) {
  std::string out = "x,y,z,return_number,returns_of_pulse,pulse_id,is_ground\n";
  out.reserve(out.size() + cloud.size() * 56);
  char buf[160];
  for (const auto& p : cloud.points()) {
    const int n = std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%u,%u,%llu,%d\n", p.x, p.y, p.z,
                                static_cast<unsigned>(p.return_number), static_cast<unsigned>(p.returns_of_pulse),
                                static_cast<unsigned long long>(p.pulse_id), p.is_ground ? 1 : 0);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

inline json cloud_meta(const PointCloud& cloud) {
  const auto& e = cloud.extent();
  return json{{"area_m2", cloud.area()}, {"extent", {e.min_x, e.min_y, e.max_x, e.max_y}}};
}

inline void write_cloud(const fs::path& path, const PointCloud& cloud, const json& extra_meta = json::object()) {
  write_text(path, point_csv(cloud));
  json meta = cloud_meta(cloud);
  for (const auto& [k, v] : extra_meta.items()) meta[k] = v;
  write_json(meta_path_for(path), meta);
}

inline std::vector<LidarPoint> parse_points(std::string_view text, const std::string& source) {
  const CsvTable t(std::string(text), source);
  const auto cx = t.column("x"), cy = t.column("y"), cz = t.column("z");
  const auto crn = t.column("return_number"), crp = t.column("returns_of_pulse");
  const auto cp = t.column("pulse_id"), cg = t.column("is_ground");
  std::vector<LidarPoint> pts(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto& p = pts[r];
    p.x = t.number<double>(r, cx);
    p.y = t.number<double>(r, cy);
    p.z = t.number<double>(r, cz);
    const auto rn = t.number<unsigned>(r, crn), rp = t.number<unsigned>(r, crp);
    if (rn > 255 || rp > 255) throw Error(ErrorKind::MalformedInput, source + ": return numbering out of range");
    p.return_number = static_cast<std::uint8_t>(rn);
    p.returns_of_pulse = static_cast<std::uint8_t>(rp);
    p.pulse_id = t.number<std::uint64_t>(r, cp);
    const auto g = t.number<int>(r, cg);
    if (g != 0 && g != 1) throw Error(ErrorKind::MalformedInput, source + ": is_ground must be 0 or 1");
    p.is_ground = g == 1;
  }
  return pts;
}

// Reads the CSV and its sidecar metadata. Without a sidecar the extent is the
// bounding box of the points and the area its rectangle.
inline PointCloud read_cloud(const fs::path& path) {
  auto pts = parse_points(read_text(path), path.string());
  validate_returns(pts);
  const auto meta_path = meta_path_for(path);
  if (!fs::exists(meta_path)) {
    if (pts.empty()) throw Error(ErrorKind::EmptyInput, path.string() + ": no points and no metadata");
    const Extent e = bounding_extent(pts);
    const double area = e.width() * e.height();
    if (!(area > 0.0)) throw Error(ErrorKind::MalformedInput, path.string() + ": degenerate extent, supply metadata");
    return PointCloud(std::move(pts), e, area);
  }
  const json meta = read_json(meta_path);
  try {
    const auto& ex = meta.at("extent");
    if (!ex.is_array() || ex.size() != 4) throw Error(ErrorKind::MalformedInput, "extent needs 4 numbers");
    const Extent e{ex[0].get<double>(), ex[1].get<double>(), ex[2].get<double>(), ex[3].get<double>()};
    return PointCloud(std::move(pts), e, meta.at("area_m2").get<double>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, meta_path.string() + ": " + e.what());
  }
}

// ---- DEM -------------------------------------------------------------------

inline void write_dem(const fs::path& path, const Dem& dem) {
  std::ostringstream ss;
  write_ascii_grid(ss, dem);
  write_text(path, ss.str());
}

inline Dem read_dem(const fs::path& path) {
  std::istringstream ss(read_text(path));
  return read_ascii_grid(ss);
}

// ---- stratification --------------------------------------------------------

inline std::string labels_csv(const StratificationResult& r, std::size_t point_count) {
  std::string out = "point_index,layer\n";
  const auto labels = r.labels(point_count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;  // ground returns carry no layer
    out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
  }
  return out;
}

inline json stat_json(const SummaryStat& s) { return json{{"mean", s.mean}, {"sd", s.sd}}; }

inline json layer_stats_json(const StratificationResult& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.index_from_top},
                      {"points", l.member_points.size()},
                      {"starting_height_m", l.starting_height},
                      {"thickness_m", l.thickness},
                      {"density_pt_m2", l.density},
                      {"cell_width_m", l.cell_width}});
  }
  return json{{"iterations", r.iterations},
              {"area_m2", r.area},
              {"ground_vegetation_points", r.ground_vegetation.size()},
              {"layers", layers}};
}

inline json layer_summary_json(std::span<const LayerSummaryRow> rows) {
  json out = json::array();
  for (const auto& row : rows) {
    out.push_back({{"layer", row.layer},
                   {"plot_fraction", row.plot_fraction},
                   {"plots", row.plots},
                   {"starting_height_m", stat_json(row.starting_height)},
                   {"thickness_m", stat_json(row.thickness)},
                   {"density_pt_m2", stat_json(row.density)}});
  }
  return out;
}

// ---- occlusion -------------------------------------------------------------

inline std::string fractions_csv(std::span<const FractionSample> samples) {
  std::string out = "plot_id,p1,p2,p3,p4,p5\n";
  for (const auto& s : samples) {
    out += s.plot_id;
    for (double p : s.fractions) out += format(",%.9f", p);
    out += "\n";
  }
  return out;
}

inline std::vector<FractionSample> read_fractions(const fs::path& path) {
  const CsvTable t(read_text(path), path.string());
  const auto cid = t.column("plot_id");
  std::size_t cols[kFractionDepth];
  for (std::size_t k = 0; k < kFractionDepth; ++k) cols[k] = t.column("p" + std::to_string(k + 1));
  std::vector<FractionSample> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    out[r].plot_id = std::string(t.field(r, cid));
    for (std::size_t k = 0; k < kFractionDepth; ++k) {
      const double p = t.number<double>(r, cols[k]);
      if (p < 0.0 || p > 1.0) throw Error(ErrorKind::MalformedInput, path.string() + ": fraction outside [0, 1]");
      out[r].fractions[k] = p;
    }
  }
  return out;
}

inline json model_json(const LogSeriesModel& m) {
  return json{{"theta", m.theta}, {"fit_mse", m.fit_mse}, {"n_samples", m.n_samples}};
}

inline LogSeriesModel read_model(const fs::path& path) {
  const json j = read_json(path);
  try {
    LogSeriesModel m;
    m.theta = j.at("theta").get<double>();
    m.fit_mse = j.value("fit_mse", 0.0);
    m.n_samples = j.value("n_samples", std::size_t{0});
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, path.string() + ": " + e.what());
  }
}

// ---- stems and crowns ------------------------------------------------------

inline std::string stems_csv(std::span<const FieldStem> stems) {
  std::string out = "plot_id,x,y,height_m,dbh_cm,crown_class,species\n";
  for (const auto& s : stems) {
    out += s.plot_id + format(",%.4f,%.4f,%.3f,%.2f,", s.x, s.y, s.height, s.dbh) + std::string(to_string(s.crown_class)) +
           "," + s.species + "\n";
  }
  return out;
}

inline std::vector<FieldStem> read_stems(const fs::path& path) {
  const CsvTable t(read_text(path), path.string());
  const auto cid = t.column("plot_id"), cx = t.column("x"), cy = t.column("y"), ch = t.column("height_m");
  const auto cd = t.column("dbh_cm"), cc = t.column("crown_class"), cs = t.column("species");
  std::vector<FieldStem> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto& s = out[r];
    s.plot_id = std::string(t.field(r, cid));
    s.x = t.number<double>(r, cx);
    s.y = t.number<double>(r, cy);
    s.height = t.number<double>(r, ch);
    s.dbh = t.number<double>(r, cd);
    s.crown_class = parse_crown_class(t.field(r, cc));
    s.species = std::string(t.field(r, cs));
    if (!(s.height > 0.0)) throw Error(ErrorKind::MalformedInput, path.string() + ": stem height must be positive");
  }
  return out;
}

inline std::string crowns_csv(std::span<const TreeCrown> crowns) {
  std::string out = "crown_id,apex_x,apex_y,apex_height,source_layer,n_points\n";
  for (std::size_t i = 0; i < crowns.size(); ++i) {
    const auto& c = crowns[i];
    out += format("%zu,%.4f,%.4f,%.4f,%d,%zu\n", i + 1, c.apex_x, c.apex_y, c.apex_height, c.source_layer,
                  c.member_points.size());
  }
  return out;
}

// Member lists are not part of the export; only n_points survives.
inline std::vector<TreeCrown> read_crowns(const fs::path& path) {
  const CsvTable t(read_text(path), path.string());
  const auto cx = t.column("apex_x"), cy = t.column("apex_y"), ch = t.column("apex_height");
  const auto cl = t.column("source_layer");
  std::vector<TreeCrown> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    out[r].apex_x = t.number<double>(r, cx);
    out[r].apex_y = t.number<double>(r, cy);
    out[r].apex_height = t.number<double>(r, ch);
    out[r].source_layer = t.number<int>(r, cl);
  }
  return out;
}

// ---- evaluation ------------------------------------------------------------

inline json scores_json(std::size_t mt, std::size_t oe, std::size_t ce) {
  const auto s = metrics(mt, oe, ce);
  return json{{"mt", mt}, {"oe", oe}, {"ce", ce}, {"recall", s.recall}, {"precision", s.precision},
              {"f_score", s.f_score}};
}

inline json match_json(const MatchResult& r, const ClassSplit& split) {
  json j = scores_json(r.mt, r.oe, r.ce);
  j["excluded_buffer_crowns"] = r.excluded_buffer_crowns;
  j["degenerate_crowns"] = r.degenerate_crowns;
  j["by_class"] = {{"overstory", scores_json(split.overstory.mt, split.overstory.oe, split.overstory.ce)},
                   {"understory", scores_json(split.understory.mt, split.understory.oe, split.understory.ce)}};
  return j;
}

// ---- simulation ------------------------------------------------------------

inline json scan_config_json(const ScanConfig& c) {
  return json{{"pulse_density", c.pulse_density}, {"max_returns", c.max_returns},
              {"scan_half_angle", c.scan_half_angle}, {"attenuation", c.attenuation},
              {"ground_reflect", c.ground_reflect}, {"seed", c.seed}};
}

// Missing keys keep the defaults of `base`.
inline ScanConfig scan_config_from_json(const json& j, ScanConfig base = {}) {
  try {
    base.pulse_density = j.value("pulse_density", base.pulse_density);
    base.max_returns = j.value("max_returns", base.max_returns);
    base.scan_half_angle = j.value("scan_half_angle", base.scan_half_angle);
    base.attenuation = j.value("attenuation", base.attenuation);
    base.ground_reflect = j.value("ground_reflect", base.ground_reflect);
    base.seed = j.value("seed", base.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("scan config: ") + e.what());
  }
  base.validate();
  return base;
}

inline json stand_json(const SyntheticStand& s) {
  json stems = json::array();
  for (const auto& st : s.stems) {
    stems.push_back({{"id", st.id},
                     {"x", st.x},
                     {"y", st.y},
                     {"tier", st.tier},
                     {"height", st.height},
                     {"crown",
                      {{"center_height", st.crown.center_height},
                       {"vertical_semi_axis", st.crown.vertical_semi_axis},
                       {"horizontal_semi_axis", st.crown.horizontal_semi_axis}}}});
  }
  const auto& e = s.extent;
  return json{{"extent", {e.min_x, e.min_y, e.max_x, e.max_y}},
              {"area_m2", s.area},
              {"terrain",
               {{"kind", s.terrain.kind == TerrainKind::Ramp ? "ramp" : "flat"},
                {"base", s.terrain.base},
                {"slope", s.terrain.slope}}},
              {"stems", stems}};
}

inline SyntheticStand stand_from_json(const json& j) {
  try {
    SyntheticStand s;
    const auto& e = j.at("extent");
    s.extent = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<double>()};
    s.area = j.value("area_m2", s.extent.width() * s.extent.height());
    if (j.contains("terrain")) {
      const auto& t = j.at("terrain");
      s.terrain.kind = t.value("kind", std::string("flat")) == "ramp" ? TerrainKind::Ramp : TerrainKind::Flat;
      s.terrain.base = t.value("base", 0.0);
      s.terrain.slope = t.value("slope", 0.0);
    }
    for (const auto& st : j.at("stems")) {
      StandStem x;
      x.id = st.at("id").get<int>();
      x.x = st.at("x").get<double>();
      x.y = st.at("y").get<double>();
      x.tier = st.at("tier").get<int>();
      x.height = st.at("height").get<double>();
      const auto& c = st.at("crown");
      x.crown = {c.at("center_height").get<double>(), c.at("vertical_semi_axis").get<double>(),
                 c.at("horizontal_semi_axis").get<double>()};
      s.stems.push_back(x);
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, std::string("stand file: ") + e.what());
  }
}

inline std::string truth_csv(std::span<const int> stem_id, std::span<const int> tier) {
  std::string out = "point_index,stem_id,tier\n";
  for (std::size_t i = 0; i < stem_id.size(); ++i)
    out += std::to_string(i) + "," + std::to_string(stem_id[i]) + "," + std::to_string(tier[i]) + "\n";
  return out;
}

// ---- plot manifest ---------------------------------------------------------

struct PlotEntry {
  std::string plot_id;
  fs::path cloud;  // point CSV (sidecar metadata next to it)
  fs::path stems;
  PlotGeometry geometry;
};

// {"plots": [{"plot_id", "cloud", "stems", "center": [x, y], "radius", "buffer_width"}]}
// with paths relative to the manifest's directory.
inline std::vector<PlotEntry> read_manifest(const fs::path& path) {
  const json j = read_json(path);
  const fs::path dir = path.parent_path();
  std::vector<PlotEntry> out;
  try {
    for (const auto& p : j.at("plots")) {
      PlotEntry e;
      e.plot_id = p.at("plot_id").get<std::string>();
      e.cloud = dir / p.at("cloud").get<std::string>();
      e.stems = dir / p.at("stems").get<std::string>();
      const auto& c = p.at("center");
      e.geometry.center = {c.at(0).get<double>(), c.at(1).get<double>()};
      e.geometry.radius = p.value("radius", e.geometry.radius);
      e.geometry.buffer_width = p.value("buffer_width", e.geometry.buffer_width);
      e.geometry.validate();
      out.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedInput, path.string() + ": " + e.what());
  }
  if (out.empty()) throw Error(ErrorKind::EmptyInput, path.string() + ": manifest lists no plots");
  return out;
}

inline json manifest_entry(const PlotEntry& e) {
  return json{{"plot_id", e.plot_id},
              {"cloud", e.cloud.generic_string()},
              {"stems", e.stems.generic_string()},
              {"center", {e.geometry.center.x, e.geometry.center.y}},
              {"radius", e.geometry.radius},
              {"buffer_width", e.geometry.buffer_width}};
}

}  // namespace canopy::io
