#include <gtest/gtest.h>

#include "canopy/canopy.hpp"
#include "support.hpp"

using namespace canopy;
using namespace canopy::testing;

namespace {

std::vector<SweepPlot> small_plot_set(std::size_t n, std::uint64_t seed) {
  PlotSetConfig cfg;
  cfg.plots = n;
  cfg.seed = seed;
  cfg.scan.pulse_density = 20.0;
  std::vector<SweepPlot> out;
  for (auto& p : simulate_plots(cfg)) {
    auto pts = p.cloud.points();
    for (auto& q : pts) q.height_above_ground = q.z;  // flat terrain at zero
    out.push_back({p.plot_id, PointCloud(pts, p.cloud.extent(), p.cloud.area()), p.stems, p.geometry});
  }
  return out;
}

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(Csv, ParsesAndReportsLines) {
  const io::CsvTable t("a,b\n1,2.5\n\n3,x\n", "mem");
  ASSERT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.number<int>(0, t.column("a")), 1);
  EXPECT_EQ(t.number<double>(0, t.column("b")), 2.5);
  try {
    t.number<double>(1, t.column("b"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MalformedInput);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
  EXPECT_EQ(kind_of([&] { t.column("c"); }), ErrorKind::MalformedInput);
  EXPECT_EQ(kind_of([] { io::CsvTable("a,b\n1\n", "mem"); }), ErrorKind::MalformedInput);
  EXPECT_EQ(kind_of([] { io::CsvTable("", "mem"); }), ErrorKind::MalformedInput);
}

TEST(CloudIo, RoundTripWithMetadata) {
  TempDir dir("cloud");
  std::vector<LidarPoint> pts{pt(1.25, 2.5, 100.125, 7), pt(3, 4, 99.5, 8, true)};
  pts[0].returns_of_pulse = 2;
  auto second = pt(1.25, 2.5, 98.0, 7);
  second.return_number = 2;
  second.returns_of_pulse = 2;
  pts.push_back(second);
  const PointCloud c(pts, {0, 0, 10, 10}, 78.5);
  io::write_cloud(dir / "a.csv", c, {{"seed", 3}});
  const auto back = io::read_cloud(dir / "a.csv");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.area(), 78.5);
  EXPECT_EQ(back.extent().max_x, 10.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.points()[i].x, pts[i].x);
    EXPECT_EQ(back.points()[i].z, pts[i].z);
    EXPECT_EQ(back.points()[i].pulse_id, pts[i].pulse_id);
    EXPECT_EQ(back.points()[i].is_ground, pts[i].is_ground);
    EXPECT_EQ(back.points()[i].return_number, pts[i].return_number);
  }
  EXPECT_EQ(io::read_json(io::meta_path_for(dir / "a.csv")).at("seed"), 3);
}

TEST(CloudIo, FallsBackToBoundingBoxAndRejectsBadRows) {
  TempDir dir("cloud2");
  io::write_text(dir / "b.csv", "x,y,z,return_number,returns_of_pulse,pulse_id,is_ground\n0,0,1,1,1,0,0\n4,2,1,1,1,1,0\n");
  const auto c = io::read_cloud(dir / "b.csv");
  EXPECT_EQ(c.area(), 8.0);
  io::write_text(dir / "c.csv", "x,y,z,return_number,returns_of_pulse,pulse_id,is_ground\n0,0,1,2,1,0,0\n");
  EXPECT_EQ(kind_of([&] { io::read_cloud(dir / "c.csv"); }), ErrorKind::MalformedInput);
  io::write_text(dir / "d.csv", "x,y,z,return_number,returns_of_pulse,pulse_id,is_ground\n");
  EXPECT_EQ(kind_of([&] { io::read_cloud(dir / "d.csv"); }), ErrorKind::EmptyInput);
  EXPECT_EQ(kind_of([&] { io::read_cloud(dir / "missing.csv"); }), ErrorKind::Io);
}

TEST(TablesIo, FractionsStemsCrownsModel) {
  TempDir dir("tables");
  std::vector<FractionSample> f(2);
  f[0].plot_id = "P01";
  f[0].fractions = {0.8, 0.15, 0.05, 0, 0};
  f[1].plot_id = "P02";
  f[1].fractions = {1, 0, 0, 0, 0};
  io::write_text(dir / "f.csv", io::fractions_csv(f));
  const auto fb = io::read_fractions(dir / "f.csv");
  ASSERT_EQ(fb.size(), 2u);
  EXPECT_EQ(fb[0].plot_id, "P01");
  EXPECT_NEAR(fb[0].fractions[1], 0.15, 1e-9);

  FieldStem s;
  s.plot_id = "P01";
  s.x = 1.5;
  s.y = -2.25;
  s.height = 21.4;
  s.dbh = 30.2;
  s.crown_class = CrownClass::CoDominant;
  s.species = "Quercus alba";
  io::write_text(dir / "s.csv", io::stems_csv(std::vector{s}));
  const auto sb = io::read_stems(dir / "s.csv");
  ASSERT_EQ(sb.size(), 1u);
  EXPECT_EQ(sb[0].crown_class, CrownClass::CoDominant);
  EXPECT_EQ(sb[0].species, "Quercus alba");
  EXPECT_DOUBLE_EQ(sb[0].height, 21.4);

  TreeCrown c;
  c.apex_x = 3;
  c.apex_y = 4;
  c.apex_height = 17.5;
  c.source_layer = 2;
  c.member_points = {1, 2, 3};
  io::write_text(dir / "c.csv", io::crowns_csv(std::vector{c}));
  const auto cb = io::read_crowns(dir / "c.csv");
  ASSERT_EQ(cb.size(), 1u);
  EXPECT_EQ(cb[0].source_layer, 2);
  EXPECT_EQ(cb[0].apex_height, 17.5);

  io::write_json(dir / "m.json", io::model_json({0.266, 1e-4, 115}));
  EXPECT_EQ(io::read_model(dir / "m.json").theta, 0.266);
  io::write_text(dir / "bad.json", "{not json");
  EXPECT_EQ(kind_of([&] { io::read_json(dir / "bad.json"); }), ErrorKind::MalformedInput);
}

TEST(ManifestIo, ResolvesRelativePaths) {
  TempDir dir("manifest");
  io::PlotEntry e{"P07", "P07.csv", "P07.stems.csv", {}};
  e.geometry.center = {2, 3};
  io::write_json(dir / "sub/manifest.json", {{"plots", {io::manifest_entry(e)}}});
  const auto m = io::read_manifest(dir / "sub/manifest.json");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].cloud, dir / "sub/P07.csv");
  EXPECT_EQ(m[0].geometry.center.y, 3.0);
  EXPECT_NEAR(m[0].geometry.radius, 11.2838, 1e-4);
  io::write_json(dir / "empty.json", {{"plots", io::json::array()}});
  EXPECT_EQ(kind_of([&] { io::read_manifest(dir / "empty.json"); }), ErrorKind::EmptyInput);
}

TEST(StandIo, RoundTrip) {
  const auto s = generate_stand({0, 0, 20, 20}, {2, 2, 2}, 5, {TerrainKind::Ramp, 100.0, 0.1});
  const auto back = io::stand_from_json(io::stand_json(s));
  ASSERT_EQ(back.stems.size(), s.stems.size());
  EXPECT_EQ(back.stems[3].crown.horizontal_semi_axis, s.stems[3].crown.horizontal_semi_axis);
  EXPECT_EQ(back.terrain.kind, TerrainKind::Ramp);
  EXPECT_EQ(back.terrain.elevation(5, 5), s.terrain.elevation(5, 5));
  ScanConfig c;
  c.attenuation = 0.7;
  EXPECT_EQ(io::scan_config_from_json(io::scan_config_json(c)).attenuation, 0.7);
}

TEST(Sweep, IdentityTargetMatchesUndecimatedRun) {
  const auto plots = small_plot_set(1, 3);
  const double source = point_density(plots[0].cloud);
  SweepConfig cfg;
  cfg.pcd_targets = {source};
  cfg.repetitions = 1;
  const auto r = density_sweep(plots, cfg);
  ASSERT_EQ(r.cells.size(), 1u);
  const auto crowns = segment_cloud(plots[0].cloud);
  const auto m = match_trees(crowns, plots[0].stems, plots[0].geometry);
  EXPECT_EQ(r.cells[0].mt, m.mt);
  EXPECT_EQ(r.cells[0].oe, m.oe);
  EXPECT_EQ(r.cells[0].ce, m.ce);
  EXPECT_DOUBLE_EQ(r.cells[0].achieved_pcd, source);
  const auto rows = aggregate_sweep(r.cells, false);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].crown_class, "all");
}

TEST(Sweep, DeterministicAcrossWorkersAndRoundTrips) {
  const auto plots = small_plot_set(3, 9);
  SweepConfig cfg;
  cfg.pcd_targets = {1, 4, 10};
  cfg.repetitions = 2;
  const auto a = density_sweep(plots, cfg, BaselineSegmenter{}, 1);
  const auto b = density_sweep(plots, cfg, BaselineSegmenter{}, 3);
  EXPECT_EQ(sweep_cells_csv(a.cells), sweep_cells_csv(b.cells));
  ASSERT_EQ(a.cells.size(), 18u);
  for (std::size_t i = 1; i < a.cells.size(); ++i) {
    const auto& p = a.cells[i - 1];
    const auto& q = a.cells[i];
    EXPECT_TRUE(std::tie(p.target_index, p.repetition, p.plot_id) < std::tie(q.target_index, q.repetition, q.plot_id));
  }
  TempDir dir("sweep");
  io::write_text(dir / "cells.csv", sweep_cells_csv(a.cells));
  const auto back = read_sweep_cells(dir / "cells.csv");
  EXPECT_EQ(sweep_cells_csv(back), sweep_cells_csv(a.cells));
  EXPECT_NE(sweep_cell_seed(1, 0, 0, "P01"), sweep_cell_seed(1, 0, 1, "P01"));
  EXPECT_NE(sweep_cell_seed(1, 0, 0, "P01"), sweep_cell_seed(1, 0, 0, "P02"));
}

TEST(Sweep, ReportRowAccounting) {
  std::vector<SweepCell> cells;
  const SweepConfig cfg;
  for (std::size_t t = 0; t < cfg.pcd_targets.size(); ++t) {
    SweepCell c;
    c.target_index = t;
    c.target_pcd = cfg.pcd_targets[t];
    c.plot_id = "P01";
    c.mt = 3;
    c.oe = 1;
    c.overstory = {2, 0, 0};
    c.understory = {1, 1, 0};
    cells.push_back(c);
  }
  auto rows = aggregate_sweep(cells, true);
  EXPECT_EQ(rows.size(), 36u);
  std::size_t split_rows = 0;
  for (const auto& r : rows) split_rows += r.crown_class != "all";
  EXPECT_EQ(split_rows, 24u);
  EXPECT_DOUBLE_EQ(rows[1].recall.mean, 1.0);
  EXPECT_DOUBLE_EQ(rows[2].recall.mean, 0.5);

  // No understory stems: that class drops out, the aggregate stays.
  for (auto& c : cells) c.understory = {};
  rows = aggregate_sweep(cells, true);
  for (const auto& r : rows)
    if (r.crown_class == "understory") {
      EXPECT_EQ(r.cells, 0u);
    }
  cells[0].status = "algorithm-divergence";
  rows = aggregate_sweep(cells, true);
  EXPECT_EQ(rows[0].failed, 1u);
  EXPECT_EQ(rows[0].cells, 0u);
}

TEST(Sweep, ConfigValidation) {
  SweepConfig c;
  c.pcd_targets = {4, 2};
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
  c.pcd_targets = {0, 2};
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
  c.pcd_targets = {1};
  c.repetitions = 0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
}

TEST(Occlusion, SummaryTable) {
  const auto s = summarize_occlusion({0.266, 0, 0}, 50.45);
  EXPECT_EQ(s.required[0], 4.0);
  EXPECT_NEAR(s.required[1], 28.61, 0.05);
  EXPECT_NEAR(s.required[2], 156.87, 0.5);
  EXPECT_NEAR(s.eupcd, 1.29, 0.01);
  const auto csv = required_density_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,required_pcd,paper_reported");
  EXPECT_NE(csv.find(",30.07\n"), std::string::npos);
  EXPECT_NE(csv.find(",169.57\n"), std::string::npos);
}
