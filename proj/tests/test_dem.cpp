#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "canopy/dem.hpp"
#include "support.hpp"

using namespace canopy;
using canopy::testing::pt;

namespace {

std::vector<LidarPoint> ground_grid(int n, double res, auto&& z) {
  std::vector<LidarPoint> g;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const double x = (c + 0.5) * res, y = (r + 0.5) * res;
      g.push_back(pt(x, y, z(x, y), static_cast<std::uint64_t>(g.size()), true));
    }
  return g;
}

}  // namespace

TEST(BuildDem, ConstantField) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<LidarPoint> g;
  for (int i = 0; i < 60; ++i) g.push_back(pt(u(rng), u(rng), 100.0, static_cast<std::uint64_t>(i), true));
  const Dem dem = build_dem(g, 1.0, Extent{0, 0, 10, 10});
  for (double e : dem.elevations()) EXPECT_DOUBLE_EQ(e, 100.0);
}

TEST(BuildDem, OnePointPerCellAndCellMeans) {
  auto g = ground_grid(4, 1.0, [](double x, double y) { return x * 3 + y; });
  const Dem dem = build_dem(g, 1.0, Extent{0, 0, 4, 4});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(dem.at(c, r), (c + 0.5) * 3 + (r + 0.5));
  g.push_back(pt(0.2, 0.2, 10.0, 99, true));
  const Dem dem2 = build_dem(g, 1.0, Extent{0, 0, 4, 4});
  EXPECT_DOUBLE_EQ(dem2.at(0, 0), (2.0 + 10.0) / 2.0);
}

TEST(BuildDem, VoidFillMatchesExhaustiveNearestScan) {
  // 3x3 raster, centre void; neighbours carry 10 and 12 and equal distance ties
  // go to the smaller row-major index.
  std::vector<LidarPoint> g;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      if (r == 1 && c == 1) continue;
      g.push_back(pt(c + 0.5, r + 0.5, (r * 3 + c) % 2 ? 12.0 : 10.0, static_cast<std::uint64_t>(g.size()), true));
    }
  const Dem dem = build_dem(g, 1.0, Extent{0, 0, 3, 3});
  EXPECT_TRUE(dem.was_void(1, 1));
  // Nearest filled cells to the centre are indices 1, 3, 5, 7 (distance 1);
  // the smallest is 1, which holds 12.
  EXPECT_DOUBLE_EQ(dem.at(1, 1), 12.0);

  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> keep(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LidarPoint> sparse;
    std::vector<int> filled(64, 0);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c)
        if (keep(rng) == 0) {
          sparse.push_back(pt(c + 0.5, r + 0.5, r * 8 + c, sparse.size(), true));
          filled[r * 8 + c] = 1;
        }
    if (sparse.empty()) continue;
    const Dem d = build_dem(sparse, 1.0, Extent{0, 0, 8, 8});
    for (int idx = 0; idx < 64; ++idx) {
      if (filled[idx]) continue;
      int best = -1;
      double bd = 1e300;
      for (int j = 0; j < 64; ++j) {
        if (!filled[j]) continue;
        const double dd = std::hypot(j % 8 - idx % 8, j / 8 - idx / 8);
        if (dd < bd) {
          bd = dd;
          best = j;
        }
      }
      EXPECT_DOUBLE_EQ(d.at(idx % 8, idx / 8), best);
    }
  }
}

TEST(BuildDem, NoGroundPoints) {
  try {
    build_dem(std::vector<LidarPoint>{}, 1.0, Extent{0, 0, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
}

TEST(BuildDem, ElevationsStayWithinGroundRange) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 30.0), z(50.0, 60.0);
  std::vector<LidarPoint> g;
  for (int i = 0; i < 200; ++i) g.push_back(pt(u(rng), u(rng), z(rng), static_cast<std::uint64_t>(i), true));
  const Dem dem = build_dem(g, 1.0, Extent{0, 0, 30, 30});
  for (std::int64_t r = 0; r < dem.rows(); ++r)
    for (std::int64_t c = 0; c < dem.cols(); ++c) {
      EXPECT_GE(dem.at(c, r), 49.0);
      EXPECT_LE(dem.at(c, r), 61.0);
    }
}

TEST(Normalize, FlatConstantSubtraction) {
  auto g = ground_grid(5, 1.0, [](double, double) { return 100.0; });
  auto pts = g;
  pts.push_back(pt(2.2, 3.1, 108.3, 1000));
  PointCloud c(pts, {0, 0, 5, 5}, 25.0);
  const auto n = normalize_heights(c, build_dem(c, 1.0));
  EXPECT_NEAR(*n.cloud.points().back().height_above_ground, 8.3, 1e-12);
  EXPECT_EQ(n.clamped_below_ground, 0u);
}

TEST(Normalize, CellCenterIsExact) {
  auto g = ground_grid(4, 1.0, [](double x, double y) { return std::sin(x) + y * y; });
  const Dem dem = build_dem(g, 1.0, Extent{0, 0, 4, 4});
  EXPECT_DOUBLE_EQ(dem.elevation_at(1.5, 2.5), dem.at(1, 2));
}

TEST(Normalize, RampIsReproducedExactly) {
  auto g = ground_grid(6, 1.0, [](double x, double) { return x; });
  auto pts = g;
  pts.push_back(pt(2.5, 1.7, 12.5, 500));
  pts.push_back(pt(0.1, 5.9, 4.1, 501));  // border half-cell
  PointCloud c(pts, {0, 0, 6, 6}, 36.0);
  const Dem dem = build_dem(c, 1.0);
  const auto n = normalize_heights(c, dem);
  EXPECT_NEAR(*n.cloud.points()[pts.size() - 2].height_above_ground, 10.0, 1e-9);
  EXPECT_NEAR(*n.cloud.points().back().height_above_ground, 4.0, 1e-9);
  // Any affine field, anywhere in coverage.
  auto g2 = ground_grid(7, 0.5, [](double x, double y) { return 3.0 - 0.4 * x + 1.7 * y; });
  const Dem affine = build_dem(g2, 0.5, Extent{0, 0, 3.5, 3.5});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 3.5);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng), y = u(rng);
    EXPECT_NEAR(affine.elevation_at(x, y), 3.0 - 0.4 * x + 1.7 * y, 1e-9);
  }
}

TEST(Normalize, IdempotentAndClamped) {
  auto g = ground_grid(3, 1.0, [](double, double) { return 5.0; });
  auto pts = g;
  pts.push_back(pt(1.0, 1.0, 4.0, 77));
  PointCloud c(pts, {0, 0, 3, 3}, 9.0);
  const Dem dem = build_dem(c, 1.0);
  const auto once = normalize_heights(c, dem);
  const auto twice = normalize_heights(once.cloud, dem);
  EXPECT_EQ(once.clamped_below_ground, 1u);
  EXPECT_DOUBLE_EQ(*once.cloud.points().back().height_above_ground, 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i)
    EXPECT_EQ(once.cloud.points()[i].height_above_ground, twice.cloud.points()[i].height_above_ground);
}

TEST(Normalize, OutsideCoverage) {
  auto g = ground_grid(2, 1.0, [](double, double) { return 0.0; });
  const Dem dem = build_dem(g, 1.0, Extent{0, 0, 2, 2});
  PointCloud far({pt(5, 5, 1)}, {0, 0, 6, 6}, 36.0);
  try {
    normalize_heights(far, dem);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfCoverage);
    EXPECT_NE(std::string(e.what()).find("(5, 5)"), std::string::npos);
  }
}

TEST(AsciiGrid, RoundTrip) {
  auto g = ground_grid(3, 2.0, [](double x, double y) { return x + 10 * y; });
  const Dem dem = build_dem(g, 2.0, Extent{0, 0, 6, 6});
  std::stringstream ss;
  write_ascii_grid(ss, dem);
  std::string first;
  std::getline(ss, first);
  EXPECT_EQ(first, "ncols 3");
  ss.seekg(0);
  const Dem back = read_ascii_grid(ss);
  ASSERT_EQ(back.cols(), 3);
  ASSERT_EQ(back.rows(), 3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(back.at(c, r), dem.at(c, r), 1e-3);
  std::stringstream bad("ncols 2\nnrows 2\n");
  EXPECT_THROW(read_ascii_grid(bad), Error);
}
