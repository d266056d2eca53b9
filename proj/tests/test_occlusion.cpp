#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "canopy/occlusion.hpp"
#include "support.hpp"

using namespace canopy;
using namespace canopy::testing;

TEST(LogSeries, KnownTheta) {
  // Independent closed form: -theta^n / (n ln(1 - theta)).
  const double theta = 0.266, l = std::log(1.0 - theta);
  for (unsigned n = 1; n <= 5; ++n)
    EXPECT_NEAR(logseries_pmf(theta, n), -std::pow(theta, n) / (n * l), 1e-15);
  EXPECT_NEAR(logseries_pmf(theta, 1), 0.8601, 5e-4);
  EXPECT_NEAR(logseries_pmf(theta, 2), 0.1144, 5e-4);
  EXPECT_NEAR(logseries_pmf(theta, 3), 0.0203, 5e-4);
}

TEST(LogSeries, Normalization) {
  double s = 0.0;
  for (unsigned n = 1; n <= 200; ++n) s += logseries_pmf(0.5, n);
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(LogSeries, DomainErrors) {
  EXPECT_THROW(logseries_pmf(0.0, 1), Error);
  EXPECT_THROW(logseries_pmf(1.0, 1), Error);
  EXPECT_THROW(logseries_pmf(0.5, 0), Error);
}

TEST(FitTheta, ExactFractions) {
  FractionSample s;
  for (unsigned n = 1; n <= 5; ++n) s.fractions[n - 1] = logseries_pmf(0.3, n);
  const auto m = fit_theta(std::vector{s});
  EXPECT_NEAR(m.theta, 0.3, 1e-4);
  EXPECT_LT(m.fit_mse, 1e-12);
  EXPECT_EQ(m.n_samples, 5u);
}

TEST(FitTheta, NoisyFractionsOverThirtySeeds) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> noise(0.0, 0.02);
    std::vector<FractionSample> samples(23);
    for (auto& s : samples)
      for (unsigned n = 1; n <= 5; ++n) s.fractions[n - 1] = logseries_pmf(0.266, n) + noise(g);
    EXPECT_NEAR(fit_theta(samples).theta, 0.266, 0.02) << "seed " << seed;
  }
}

TEST(FitTheta, MatchesGridSearch) {
  std::vector<FractionSample> samples(3);
  samples[0].fractions = {0.9, 0.08, 0.02, 0, 0};
  samples[1].fractions = {0.8, 0.15, 0.04, 0.01, 0};
  samples[2].fractions = {1.0, 0, 0, 0, 0};
  double best = 0, best_mse = 1e300;
  for (int i = 1; i < 100000; ++i) {
    const double t = i / 100000.0;
    const double e = logseries_mse(t, samples);
    if (e < best_mse) {
      best_mse = e;
      best = t;
    }
  }
  EXPECT_NEAR(fit_theta(samples).theta, best, 2e-5);
  EXPECT_THROW(fit_theta(std::vector<FractionSample>{}), Error);
}

TEST(ObservedFractions, DirectRatio) {
  StratificationResult r;
  r.layers.resize(2);
  r.layers[0].density = 40.0;
  r.layers[1].density = 10.0;
  const auto s = observed_fractions(r, 50.0, "P1");
  EXPECT_DOUBLE_EQ(s.fractions[0], 0.8);
  EXPECT_DOUBLE_EQ(s.fractions[1], 0.2);
  EXPECT_EQ(s.fractions[2], 0.0);
  EXPECT_EQ(s.plot_id, "P1");
  EXPECT_THROW(observed_fractions(r, 0.0), Error);

  StratificationResult one;
  one.layers.resize(1);
  one.layers[0].density = 12.5;
  EXPECT_DOUBLE_EQ(observed_fractions(one, 12.5).fractions[0], 1.0);
}

TEST(ObservedFractions, DecreaseOnLayeredClouds) {
  std::array<double, kFractionDepth> mean{};
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto c = banded_cloud(15.0, {{20.0, 27.0, 30.0}, {8.0, 13.0, 6.0}}, seed);
    const auto s = observed_fractions(stratify(c), point_density(c));
    for (std::size_t k = 0; k < kFractionDepth; ++k) mean[k] += s.fractions[k] / 30.0;
  }
  EXPECT_GT(mean[0], mean[1]);
  EXPECT_GT(mean[1], 0.0);
}

TEST(RequiredPcd, EquationValues) {
  const auto p = logseries_fractions(0.266);
  EXPECT_EQ(required_pcd(4.0, p, 1), 4.0);
  EXPECT_NEAR(required_pcd(4.0, p, 2), 4.0 / (1.0 - p[0]), 1e-12);
  EXPECT_NEAR(required_pcd(4.0, p, 2), 28.61, 0.05);
  EXPECT_NEAR(required_pcd(4.0, p, 3), 156.87, 0.5);
  EXPECT_EQ(required_pcd(7.0, std::vector<double>{}, 1), 7.0);
}

TEST(RequiredPcd, Errors) {
  const std::vector<double> full{0.7, 0.3};
  try {
    required_pcd(4.0, full, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SaturatedOcclusion);
  }
  EXPECT_THROW(required_pcd(0.0, full, 1), Error);
  EXPECT_THROW(required_pcd(4.0, full, 0), Error);
  EXPECT_THROW(required_pcd(4.0, full, 4), Error);
}

TEST(Eupcd, Values) {
  EXPECT_NEAR(eupcd(50.45, 0.8601, 0.1144), 1.29, 0.01);
  EXPECT_NEAR(50.45 * 0.8601, 43.39, 0.01);
  EXPECT_NEAR(50.45 * 0.1144, 5.77, 0.01);
  EXPECT_EQ(eupcd(33.0, 0.0, 0.0), 33.0);
  EXPECT_THROW(eupcd(10.0, 0.7, 0.4), Error);
  EXPECT_THROW(eupcd(10.0, -0.1, 0.4), Error);
}
