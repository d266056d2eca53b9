#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "canopy/error.hpp"
#include "canopy/stratify.hpp"

namespace canopy {

inline constexpr std::size_t kFractionDepth = 5;

struct FractionSample {
  std::string plot_id;
  // p_1..p_5, zero for layers the plot does not have.
  std::array<double, kFractionDepth> fractions{};
};

struct LogSeriesModel {
  double theta = 0.0;
  double fit_mse = 0.0;
  std::size_t n_samples = 0;  // (n, p_n) pairs in the fit
};

// Logarithmic series probability theta^n / (-ln(1 - theta) * n).
inline double logseries_pmf(double theta, unsigned n) {
  if (!(theta > 0.0 && theta < 1.0)) throw Error(ErrorKind::InvalidArgument, "theta must lie in (0, 1)");
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "logarithmic series support starts at n = 1");
  return std::pow(theta, static_cast<double>(n)) / (-std::log1p(-theta) * static_cast<double>(n));
}

inline std::vector<double> logseries_fractions(double theta, unsigned depth = kFractionDepth) {
  std::vector<double> p(depth);
  for (unsigned n = 1; n <= depth; ++n) p[n - 1] = logseries_pmf(theta, n);
  return p;
}

// Pooled mean squared error over every (n, p_n) pair of every sample.
inline double logseries_mse(double theta, std::span<const FractionSample> samples) {
  std::array<double, kFractionDepth> model{};
  for (unsigned n = 1; n <= kFractionDepth; ++n) model[n - 1] = logseries_pmf(theta, n);
  double sse = 0.0;
  for (const auto& s : samples) {
    for (std::size_t k = 0; k < kFractionDepth; ++k) {
      const double r = s.fractions[k] - model[k];
      sse += r * r;
    }
  }
  return sse / static_cast<double>(samples.size() * kFractionDepth);
}

// Least-squares theta by golden-section search over (1e-6, 1 - 1e-6).
inline LogSeriesModel fit_theta(std::span<const FractionSample> samples) {
  if (samples.empty()) throw Error(ErrorKind::EmptyInput, "no fraction samples to fit");
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 1e-6, b = 1.0 - 1e-6;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = logseries_mse(c, samples);
  double fd = logseries_mse(d, samples);
  while (b - a > 1e-7) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = logseries_mse(c, samples);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = logseries_mse(d, samples);
    }
  }
  LogSeriesModel m;
  m.theta = 0.5 * (a + b);
  m.fit_mse = logseries_mse(m.theta, samples);
  m.n_samples = samples.size() * kFractionDepth;
  return m;
}

// p_n = d_n / PCD for the top five layers.
inline FractionSample observed_fractions(const StratificationResult& result, double pcd,
                                         std::string plot_id = {}) {
  if (!(pcd > 0.0)) throw Error(ErrorKind::InvalidArgument, "cloud density must be positive");
  FractionSample s;
  s.plot_id = std::move(plot_id);
  for (std::size_t n = 0; n < std::min(kFractionDepth, result.layers.size()); ++n) {
    s.fractions[n] = result.layers[n].density / pcd;
  }
  return s;
}

// Density needed for layer n to receive pcd_min once the n-1 layers above it
// are removed: pcd_min / (1 - (p_1 + ... + p_{n-1})).
inline double required_pcd(double pcd_min, std::span<const double> fractions, unsigned n) {
  if (!(pcd_min > 0.0)) throw Error(ErrorKind::InvalidArgument, "pcd_min must be positive");
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "layer ordinal starts at 1");
  if (n - 1 > fractions.size()) {
    throw Error(ErrorKind::InvalidArgument, "not enough layer fractions for layer " + std::to_string(n));
  }
  double above = 0.0;
  for (unsigned k = 0; k + 1 < n; ++k) above += fractions[k];
  const double remaining = 1.0 - above;
  if (!(remaining > 0.0)) {
    throw Error(ErrorKind::SaturatedOcclusion,
                "layers above layer " + std::to_string(n) + " absorb every return");
  }
  return pcd_min / remaining;
}

// Density left for the understory once the two top layers are removed.
inline double eupcd(double pcd, double p1, double p2) {
  if (p1 < 0.0 || p2 < 0.0 || p1 + p2 > 1.0) {
    throw Error(ErrorKind::InvalidArgument, "top-layer fractions must be non-negative and sum to <= 1");
  }
  return pcd * (1.0 - p1 - p2);
}

}  // namespace canopy
