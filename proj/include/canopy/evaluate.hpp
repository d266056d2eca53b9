#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "canopy/core.hpp"
#include "canopy/segment.hpp"

namespace canopy {

inline constexpr double kMaxRelativeHeightDifference = 0.30;
inline constexpr double kMaxLeanDegrees = 15.0;

enum class CrownClass { Dominant, CoDominant, Intermediate, Overtopped, Dead };

inline std::string_view to_string(CrownClass c) {
  switch (c) {
    case CrownClass::Dominant: return "dominant";
    case CrownClass::CoDominant: return "co-dominant";
    case CrownClass::Intermediate: return "intermediate";
    case CrownClass::Overtopped: return "overtopped";
    case CrownClass::Dead: return "dead";
  }
  return "dead";
}

inline CrownClass parse_crown_class(std::string_view s) {
  if (s == "dominant") return CrownClass::Dominant;
  if (s == "co-dominant" || s == "codominant") return CrownClass::CoDominant;
  if (s == "intermediate") return CrownClass::Intermediate;
  if (s == "overtopped") return CrownClass::Overtopped;
  if (s == "dead") return CrownClass::Dead;
  throw Error(ErrorKind::MalformedInput, "unknown crown class '" + std::string(s) + "'");
}

inline bool is_overstory(CrownClass c) { return c == CrownClass::Dominant || c == CrownClass::CoDominant; }
inline bool is_understory(CrownClass c) { return c == CrownClass::Intermediate || c == CrownClass::Overtopped; }

struct FieldStem {
  std::string plot_id;
  double x = 0.0;
  double y = 0.0;
  double height = 0.0;  // m
  double dbh = 0.0;     // cm
  CrownClass crown_class = CrownClass::Intermediate;
  std::string species;

  Point2 xy() const { return {x, y}; }
};

// Eligibility follows the two field-matching constraints (relative height
// difference under 30 %, lean from nadir under 15 degrees, both strict). The
// score adds the normalized slack of each constraint, giving a value in
// (0, 2]; a perfect pair scores 2.
inline std::optional<double> pair_score(const TreeCrown& crown, const FieldStem& stem) {
  if (!(stem.height > 0.0)) throw Error(ErrorKind::InvalidArgument, "stem height must be positive");
  if (!(crown.apex_height > 0.0)) return std::nullopt;
  const double rel = std::abs(crown.apex_height - stem.height) / stem.height;
  if (!(rel < kMaxRelativeHeightDifference)) return std::nullopt;
  const double lean =
      std::atan(planar_distance(crown.apex(), stem.xy()) / crown.apex_height) * 180.0 / std::numbers::pi;
  if (!(lean < kMaxLeanDegrees)) return std::nullopt;
  return (1.0 - rel / kMaxRelativeHeightDifference) + (1.0 - lean / kMaxLeanDegrees);
}

// Rectangular score matrix; absent cells are ineligible pairs.
class ScoreMatrix {
 public:
  ScoreMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), cells_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::optional<double>& at(std::size_t r, std::size_t c) { return cells_[r * cols_ + c]; }
  const std::optional<double>& at(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c]; }

 private:
  std::size_t rows_, cols_;
  std::vector<std::optional<double>> cells_;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, col)
  double total = 0.0;
};

// Maximum-score partial assignment. The matrix is squared with zero-cost
// dummies and ineligible cells also cost zero, so leaving a row or column
// unmatched is always allowed; a Kuhn-Munkres pass with potentials then
// minimizes the negated scores in O(n^3).
inline Assignment hungarian_assign(const ScoreMatrix& scores) {
  const std::size_t n = std::max(scores.rows(), scores.cols());
  Assignment out;
  if (n == 0) return out;
  auto cost = [&](std::size_t i, std::size_t j) -> double {
    if (i >= scores.rows() || j >= scores.cols()) return 0.0;
    const auto& s = scores.at(i, j);
    return s ? -std::max(*s, 0.0) : 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j] - 1, c = j - 1;
    if (i < scores.rows() && c < scores.cols() && scores.at(i, c)) out.pairs.emplace_back(i, c);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (const auto& [i, c] : out.pairs) out.total += *scores.at(i, c);
  return out;
}

struct MatchedPair {
  std::size_t crown = 0;
  std::size_t stem = 0;
  double score = 0.0;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;
  std::size_t mt = 0;
  std::size_t oe = 0;
  std::size_t ce = 0;
  std::size_t excluded_buffer_crowns = 0;
  std::size_t outside_crowns = 0;    // unmatched, beyond plot and buffer
  std::size_t degenerate_crowns = 0; // apex height <= 0, never eligible
  std::vector<char> stem_matched;
  std::vector<char> crown_matched;
  std::vector<char> crown_in_plot;
};

struct MatchOptions {
  bool include_dead = true;
};

// Scores every crown/stem pair, keeps the optimal assignment, and counts
// omissions (unmatched stems) and commissions (unmatched crowns whose apex is
// inside the plot proper; buffer crowns are excluded).
inline MatchResult match_trees(std::span<const TreeCrown> crowns, std::span<const FieldStem> stems,
                               const PlotGeometry& plot, const MatchOptions& options = {}) {
  plot.validate();
  MatchResult r;
  r.stem_matched.assign(stems.size(), 0);
  r.crown_matched.assign(crowns.size(), 0);
  r.crown_in_plot.assign(crowns.size(), 0);
  std::vector<char> active(stems.size(), 1);
  for (std::size_t s = 0; s < stems.size(); ++s) {
    if (planar_distance(stems[s].xy(), plot.center) > plot.radius + 1e-9) {
      throw Error(ErrorKind::InvalidArgument, "stem " + std::to_string(s) + " lies outside the plot radius");
    }
    if (!options.include_dead && stems[s].crown_class == CrownClass::Dead) active[s] = 0;
  }

  ScoreMatrix m(crowns.size(), stems.size());
  for (std::size_t c = 0; c < crowns.size(); ++c) {
    if (!(crowns[c].apex_height > 0.0)) ++r.degenerate_crowns;
    for (std::size_t s = 0; s < stems.size(); ++s)
      if (active[s]) m.at(c, s) = pair_score(crowns[c], stems[s]);
  }
  const auto assignment = hungarian_assign(m);
  for (const auto& [c, s] : assignment.pairs) {
    r.pairs.push_back({c, s, *m.at(c, s)});
    r.crown_matched[c] = 1;
    r.stem_matched[s] = 1;
  }
  r.mt = r.pairs.size();
  for (std::size_t s = 0; s < stems.size(); ++s)
    if (active[s] && !r.stem_matched[s]) ++r.oe;
  for (std::size_t c = 0; c < crowns.size(); ++c) {
    r.crown_in_plot[c] = plot.in_plot(crowns[c].apex()) ? 1 : 0;
    if (r.crown_matched[c]) continue;
    if (r.crown_in_plot[c]) {
      ++r.ce;
    } else if (plot.in_buffer(crowns[c].apex())) {
      ++r.excluded_buffer_crowns;
    } else {
      ++r.outside_crowns;
    }
  }
  return r;
}

struct AccuracyScores {
  double recall = 0.0;
  double precision = 0.0;
  double f_score = 0.0;
};

inline AccuracyScores metrics(std::size_t mt, std::size_t oe, std::size_t ce) {
  AccuracyScores a;
  const auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  a.recall = ratio(static_cast<double>(mt), static_cast<double>(mt + oe));
  a.precision = ratio(static_cast<double>(mt), static_cast<double>(mt + ce));
  a.f_score = ratio(2.0 * a.recall * a.precision, a.recall + a.precision);
  return a;
}

struct ClassCounts {
  std::size_t mt = 0;
  std::size_t oe = 0;
  std::size_t ce = 0;
  AccuracyScores scores() const { return metrics(mt, oe, ce); }
};

struct ClassSplit {
  ClassCounts overstory;
  ClassCounts understory;
};

// Splits a union match by stem crown class. Matches and omissions follow the
// stem's class; commissions follow the crown's source layer (top layer counts
// as overstory, deeper layers as understory). Dead stems fall in neither.
inline ClassSplit split_by_class(const MatchResult& r, std::span<const TreeCrown> crowns,
                                 std::span<const FieldStem> stems, const MatchOptions& options = {}) {
  ClassSplit out;
  auto bucket = [&](CrownClass c) -> ClassCounts* {
    if (is_overstory(c)) return &out.overstory;
    if (is_understory(c)) return &out.understory;
    return nullptr;
  };
  for (const auto& p : r.pairs)
    if (auto* b = bucket(stems[p.stem].crown_class)) ++b->mt;
  for (std::size_t s = 0; s < stems.size(); ++s) {
    if (r.stem_matched[s]) continue;
    if (!options.include_dead && stems[s].crown_class == CrownClass::Dead) continue;
    if (auto* b = bucket(stems[s].crown_class)) ++b->oe;
  }
  for (std::size_t c = 0; c < crowns.size(); ++c) {
    if (r.crown_matched[c] || !r.crown_in_plot[c]) continue;
    ++(crowns[c].source_layer <= 1 ? out.overstory : out.understory).ce;
  }
  return out;
}

}  // namespace canopy
