#pragma once

// Pearson correlation on the x100 reporting scale, relative improvement, and
// significance tests for comparing two systems' correlations with the same
// gold labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "qeforge/error.hpp"
#include "qeforge/random.hpp"

namespace qeforge::metrics {

struct PearsonResult {
  double r = 0.0;
  double rescaled = 0.0;  // 100 * r
  std::size_t n = 0;
};

inline PearsonResult pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw ValidationError("pearson: length mismatch " + std::to_string(xs.size()) + " vs " +
                          std::to_string(ys.size()));
  if (xs.size() < 2) throw ValidationError("pearson: need at least 2 samples");
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(xs) || constant(ys)) throw Error("undefined correlation: constant input");

  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error("undefined correlation: constant input");
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return {r, 100.0 * r, xs.size()};
}

inline PearsonResult pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson(std::span<const double>(xs), std::span<const double>(ys));
}

/// Relative improvement of `best` over `baseline`, in percent.
inline double increase_pct(double best, double baseline) {
  if (baseline == 0.0) throw ValidationError("increase_pct: zero baseline");
  return 100.0 * (best - baseline) / baseline;
}

/// Round half to even at `digits` decimals. Values within 1e-9 (relative to the
/// scaled magnitude) of a tie are treated as ties, so 4.485 -> 4.48.
inline double round_half_even(double value, int digits = 2) {
  const double scale = std::pow(10.0, digits);
  const double scaled = value * scale;
  const double floor_v = std::floor(scaled);
  const double frac = scaled - floor_v;
  const double tol = 1e-9 * std::max(1.0, std::abs(scaled));
  double rounded;
  if (std::abs(frac - 0.5) <= tol)
    rounded = std::fmod(floor_v, 2.0) == 0.0 ? floor_v : floor_v + 1.0;
  else
    rounded = std::round(scaled);
  return rounded / scale;
}

struct WilliamsResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Williams' test for r12 vs r13, both correlations with variable 1, given the
/// correlation r23 between the two competitors. Two-tailed, n - 3 dof.
inline WilliamsResult williams_test(double r12, double r13, double r23, std::size_t n) {
  if (n < 4) throw ValidationError("williams_test: need n >= 4");
  for (double r : {r12, r13, r23})
    if (!(r >= -1.0 && r <= 1.0)) throw ValidationError("williams_test: correlation outside [-1,1]");
  const double df = static_cast<double>(n) - 3.0;
  if (r12 == r13) return {0.0, df, 1.0};

  const double det = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23;
  if (!(det > 0.0)) throw Error("williams_test: degenerate correlation matrix");
  const double nm1 = static_cast<double>(n) - 1.0;
  const double mean_r = 0.5 * (r12 + r13);
  const double denom =
      2.0 * (nm1 / (static_cast<double>(n) - 3.0)) * det + mean_r * mean_r * std::pow(1.0 - r23, 3);
  const double t = (r12 - r13) * std::sqrt(nm1 * (1.0 + r23)) / std::sqrt(denom);
  const boost::math::students_t dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, df, std::min(1.0, p)};
}

/// Paired bootstrap over samples: two-tailed p from how often the resampled
/// correlation difference lands on either side of zero.
inline double paired_bootstrap(std::span<const double> gold, std::span<const double> a,
                               std::span<const double> b, std::size_t resamples = 1000,
                               std::uint64_t seed = 8) {
  if (gold.size() != a.size() || gold.size() != b.size())
    throw ValidationError("paired_bootstrap: length mismatch");
  Rng rng(seed);
  std::vector<double> g(gold.size()), pa(gold.size()), pb(gold.size());
  std::size_t not_above = 0, not_below = 0;
  for (std::size_t k = 0; k < resamples; ++k) {
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const auto j = rng.below(gold.size());
      g[i] = gold[j];
      pa[i] = a[j];
      pb[i] = b[j];
    }
    double diff = 0.0;
    try {
      diff = pearson(g, pa).r - pearson(g, pb).r;
    } catch (const Error&) {
      diff = 0.0;  // degenerate resample counts as a tie
    }
    if (diff <= 0.0) ++not_above;
    if (diff >= 0.0) ++not_below;
  }
  const double tail = static_cast<double>(std::min(not_above, not_below)) / resamples;
  return std::min(1.0, 2.0 * tail);
}

enum class SignificanceTest { williams, bootstrap };

struct NamedPredictions {
  std::string name;
  std::vector<double> values;
};

struct SignificanceCell {
  std::size_t row = 0;  // index of the first system
  std::size_t col = 0;  // index of the second system, col > row
  double p = 1.0;
  bool significant = false;

  char mark() const { return significant ? 'Y' : 'N'; }
};

/// Upper-triangular grid of pairwise tests between systems.
struct SignificanceGrid {
  std::vector<std::string> labels;
  std::vector<SignificanceCell> cells;
  double alpha = 0.05;

  const SignificanceCell* find(std::size_t row, std::size_t col) const {
    for (const auto& c : cells)
      if (c.row == row && c.col == col) return &c;
    return nullptr;
  }
};

inline SignificanceGrid significance_grid(std::span<const double> gold,
                                          std::span<const NamedPredictions> systems,
                                          double alpha = 0.05,
                                          SignificanceTest test = SignificanceTest::williams,
                                          std::uint64_t bootstrap_seed = 8) {
  for (const auto& s : systems)
    if (s.values.size() != gold.size())
      throw ValidationError("significance_grid: system '" + s.name + "' has " +
                            std::to_string(s.values.size()) + " predictions for " +
                            std::to_string(gold.size()) + " gold labels");
  SignificanceGrid grid;
  grid.alpha = alpha;
  for (const auto& s : systems) grid.labels.push_back(s.name);
  std::vector<double> with_gold;
  for (const auto& s : systems) with_gold.push_back(pearson(gold, s.values).r);
  for (std::size_t i = 0; i < systems.size(); ++i) {
    for (std::size_t j = i + 1; j < systems.size(); ++j) {
      double p = 1.0;
      if (systems[i].values != systems[j].values) {
        if (test == SignificanceTest::williams) {
          const double r23 = pearson(systems[i].values, systems[j].values).r;
          p = williams_test(with_gold[i], with_gold[j], r23, gold.size()).p;
        } else {
          p = paired_bootstrap(gold, systems[i].values, systems[j].values, 1000, bootstrap_seed);
        }
      }
      grid.cells.push_back({i, j, p, p < alpha});
    }
  }
  return grid;
}

}  // namespace qeforge::metrics
