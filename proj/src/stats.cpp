#include "survwright/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cassert>
#include <cmath>
#include <numbers>
#include <numeric>

namespace survwright {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double standard_normal(Rng& rng) {
  const double u = uniform_open(rng);
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

namespace stats {

double quantile_sorted(std::span<const double> sorted, double q) {
  assert(!sorted.empty());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, q);
}

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

double chi_squared_sf(double statistic, double df) {
  if (statistic <= 0.0) return 1.0;
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, statistic));
}

TestResult chi_squared_independence(const std::vector<std::vector<double>>& table) {
  TestResult out;
  const std::size_t r = table.size();
  if (r == 0) return out;
  const std::size_t c = table.front().size();
  std::vector<double> row_tot(r, 0.0), col_tot(c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      row_tot[i] += table[i][j];
      col_tot[j] += table[i][j];
      total += table[i][j];
    }
  }
  if (total <= 0.0 || r < 2 || c < 2) return out;
  double stat = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double expected = row_tot[i] * col_tot[j] / total;
      if (expected <= 0.0) return out;
      const double d = table[i][j] - expected;
      stat += d * d / expected;
    }
  }
  out.statistic = stat;
  out.df = static_cast<double>((r - 1) * (c - 1));
  out.p_value = chi_squared_sf(stat, out.df);
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  TestResult out;
  std::vector<double> pooled;
  std::size_t non_empty = 0;
  for (const auto& g : groups) {
    pooled.insert(pooled.end(), g.begin(), g.end());
    if (!g.empty()) ++non_empty;
  }
  const double n = static_cast<double>(pooled.size());
  if (non_empty < 2) return out;
  const auto ranks = average_ranks(pooled);

  double h = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
    offset += g.size();
    h += rank_sum * rank_sum / static_cast<double>(g.size());
  }
  h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);

  // Tie correction: 1 - sum(t^3 - t) / (n^3 - n)
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double correction = 1.0 - ties / (n * n * n - n);
  if (correction <= 0.0) return out;  // every value identical
  h /= correction;

  out.statistic = h;
  out.df = static_cast<double>(non_empty - 1);
  out.p_value = chi_squared_sf(h, out.df);
  return out;
}

}  // namespace stats
}  // namespace survwright
