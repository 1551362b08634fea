#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace survwright {

// Deterministic generator used everywhere a seed is accepted.
using Rng = std::mt19937_64;

// Uniform on [0, 1) from the top 53 bits, independent of the standard
// library's distribution implementation.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform on (0, 1); safe as an argument to log().
inline double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal by Box-Muller (one draw per call, no cached pair).
double standard_normal(Rng& rng);

// SplitMix64 mix of (seed, stream) for independent per-task seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

namespace stats {

// Linear interpolation between order statistics (Hyndman-Fan type 7).
// `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double q);
double quantile(std::vector<double> values, double q);

double mean(std::span<const double> x);

// Two-sided p-value of a standard normal statistic.
double normal_two_sided_p(double z);

// Upper tail of the chi-squared distribution.
double chi_squared_sf(double statistic, double df);

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  std::optional<double> p_value;  // empty when the test is not applicable
};

// Pearson chi-squared test of independence on an r x c table of counts
// (no continuity correction). Not applicable when any expected cell is zero
// or the table has fewer than two non-empty rows/columns.
TestResult chi_squared_independence(const std::vector<std::vector<double>>& table);

// Kruskal-Wallis H test with tie correction.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const double> values);

}  // namespace stats
}  // namespace survwright
