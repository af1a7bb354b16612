#pragma once

// Small statistics toolkit for the ablation summaries.

#include <cstddef>
#include <span>
#include <vector>

namespace decac::stats {

/// Trailing moving average: out[i] is the mean of values[max(0, i-w+1)..i].
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> values);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
};
/// Two-sided Student-t interval for the mean.
Interval mean_ci(std::span<const double> values, double level = 0.95);

/// Mean of the first / last ceil(fraction * n) entries.
double head_mean(std::span<const double> values, double fraction);
double tail_mean(std::span<const double> values, double fraction);

struct WilcoxonResult {
  std::size_t n = 0;        // pairs with a nonzero difference
  double w_plus = 0.0;      // sum of ranks of positive differences
  double p_value = 1.0;     // one-sided, H1: x - y shifted above 0
  bool exact = true;
};

/// Paired one-sided signed-rank test of x > y. Zero differences are
/// dropped, ties get average ranks. Exact null distribution for n <= 50,
/// normal approximation with tie and continuity correction above.
WilcoxonResult wilcoxon_greater(std::span<const double> x, std::span<const double> y);

}  // namespace decac::stats
