#include "decac/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "decac/common.hpp"

namespace decac::stats {

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw ConfigError("moving average window must be positive");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

Interval mean_ci(std::span<const double> values, double level) {
  const double mu = mean(values);
  if (values.size() < 2) return {mu, mu};
  boost::math::students_t dist(static_cast<double>(values.size() - 1));
  const double t = boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
  const double half = t * stddev(values) / std::sqrt(static_cast<double>(values.size()));
  return {mu - half, mu + half};
}

namespace {
std::size_t window_len(std::size_t n, double fraction) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * n - 1e-9)));
}
}  // namespace

double head_mean(std::span<const double> values, double fraction) {
  if (values.empty()) return 0.0;
  return mean(values.first(std::min(values.size(), window_len(values.size(), fraction))));
}

double tail_mean(std::span<const double> values, double fraction) {
  if (values.empty()) return 0.0;
  return mean(values.last(std::min(values.size(), window_len(values.size(), fraction))));
}

WilcoxonResult wilcoxon_greater(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw StructuralError("wilcoxon: samples must be paired");
  std::vector<double> diff;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] - y[i] != 0.0) diff.push_back(x[i] - y[i]);
  }
  WilcoxonResult out;
  out.n = diff.size();
  if (diff.empty()) return out;

  std::vector<std::size_t> order(diff.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(diff[a]) < std::abs(diff[b]); });
  // Doubled ranks stay integral under averaging of ties.
  std::vector<long> rank2(diff.size());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(diff[order[j + 1]]) == std::abs(diff[order[i]])) ++j;
    const long r2 = static_cast<long>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long w2 = 0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    if (diff[i] > 0) w2 += rank2[i];
  }
  out.w_plus = static_cast<double>(w2) / 2.0;

  const std::size_t n = diff.size();
  if (n <= 50) {
    // Null: each rank enters W+ independently with probability 1/2.
    const long total = std::accumulate(rank2.begin(), rank2.end(), 0L);
    std::vector<double> dist(static_cast<std::size_t>(total) + 1, 0.0);
    dist[0] = 1.0;
    long reach = 0;
    for (long r : rank2) {
      for (long s = reach; s >= 0; --s) {
        if (dist[static_cast<std::size_t>(s)] != 0.0) {
          dist[static_cast<std::size_t>(s + r)] += dist[static_cast<std::size_t>(s)];
        }
      }
      reach += r;
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double tail = 0.0;
    for (long s = w2; s <= total; ++s) tail += dist[static_cast<std::size_t>(s)];
    out.p_value = std::min(1.0, tail / all);
    out.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1) / 4.0;
    const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
    const double z = (out.w_plus - mu - 0.5) / std::sqrt(var);
    out.p_value = boost::math::cdf(boost::math::complement(boost::math::normal(), z));
    out.exact = false;
  }
  return out;
}

}  // namespace decac::stats
