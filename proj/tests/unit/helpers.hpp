#pragma once

#include <cmath>
#include <vector>

#include "decac/common.hpp"
#include "decac/rng.hpp"

namespace testing {

inline std::vector<double> gaussian(std::size_t n, decac::Rng& rng, double sd = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, sd);
  return v;
}

inline decac::SparseVec unit_input(std::size_t d, decac::Rng& rng) {
  auto v = gaussian(d, rng);
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return decac::SparseVec::from_dense(v);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing
