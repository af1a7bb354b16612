#include "decac/common.hpp"

#include <cmath>

#include "decac/simd.hpp"

namespace decac {

double SparseVec::norm() const {
  double s = 0.0;
  for (double v : value) s += v * v;
  return std::sqrt(s);
}

std::vector<double> SparseVec::dense() const {
  std::vector<double> out(dim, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) out[index[k]] += value[k];
  return out;
}

SparseVec SparseVec::from_dense(std::span<const double> x) {
  SparseVec out;
  out.dim = x.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) {
      out.index.push_back(static_cast<std::uint32_t>(i));
      out.value.push_back(x[i]);
    }
  }
  return out;
}

double norm2(std::span<const double> x) {
  return std::sqrt(simd::kernels().sum_sq(x.data(), x.size()));
}

}  // namespace decac
