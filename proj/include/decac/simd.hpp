#pragma once

// Data-parallel inner loops behind the network, projection and gossip code.
// A scalar reference table is always compiled; AVX2+FMA (x86-64) and NEON
// (aarch64) tables are compiled when the target supports them and selected
// at runtime. DECAC_SIMD=scalar|avx2|neon|auto overrides the choice.

#include <cstddef>
#include <string_view>
#include <vector>

namespace decac::simd {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;
  const char* name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x *= alpha
  void (*scal)(double alpha, double* x, std::size_t n);
  // sum_i a[i]^2
  double (*sum_sq)(const double* a, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*dist_sq)(const double* a, const double* b, std::size_t n);
  // y = A x, A row-major rows x cols
  void (*gemv)(const double* A, std::size_t rows, std::size_t cols, const double* x, double* y);
  // y = A^T v, A row-major rows x cols
  void (*gemv_t)(const double* A, std::size_t rows, std::size_t cols, const double* v, double* y);
  // A += alpha * u v^T
  void (*ger)(double alpha, const double* u, const double* v, double* A, std::size_t rows,
              std::size_t cols);
  // out = scale * max(z, 0)
  void (*relu_scale)(const double* z, double scale, double* out, std::size_t n);
};

const KernelTable& scalar_kernels();
/// Null when the ISA was not compiled in or the CPU lacks it.
const KernelTable* isa_kernels(Isa isa);
/// Every table usable on this machine, scalar first.
std::vector<const KernelTable*> available_kernels();

/// Active table; resolved once on first use.
const KernelTable& kernels();
/// Force a table (tests and the CLI use this). Returns false if unavailable.
bool select(Isa isa);
bool select(std::string_view name);

}  // namespace decac::simd
