#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace decac::simd {

namespace {

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(DECAC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(DECAC_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* resolve_default() {
  const char* env = std::getenv("DECAC_SIMD");
  if (env != nullptr) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && isa_kernels(Isa::Avx2)) return isa_kernels(Isa::Avx2);
    if (want == "neon" && isa_kernels(Isa::Neon)) return isa_kernels(Isa::Neon);
  }
  if (const auto* t = isa_kernels(Isa::Avx2)) return t;
  if (const auto* t = isa_kernels(Isa::Neon)) return t;
  return &scalar_kernels();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable& scalar_kernels() { return detail::kScalarTable; }

const KernelTable* isa_kernels(Isa isa) {
  if (!cpu_has(isa)) return nullptr;
  switch (isa) {
    case Isa::Scalar:
      return &detail::kScalarTable;
    case Isa::Avx2:
#if defined(DECAC_HAVE_AVX2)
      return &detail::kAvx2Table;
#else
      return nullptr;
#endif
    case Isa::Neon:
#if defined(DECAC_HAVE_NEON)
      return &detail::kNeonTable;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  for (Isa isa : {Isa::Avx2, Isa::Neon}) {
    if (const auto* t = isa_kernels(isa)) out.push_back(t);
  }
  return out;
}

const KernelTable& kernels() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = resolve_default();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

bool select(Isa isa) {
  const KernelTable* t = isa_kernels(isa);
  if (t == nullptr) return false;
  g_active.store(t, std::memory_order_release);
  return true;
}

bool select(std::string_view name) {
  if (name == "auto") {
    g_active.store(resolve_default(), std::memory_order_release);
    return true;
  }
  if (name == "scalar") return select(Isa::Scalar);
  if (name == "avx2") return select(Isa::Avx2);
  if (name == "neon") return select(Isa::Neon);
  return false;
}

}  // namespace decac::simd
