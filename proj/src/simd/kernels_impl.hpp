#pragma once

#include "decac/simd.hpp"

namespace decac::simd::detail {

extern const KernelTable kScalarTable;
#if defined(DECAC_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(DECAC_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif

}  // namespace decac::simd::detail
