#pragma once

#include "influence/kernels.hpp"

namespace influence::simd::detail {

const KernelTable& avx2_table();

}  // namespace influence::simd::detail
