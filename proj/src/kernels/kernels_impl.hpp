#pragma once

#include "moebl/kernels.hpp"

namespace moebl::kernels {

// Defined in avx2.cpp when the compiler supports the AVX2/FMA target;
// callers must check the CPU first.
const KernelTable* avx2_table_unchecked();

}  // namespace moebl::kernels
