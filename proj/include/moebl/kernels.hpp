#pragma once

// Batch inner loops behind a function table. The scalar table is the
// reference; the AVX2/FMA table is selected at runtime when the CPU has both
// extensions. Set MOEBL_KERNELS=scalar to force the reference path.
//
// Reductions inside one table always run in the same lane order, so a given
// table is deterministic; the two tables agree to rounding, not bit-for-bit.

#include <cstddef>
#include <string_view>

namespace moebl::kernels {

struct GateSums {
  double loss = 0.0;         // sum of squared residuals
  double entropy = 0.0;      // sum of binary gate entropies, nats
  std::size_t slab_hits = 0; // samples with |score| <= slab half-width
};

struct KernelTable {
  std::string_view name;

  /// out[i] = bias + sum_j w[j] * cols[j * ld + i]  (column-major n x d input)
  void (*affine_scores)(const double* cols, std::size_t n, std::size_t d, std::size_t ld, const double* w,
                        double bias, double* out);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);

  /// out[i] = exp(x[i])
  void (*exp)(const double* x, std::size_t n, double* out);

  /// Per-sample two-expert soft and hard squared losses (n outputs each). score = a_1 - a_2, the soft gate
  /// is sigmoid(score * inv_tau) and the hard winner is expert 1 iff score >= 0.
  void (*binary_losses)(const double* score, const double* f1, const double* f2, const double* y, std::size_t n,
                        double inv_tau, double* soft_loss, double* hard_loss);

  /// One pass of the antisymmetric router (logits +s, -s, gate sigmoid(2 s inv_tau)):
  /// coef[i] = (y - h) p1 p2 (f1 - f2), plus the loss/entropy/slab sums.
  GateSums (*router_pass)(const double* s, const double* y, const double* f1, const double* f2, std::size_t n,
                          double inv_tau, double slab_half_width, double* coef);
};

const KernelTable& scalar_kernels();

/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

/// Table used by the library. Chosen once per process.
const KernelTable& active_kernels();

}  // namespace moebl::kernels
