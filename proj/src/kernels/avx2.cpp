// AVX2 + FMA variants of the batch kernels. This translation unit is the only
// one compiled with -mavx2 -mfma; nothing here may run before the dispatcher
// has confirmed CPU support.

#include <immintrin.h>

#include <bit>
#include <cmath>
#include <cstdint>

#include "kernels_impl.hpp"

namespace moebl::kernels {

namespace {

constexpr std::size_t kLanes = 4;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

inline __m256d abs_pd(__m256d v) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v); }

// exp on [-708.39, 709]: round-to-nearest range reduction by ln 2 (Cody-Waite
// split), degree-13 Taylor polynomial on |r| <= ln2/2, exponent injected
// through the integer add trick. Inputs below the range flush to zero.
inline __m256d exp_pd(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.3964185322641);
  const __m256d underflow = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), _mm256_set1_pd(709.0));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

  __m256d p = _mm256_set1_pd(1.0 / 6227020800.0);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 479001600.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 39916800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 3628800.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 362880.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 40320.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 5040.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 720.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 120.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 24.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0 / 6.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // n + 1.5 * 2^52 leaves n in the low mantissa bits.
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);
  const __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
  const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, result);
}

// log1p for x in [0, 1] via 2 atanh(x / (2 + x)); u <= 1/3 so the odd series
// through u^29 is below one ulp.
inline __m256d log1p_unit_pd(__m256d x) {
  const __m256d u = _mm256_div_pd(x, _mm256_add_pd(_mm256_set1_pd(2.0), x));
  const __m256d u2 = _mm256_mul_pd(u, u);
  __m256d p = _mm256_set1_pd(1.0 / 29.0);
  for (int k = 27; k >= 1; k -= 2) p = _mm256_fmadd_pd(p, u2, _mm256_set1_pd(1.0 / k));
  return _mm256_mul_pd(_mm256_mul_pd(_mm256_set1_pd(2.0), u), p);
}

void affine_scores(const double* cols, std::size_t n, std::size_t d, std::size_t ld, const double* w, double bias,
                   double* out) {
  const std::size_t vec_n = n - n % kLanes;
  const __m256d b = _mm256_set1_pd(bias);
  for (std::size_t i = 0; i < vec_n; i += kLanes) {
    __m256d acc = b;
    for (std::size_t j = 0; j < d; ++j) {
      acc = _mm256_fmadd_pd(_mm256_set1_pd(w[j]), _mm256_loadu_pd(cols + j * ld + i), acc);
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (std::size_t i = vec_n; i < n; ++i) {
    double acc = bias;
    for (std::size_t j = 0; j < d; ++j) acc = std::fma(w[j], cols[j * ld + i], acc);
    out[i] = acc;
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 * kLanes <= n; i += 4 * kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + kLanes <= n; i += kLanes) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double total = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) total = std::fma(a[i], b[i], total);
  return total;
}

double sum(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a + i + 4));
  }
  for (; i + kLanes <= n; i += kLanes) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) total += a[i];
  return total;
}

void exp_n(const double* x, std::size_t n, double* out) {
  const std::size_t vec_n = n - n % kLanes;
  for (std::size_t i = 0; i < vec_n; i += kLanes) _mm256_storeu_pd(out + i, exp_pd(_mm256_loadu_pd(x + i)));
  for (std::size_t i = vec_n; i < n; ++i) out[i] = std::exp(x[i]);
}

struct GatePd {
  __m256d p1;
  __m256d p2;
  __m256d e;
  __m256d eq;
  __m256d abs_t;
};

inline GatePd logistic_pd(__m256d t) {
  const __m256d a = abs_pd(t);
  const __m256d e = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), a));
  const __m256d q = _mm256_div_pd(_mm256_set1_pd(1.0), _mm256_add_pd(_mm256_set1_pd(1.0), e));
  const __m256d eq = _mm256_mul_pd(e, q);
  const __m256d nonneg = _mm256_cmp_pd(t, _mm256_setzero_pd(), _CMP_GE_OQ);
  return {_mm256_blendv_pd(eq, q, nonneg), _mm256_blendv_pd(q, eq, nonneg), e, eq, a};
}

struct GateScalar {
  double p1;
  double p2;
  double e;
  double q;
};

inline GateScalar logistic(double t) {
  const double e = std::exp(-std::fabs(t));
  const double q = 1.0 / (1.0 + e);
  return t >= 0.0 ? GateScalar{q, e * q, e, q} : GateScalar{e * q, q, e, q};
}

void binary_losses(const double* score, const double* f1, const double* f2, const double* y, std::size_t n,
                   double inv_tau, double* soft_loss, double* hard_loss) {
  const std::size_t vec_n = n - n % kLanes;
  const __m256d it = _mm256_set1_pd(inv_tau);
  for (std::size_t i = 0; i < vec_n; i += kLanes) {
    const __m256d s = _mm256_loadu_pd(score + i);
    const __m256d a = _mm256_loadu_pd(f1 + i);
    const __m256d b = _mm256_loadu_pd(f2 + i);
    const __m256d yy = _mm256_loadu_pd(y + i);
    const GatePd g = logistic_pd(_mm256_mul_pd(s, it));
    const __m256d h = _mm256_fmadd_pd(g.p1, a, _mm256_mul_pd(g.p2, b));
    const __m256d rs = _mm256_sub_pd(yy, h);
    const __m256d winner_one = _mm256_cmp_pd(s, _mm256_setzero_pd(), _CMP_GE_OQ);
    const __m256d rh = _mm256_sub_pd(yy, _mm256_blendv_pd(b, a, winner_one));
    _mm256_storeu_pd(soft_loss + i, _mm256_mul_pd(rs, rs));
    _mm256_storeu_pd(hard_loss + i, _mm256_mul_pd(rh, rh));
  }
  for (std::size_t i = vec_n; i < n; ++i) {
    const GateScalar g = logistic(score[i] * inv_tau);
    const double rs = y[i] - (g.p1 * f1[i] + g.p2 * f2[i]);
    const double rh = y[i] - (score[i] >= 0.0 ? f1[i] : f2[i]);
    soft_loss[i] = rs * rs;
    hard_loss[i] = rh * rh;
  }
}

GateSums router_pass(const double* s, const double* y, const double* f1, const double* f2, std::size_t n,
                     double inv_tau, double slab_half_width, double* coef) {
  const std::size_t vec_n = n - n % kLanes;
  const double scale = 2.0 * inv_tau;
  const __m256d sc = _mm256_set1_pd(scale);
  const __m256d hw = _mm256_set1_pd(slab_half_width);
  __m256d loss = _mm256_setzero_pd();
  __m256d entropy = _mm256_setzero_pd();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < vec_n; i += kLanes) {
    const __m256d sv = _mm256_loadu_pd(s + i);
    const __m256d a = _mm256_loadu_pd(f1 + i);
    const __m256d b = _mm256_loadu_pd(f2 + i);
    const GatePd g = logistic_pd(_mm256_mul_pd(sv, sc));
    const __m256d h = _mm256_fmadd_pd(g.p1, a, _mm256_mul_pd(g.p2, b));
    const __m256d r = _mm256_sub_pd(_mm256_loadu_pd(y + i), h);
    const __m256d c = _mm256_mul_pd(_mm256_mul_pd(r, _mm256_mul_pd(g.p1, g.p2)), _mm256_sub_pd(a, b));
    _mm256_storeu_pd(coef + i, c);
    loss = _mm256_fmadd_pd(r, r, loss);
    entropy = _mm256_add_pd(entropy, _mm256_fmadd_pd(g.abs_t, g.eq, log1p_unit_pd(g.e)));
    const __m256d inside = _mm256_cmp_pd(abs_pd(sv), hw, _CMP_LE_OQ);
    hits += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(_mm256_movemask_pd(inside))));
  }
  GateSums sums{hsum(loss), hsum(entropy), hits};
  for (std::size_t i = vec_n; i < n; ++i) {
    const double t = s[i] * scale;
    const GateScalar g = logistic(t);
    const double r = y[i] - (g.p1 * f1[i] + g.p2 * f2[i]);
    coef[i] = r * g.p1 * g.p2 * (f1[i] - f2[i]);
    sums.loss += r * r;
    sums.entropy += std::log1p(g.e) + std::fabs(t) * g.e * g.q;
    if (std::fabs(s[i]) <= slab_half_width) ++sums.slab_hits;
  }
  return sums;
}

}  // namespace

const KernelTable* avx2_table_unchecked() {
  static const KernelTable table{"avx2", affine_scores, dot, sum, exp_n, binary_losses, router_pass};
  return &table;
}

}  // namespace moebl::kernels
