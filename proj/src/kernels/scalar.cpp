#include <cmath>

#include "kernels_impl.hpp"

namespace moebl::kernels {

namespace {

void affine_scores(const double* cols, std::size_t n, std::size_t d, std::size_t ld, const double* w, double bias,
                   double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = bias;
  for (std::size_t j = 0; j < d; ++j) {
    const double* col = cols + j * ld;
    const double wj = w[j];
    for (std::size_t i = 0; i < n; ++i) out[i] += wj * col[i];
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void exp_n(const double* x, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

// Logistic pair (sigmoid(t), sigmoid(-t)) from e = exp(-|t|).
struct Gate {
  double p1;
  double p2;
  double e;
  double q;  // 1 / (1 + e)
};

inline Gate logistic(double t) {
  const double e = std::exp(-std::fabs(t));
  const double q = 1.0 / (1.0 + e);
  return t >= 0.0 ? Gate{q, e * q, e, q} : Gate{e * q, q, e, q};
}

void binary_losses(const double* score, const double* f1, const double* f2, const double* y, std::size_t n,
                   double inv_tau, double* soft_loss, double* hard_loss) {
  for (std::size_t i = 0; i < n; ++i) {
    const Gate g = logistic(score[i] * inv_tau);
    const double rs = y[i] - (g.p1 * f1[i] + g.p2 * f2[i]);
    const double rh = y[i] - (score[i] >= 0.0 ? f1[i] : f2[i]);
    soft_loss[i] = rs * rs;
    hard_loss[i] = rh * rh;
  }
}

GateSums router_pass(const double* s, const double* y, const double* f1, const double* f2, std::size_t n,
                     double inv_tau, double slab_half_width, double* coef) {
  GateSums sums;
  const double scale = 2.0 * inv_tau;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = s[i] * scale;
    const Gate g = logistic(t);
    const double r = y[i] - (g.p1 * f1[i] + g.p2 * f2[i]);
    coef[i] = r * g.p1 * g.p2 * (f1[i] - f2[i]);
    sums.loss += r * r;
    sums.entropy += std::log1p(g.e) + std::fabs(t) * g.e * g.q;
    if (std::fabs(s[i]) <= slab_half_width) ++sums.slab_hits;
  }
  return sums;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", affine_scores, dot, sum, exp_n, binary_losses, router_pass};
  return table;
}

}  // namespace moebl::kernels
