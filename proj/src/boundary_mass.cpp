#include "moebl/boundary_mass.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "moebl/numerics.hpp"

namespace moebl {

namespace {

void require_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw std::invalid_argument("epsilon must lie in (0, 1/2)");
}

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument(what);
}

void require_batch(const MoEModel& model, const SampleBatch& batch) {
  if (batch.n() < 2) throw std::invalid_argument("boundary-mass estimation needs at least two samples");
  if (batch.dim() != model.dim()) throw std::invalid_argument("batch dimension does not match the model");
}

std::size_t count_at_most(const Eigen::VectorXd& values, double w) {
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) hits += values(i) <= w ? 1 : 0;
  return hits;
}

}  // namespace

double kappa_eps(double epsilon) {
  require_epsilon(epsilon);
  return std::log((1.0 - epsilon) / epsilon);
}

double kappa_eps_K(double epsilon, std::size_t K) {
  require_epsilon(epsilon);
  if (K < 2) throw std::invalid_argument("kappa_eps_K needs K >= 2");
  if (K == 2) return kappa_eps(epsilon);
  return std::log(static_cast<double>(K - 1) * (1.0 - epsilon) / epsilon);
}

SlabSpec SlabSpec::make(double epsilon, double tau, std::size_t K) {
  require_positive(tau, "SlabSpec needs tau > 0");
  return {epsilon, tau, K, kappa_eps(epsilon) * tau, kappa_eps_K(epsilon, K) * tau};
}

const char* to_string(BoundaryMassKind kind) {
  switch (kind) {
    case BoundaryMassKind::top: return "top";
    case BoundaryMassKind::pair: return "pair";
    case BoundaryMassKind::amb: return "amb";
  }
  return "?";
}

LinearScore LinearScore::from(const Eigen::VectorXd& nu, double b, const GaussianLaw& law) {
  if (static_cast<std::size_t>(nu.size()) != law.dim()) throw std::invalid_argument("score and law dimensions differ");
  if (!(nu.norm() > 0.0)) throw std::invalid_argument("score direction must be nonzero");
  const double var = nu.dot(law.covariance() * nu);
  // The offset is measured at the law's mean so analytic_slab_prob sees S ~ N(b, var).
  return {nu, b + nu.dot(law.mean()), std::sqrt(var)};
}

BatchMargins batch_margins(const LinearRouter& router, const SampleBatch& batch) {
  if (batch.dim() != router.dim()) throw std::invalid_argument("batch dimension does not match the router");
  const Eigen::MatrixXd z = router.logits_batch(batch.points);
  const Eigen::Index n = z.rows();
  const Eigen::Index K = z.cols();
  BatchMargins out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  if (K == 2) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = std::fabs(z(i, 0) - z(i, 1));
      out.top(i) = m;
      out.pair(i) = m;
    }
    return out;
  }
  std::vector<double> row(static_cast<std::size_t>(K));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < K; ++k) row[static_cast<std::size_t>(k)] = z(i, k);
    std::sort(row.begin(), row.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < row.size(); ++k) gap = std::min(gap, row[k] - row[k - 1]);
    out.top(i) = row[row.size() - 1] - row[row.size() - 2];
    out.pair(i) = gap;
  }
  return out;
}

std::vector<std::uint8_t> ambiguity_indicator(const LinearRouter& router, const SampleBatch& batch, double epsilon,
                                              double tau) {
  require_epsilon(epsilon);
  require_positive(tau, "ambiguity region needs tau > 0");
  const Eigen::MatrixXd z = router.logits_batch(batch.points);
  const double cap = 1.0 - epsilon;
  std::vector<std::uint8_t> inside(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    // Same arithmetic as softmax_weights: the winner's shifted weight is
    // exp(0) = 1, so max_k p_k = 1 / total.
    const double top = z.row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index k = 0; k < z.cols(); ++k) total += std::exp((z(i, k) - top) / tau);
    inside[static_cast<std::size_t>(i)] = (1.0 / total <= cap) ? 1 : 0;
  }
  return inside;
}

BoundaryMassEstimate estimate_bm_top(const MoEModel& model, const SampleBatch& batch, double w) {
  require_positive(w, "slab width must be positive");
  require_batch(model, batch);
  const BatchMargins m = batch_margins(model.router(), batch);
  return {BoundaryMassKind::top, mc_proportion(count_at_most(m.top, w), batch.n()), w, 0.0};
}

BoundaryMassEstimate estimate_bm_top(const MoEModel& model, const GaussianLaw& law, double w, std::size_t n,
                                     std::uint64_t seed) {
  return estimate_bm_top(model, gaussian_sample(law, n, seed), w);
}

BoundaryMassEstimate estimate_bm_pair(const MoEModel& model, const SampleBatch& batch, double w) {
  require_positive(w, "slab width must be positive");
  require_batch(model, batch);
  const BatchMargins m = batch_margins(model.router(), batch);
  return {BoundaryMassKind::pair, mc_proportion(count_at_most(m.pair, w), batch.n()), w, 0.0};
}

BoundaryMassEstimate estimate_bm_pair(const MoEModel& model, const GaussianLaw& law, double w, std::size_t n,
                                      std::uint64_t seed) {
  return estimate_bm_pair(model, gaussian_sample(law, n, seed), w);
}

BoundaryMassEstimate estimate_bm_amb(const MoEModel& model, const SampleBatch& batch, double epsilon, double tau) {
  require_batch(model, batch);
  const auto inside = ambiguity_indicator(model.router(), batch, epsilon, tau);
  std::size_t hits = 0;
  for (std::uint8_t v : inside) hits += v;
  return {BoundaryMassKind::amb, mc_proportion(hits, batch.n()), tau, epsilon};
}

BoundaryMassEstimate estimate_bm_amb(const MoEModel& model, const GaussianLaw& law, double epsilon, double tau,
                                     std::size_t n, std::uint64_t seed) {
  return estimate_bm_amb(model, gaussian_sample(law, n, seed), epsilon, tau);
}

double analytic_slab_prob(const LinearScore& score, double r) {
  require_positive(score.sigma_nu, "score standard deviation must be positive");
  if (!(r > 0.0)) throw std::invalid_argument("slab half-width must be positive");
  if (std::isinf(r)) return 1.0;
  const double s = score.sigma_nu;
  const double b = score.b;
  // Evaluate on the side of the mean with the smaller CDF values so the
  // difference keeps its relative accuracy far from the interface.
  const double hi = (r - std::fabs(b)) / s;
  const double lo = (-r - std::fabs(b)) / s;
  return normal_cdf(hi) - normal_cdf(lo);
}

double coarea_coeff_gaussian(const LinearScore& score, double epsilon) {
  require_positive(score.sigma_nu, "score standard deviation must be positive");
  return 2.0 * kappa_eps(epsilon) * normal_pdf(score.b / score.sigma_nu) / score.sigma_nu;
}

MarginTailFit margin_tail_slope(const MoEModel& model, const SampleBatch& batch, std::span<const double> delta_grid) {
  if (delta_grid.empty()) throw std::invalid_argument("margin tail grid must be nonempty");
  for (std::size_t i = 0; i < delta_grid.size(); ++i) {
    require_positive(delta_grid[i], "margin tail grid entries must be positive");
    if (i > 0 && !(delta_grid[i] > delta_grid[i - 1])) {
      throw std::invalid_argument("margin tail grid must be strictly increasing");
    }
  }
  require_batch(model, batch);
  const BatchMargins m = batch_margins(model.router(), batch);

  MarginTailFit fit;
  std::vector<double> xs;
  std::vector<double> ys;
  for (double delta : delta_grid) {
    BoundaryMassEstimate e{BoundaryMassKind::pair, mc_proportion(count_at_most(m.pair, delta), batch.n()), delta, 0.0};
    const bool empty = e.estimate.value == 0.0;
    fit.delta.push_back(delta);
    fit.estimates.push_back(e);
    fit.excluded.push_back(empty);
    if (!empty) {
      xs.push_back(delta);
      ys.push_back(e.estimate.value);
    }
  }
  const bool flat = !ys.empty() && std::all_of(ys.begin(), ys.end(), [&](double y) { return y == ys.front(); });
  if (xs.size() >= 2 && !flat) {
    fit.slope = log_log_slope(xs, ys);
    fit.prefactor = log_log_prefactor(xs, ys);
    fit.informative = true;
  }
  return fit;
}

MarginTailFit margin_tail_slope(const MoEModel& model, const GaussianLaw& law, std::span<const double> delta_grid,
                                std::size_t n, std::uint64_t seed) {
  return margin_tail_slope(model, gaussian_sample(law, n, seed), delta_grid);
}

std::size_t union_bound_violations(const LinearRouter& router, const SampleBatch& batch, double w) {
  const BatchMargins m = batch_margins(router, batch);
  const Eigen::MatrixXd z = router.logits_batch(batch.points);
  std::size_t violations = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (!(m.pair(i) <= w)) continue;
    std::size_t covering = 0;
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      for (Eigen::Index l = k + 1; l < z.cols(); ++l) covering += std::fabs(z(i, k) - z(i, l)) <= w ? 1 : 0;
    }
    violations += covering == 0 ? 1 : 0;
  }
  return violations;
}

TaxonomyNesting taxonomy_nesting(const MoEModel& model, const SampleBatch& batch, double epsilon, double tau) {
  require_batch(model, batch);
  TaxonomyNesting out;
  out.slab = SlabSpec::make(epsilon, tau, model.num_experts());
  const BatchMargins m = batch_margins(model.router(), batch);
  const auto amb = ambiguity_indicator(model.router(), batch, epsilon, tau);
  std::size_t c_top = 0;
  std::size_t c_amb = 0;
  std::size_t c_topK = 0;
  std::size_t c_pair = 0;
  for (std::size_t i = 0; i < batch.n(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const int a = m.top(row) <= out.slab.width_top ? 1 : 0;
    const int b = amb[i];
    const int c = m.top(row) <= out.slab.width_K ? 1 : 0;
    const int d = m.pair(row) <= out.slab.width_K ? 1 : 0;
    c_top += a;
    c_amb += b;
    c_topK += c;
    c_pair += d;
    out.violations += (a <= b && b <= c && c <= d) ? 0 : 1;
  }
  const std::size_t n = batch.n();
  out.top_eps = {BoundaryMassKind::top, mc_proportion(c_top, n), out.slab.width_top, 0.0};
  out.amb = {BoundaryMassKind::amb, mc_proportion(c_amb, n), tau, epsilon};
  out.top_K = {BoundaryMassKind::top, mc_proportion(c_topK, n), out.slab.width_K, 0.0};
  out.pair_K = {BoundaryMassKind::pair, mc_proportion(c_pair, n), out.slab.width_K, 0.0};
  return out;
}

}  // namespace moebl
