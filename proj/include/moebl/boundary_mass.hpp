#pragma once

// Boundary-mass profiles: how much input probability sits within a given
// logit-score width of a routing interface.
//
//   top   P(Delta(X) <= w)            top-two margin
//   pair  P(Delta_min(X) <= w)        pairwise minimum margin
//   amb   P(max_k p_k^tau(X) <= 1-eps) K-way ambiguity region U_eps(tau)
//
// Slabs are closed ({. <= w}). Every batch estimator uses the shared-batch
// overload underneath, so comparisons across kinds on one batch are exact
// indicator comparisons rather than comparisons of independent estimates.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "moebl/moe_core.hpp"
#include "moebl/sampling.hpp"

namespace moebl {

/// log((1 - eps) / eps); eps must lie in (0, 1/2).
double kappa_eps(double epsilon);

/// log((K - 1)(1 - eps) / eps); equals kappa_eps when K = 2.
double kappa_eps_K(double epsilon, std::size_t K);

struct SlabSpec {
  double epsilon = 0.0;
  double tau = 0.0;
  std::size_t K = 2;
  double width_top = 0.0;  // kappa_eps * tau
  double width_K = 0.0;    // kappa_eps_K * tau

  static SlabSpec make(double epsilon, double tau, std::size_t K);
};

enum class BoundaryMassKind { top, pair, amb };

const char* to_string(BoundaryMassKind kind);

struct BoundaryMassEstimate {
  BoundaryMassKind kind = BoundaryMassKind::top;
  McEstimate estimate;
  double width_or_tau = 0.0;  // w for top/pair, tau for amb
  double epsilon = 0.0;       // amb only
};

/// Score S(x) = <nu, x> + b together with its standard deviation under a law.
struct LinearScore {
  Eigen::VectorXd nu;
  double b = 0.0;
  double sigma_nu = 1.0;  // sqrt(nu' Sigma nu)

  static LinearScore from(const Eigen::VectorXd& nu, double b, const GaussianLaw& law);
};

/// Per-sample margins of a router on a batch.
struct BatchMargins {
  Eigen::VectorXd top;   // Delta(x_i)
  Eigen::VectorXd pair;  // Delta_min(x_i)
};

BatchMargins batch_margins(const LinearRouter& router, const SampleBatch& batch);

/// 0/1 indicator of the ambiguity region max_k p_k^tau(x_i) <= 1 - eps.
std::vector<std::uint8_t> ambiguity_indicator(const LinearRouter& router, const SampleBatch& batch, double epsilon,
                                              double tau);

BoundaryMassEstimate estimate_bm_top(const MoEModel& model, const SampleBatch& batch, double w);
BoundaryMassEstimate estimate_bm_top(const MoEModel& model, const GaussianLaw& law, double w, std::size_t n,
                                     std::uint64_t seed);

BoundaryMassEstimate estimate_bm_pair(const MoEModel& model, const SampleBatch& batch, double w);
BoundaryMassEstimate estimate_bm_pair(const MoEModel& model, const GaussianLaw& law, double w, std::size_t n,
                                      std::uint64_t seed);

BoundaryMassEstimate estimate_bm_amb(const MoEModel& model, const SampleBatch& batch, double epsilon, double tau);
BoundaryMassEstimate estimate_bm_amb(const MoEModel& model, const GaussianLaw& law, double epsilon, double tau,
                                     std::size_t n, std::uint64_t seed);

/// P(|S| <= r) for S ~ N(b, sigma_nu^2).
double analytic_slab_prob(const LinearScore& score, double r);

/// First-order coefficient C_eps in P(|S| <= kappa_eps tau) = C_eps tau + o(tau).
double coarea_coeff_gaussian(const LinearScore& score, double epsilon);

struct MarginTailFit {
  std::vector<double> delta;
  std::vector<BoundaryMassEstimate> estimates;  // P(Delta_min <= delta), one per grid point
  std::vector<bool> excluded;                   // estimate was 0 and left out of the fit
  double slope = 0.0;                           // OLS slope of log estimate vs log delta
  double prefactor = 0.0;                       // C in estimate ~ C delta^slope
  bool informative = false;                     // false when < 2 usable points or a flat profile
};

MarginTailFit margin_tail_slope(const MoEModel& model, const SampleBatch& batch, std::span<const double> delta_grid);
MarginTailFit margin_tail_slope(const MoEModel& model, const GaussianLaw& law, std::span<const double> delta_grid,
                                std::size_t n, std::uint64_t seed);

/// Samples where the pairwise-margin event is not covered by the union of the
/// pairwise slabs {|S_kl| <= w}. Always 0; exposed as a checkable invariant.
std::size_t union_bound_violations(const LinearRouter& router, const SampleBatch& batch, double w);

/// The four nested events 1{Delta <= kappa_eps tau} <= 1{U_eps} <= 1{Delta <= kappa_eps_K tau}
/// <= 1{Delta_min <= kappa_eps_K tau} on one batch, with the number of samples
/// at which any link of the chain fails.
struct TaxonomyNesting {
  SlabSpec slab;
  BoundaryMassEstimate top_eps;
  BoundaryMassEstimate amb;
  BoundaryMassEstimate top_K;
  BoundaryMassEstimate pair_K;
  std::size_t violations = 0;
};

TaxonomyNesting taxonomy_nesting(const MoEModel& model, const SampleBatch& batch, double epsilon, double tau);

}  // namespace moebl
