#pragma once

// Reduced two-expert Gaussian model: X ~ N(0, Sigma), teacher separator v,
// teacher experts m(x) +/- d_*'x / 2, student router with antisymmetric
// logits (+u'x, -u'x) so that p_1 = sigmoid(2 u'x / tau).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "moebl/moe_core.hpp"
#include "moebl/sampling.hpp"

namespace moebl {

struct SymmetrySpec {
  Eigen::VectorXd v;       // unit teacher separator
  Eigen::VectorXd d_star;  // teacher contrast
  Eigen::MatrixXd sigma;   // input covariance
  Eigen::VectorXd baseline_w;  // m(x) = baseline_w' x + baseline_b (zero by default)
  double baseline_b = 0.0;

  /// Validates shapes and |v| = 1 (to 1e-12); an empty baseline_w means m = 0.
  SymmetrySpec(Eigen::VectorXd v, Eigen::VectorXd d_star, Eigen::MatrixXd sigma,
               Eigen::VectorXd baseline_w = {}, double baseline_b = 0.0);

  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(v.size()); }
  [[nodiscard]] GaussianLaw law() const;

  /// Noiseless teacher response m(x) + sign(v'x) d_*'x / 2, with v'x = 0 on expert 1's side.
  [[nodiscard]] Eigen::VectorXd targets(const SampleBatch& batch) const;
};

/// Odd response g used in the effective operator.
struct ResponseFn {
  enum class Kind { sign, tanh, custom };
  Kind kind = Kind::sign;
  double gamma = 1.0;  // tanh(gamma z)
  std::function<double(double)> custom;
  bool custom_quadrature = false;  // allow kappa_g to integrate the custom g numerically

  static ResponseFn sign();
  static ResponseFn tanh(double gamma);
  static ResponseFn make_custom(std::function<double(double)> g, bool allow_quadrature);

  [[nodiscard]] double operator()(double z) const;
};

/// Symmetric matrix with its eigen-decomposition, eigenvalues descending.
class EffectiveOperator {
 public:
  explicit EffectiveOperator(const Eigen::MatrixXd& matrix);

  [[nodiscard]] const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  [[nodiscard]] const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  /// Columns are the orthonormal eigenvectors, in eigenvalue order.
  [[nodiscard]] const Eigen::MatrixXd& eigenvectors() const noexcept { return eigenvectors_; }
  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }

  [[nodiscard]] Eigen::MatrixXd reconstruct() const;
  /// Projection of x onto the span of eigenvectors with eigenvalue > 0.
  [[nodiscard]] Eigen::VectorXd positive_projection(const Eigen::VectorXd& x) const;

 private:
  Eigen::MatrixXd matrix_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
};

struct OperatorEstimate {
  EffectiveOperator op;
  McEstimate rayleigh;  // per-sample mean of g(v'x)(d_*'x)(v'x)^2
};

/// M_hat = mean g(v'x)(d_*'x) x x', symmetrised.
OperatorEstimate build_M_mc(const ResponseFn& g, const SymmetrySpec& spec, const SampleBatch& batch);
OperatorEstimate build_M_mc(const ResponseFn& g, const SymmetrySpec& spec, std::size_t n, std::uint64_t seed);

/// E[g(G) G^3] / s^3 for G ~ N(0, s^2).
double kappa_g(const ResponseFn& g, double s);

/// kappa_g (d_*' Sigma v) sqrt(v' Sigma v).
double rayleigh_analytic(const ResponseFn& g, const SymmetrySpec& spec);

/// u_0, ..., u_T with u_{t+1} = u_t + (eta / tau) M u_t.
std::vector<Eigen::VectorXd> linearized_iterate(const Eigen::VectorXd& u0, const EffectiveOperator& M, double eta,
                                                double tau, std::size_t steps);

/// |(1 + eta lambda2 / tau) / (1 + eta lambda1 / tau)|.
double alignment_rate(double lambda1, double lambda2, double eta, double tau);

/// |cos(u, v)|, 0 for u = 0.
double alignment(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Router-only objective pieces at u on a fixed batch.
struct ReducedEval {
  double risk = 0.0;                 // mean (y - h)^2
  double entropy = 0.0;              // mean binary gate entropy, nats
  double boundary_mass = 0.0;        // fraction with |2 u'x| <= bm_width
  Eigen::VectorXd gradient;          // d risk / d u
};

/// Evaluates risk, gate entropy, slab mass and the exact gradient
/// -(4/tau) mean[(y - h) p1 p2 (f1 - f2) x] in one pass.
ReducedEval reduced_eval(const Eigen::VectorXd& u, const LinearExpertSet& experts, const Eigen::VectorXd& y,
                         const SampleBatch& batch, double tau, double bm_width);

Eigen::VectorXd reduced_gradient(const Eigen::VectorXd& u, const LinearExpertSet& experts, const Eigen::VectorXd& y,
                                 const SampleBatch& batch, double tau);

double reduced_risk(const Eigen::VectorXd& u, const LinearExpertSet& experts, const Eigen::VectorXd& y,
                    const SampleBatch& batch, double tau);

/// Central finite-difference gradient of reduced_risk with step 1e-6 (1 + |u|).
Eigen::VectorXd reduced_gradient_fd(const Eigen::VectorXd& u, const LinearExpertSet& experts,
                                    const Eigen::VectorXd& y, const SampleBatch& batch, double tau);

/// Student experts: the least-squares shared predictor of y on the batch,
/// plus / minus contrast' x / 2. The shared predictor is linear through the
/// origin unless with_intercept is set.
LinearExpertSet contrast_experts(const SampleBatch& batch, const Eigen::VectorXd& y, const Eigen::VectorXd& contrast,
                                 bool with_intercept = false);

/// Direction with |cos(result, v)| = cos_target and norm `norm`, the
/// orthogonal part drawn from `seed`.
Eigen::VectorXd initial_direction(const Eigen::VectorXd& v, double cos_target, double norm, std::uint64_t seed);

struct RouterTraceRecord {
  std::size_t step = 0;
  Eigen::VectorXd u;
  double alignment = 0.0;
  double risk = 0.0;
  double entropy = 0.0;
  double boundary_mass = 0.0;
};

struct RouterTrace {
  std::vector<RouterTraceRecord> records;  // step 0 (initial) through the last step taken
  double eta = 0.0;
  double tau = 0.0;
  double bm_width = 0.0;
  std::uint64_t seed = 0;
  bool diverged = false;  // |u| exceeded 1e6 or became non-finite

  [[nodiscard]] const RouterTraceRecord& final() const { return records.back(); }
};

struct TrainSettings {
  double eta = 0.05;
  double tau = 0.1;
  std::size_t steps = 2000;
  /// Slab width on the logit difference 2u'x for the trace's boundary-mass
  /// column; <= 0 selects 2 tau.
  double bm_width = 0.0;
  /// Keep every k-th record (the final step is always kept).
  std::size_t record_every = 1;
};

/// Plain gradient descent on u with the experts held fixed.
RouterTrace reduced_router_train(const SymmetrySpec& spec, const LinearExpertSet& experts, const SampleBatch& batch,
                                 const TrainSettings& settings, const Eigen::VectorXd& u0);

RouterTrace reduced_router_train(const SymmetrySpec& spec, const LinearExpertSet& experts,
                                 const TrainSettings& settings, std::size_t n, std::uint64_t seed,
                                 const Eigen::VectorXd& u0);

}  // namespace moebl
