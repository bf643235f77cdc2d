#pragma once

// Paired Monte Carlo risks for a soft student against a noiseless hard
// teacher, and the inequalities linking the soft/hard gap to boundary mass.
// Every comparison is computed on one shared batch, so the bound checks are
// exact statements about the empirical measure.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "moebl/moe_core.hpp"
#include "moebl/sampling.hpp"

namespace moebl {

/// Noiseless teacher: y(x) is the hard prediction of (router, experts).
struct TeacherSpec {
  LinearRouter router;
  LinearExpertSet experts;

  [[nodiscard]] MoEModel model() const { return {router, experts, 0.0}; }
  [[nodiscard]] Eigen::VectorXd targets(const SampleBatch& batch) const;
};

struct RiskEstimate {
  McEstimate soft;   // mean (y - h_tau)^2
  McEstimate hard;   // mean (y - h_0)^2
  double gap = 0.0;  // |soft - hard|
  double tau = 0.0;
};

/// Per-sample soft and hard predictions of a model on a batch (generic K path).
struct BatchPredictions {
  Eigen::VectorXd soft;   // h_tau(x_i); empty when the model is hard
  Eigen::VectorXd hard;   // h_0(x_i)
  Eigen::VectorXd delta;  // top-two margin at x_i
  double B_f = 0.0;       // max_i max_k |f_k(x_i)|
};

BatchPredictions batch_predictions(const MoEModel& model, const SampleBatch& batch);

/// Paired soft/hard risks. K = 2 runs through the dispatched batch kernels;
/// other K through the generic path.
RiskEstimate estimate_risks(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch);

/// The generic path for any K, exposed so the K = 2 kernel path can be checked against it.
RiskEstimate estimate_risks_generic(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch);

/// max_i ( |h_tau(x_i) - h_0(x_i)| - 2 B_f (K-1) exp(-Delta(x_i)/tau) ); <= 0 when the bound holds.
double pointwise_gap_bound_check(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch);

struct BoundConstants {
  double B_Y = 0.0;   // max_i |y_i|
  double B_f = 0.0;   // max_i max_k |f_k(x_i)|
  std::size_t K = 2;
  double alpha = 0.0; // fitted margin-tail exponent (descriptive; 0 if not fitted)
  double C_mt = 0.0;  // fitted margin-tail constant (descriptive; 0 if not fitted)
};

struct GapBoundChain {
  double gap = 0.0;             // |L_tau - L_0| on the batch
  double middle = 0.0;          // (2 B_Y + 2 B_f) mean |h_tau - h_0|
  double chain_bound = 0.0;     // 4 B_f (B_Y + B_f) (K-1) mean exp(-Delta/tau)
  double mean_tail = 0.0;       // mean exp(-Delta/tau)
  BoundConstants constants;
  [[nodiscard]] bool holds() const { return gap <= middle && middle <= chain_bound; }
};

GapBoundChain gap_bound_chain(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch,
                              double tau);

struct RiskSplit {
  double interior = 0.0;   // mean (mu - h_tau)^2 1{G_eps}
  double boundary = 0.0;   // mean (mu - h_tau)^2 1{U_eps}
  double total = 0.0;      // mean (mu - h_tau)^2, from an independent pass
  double ambiguity_fraction = 0.0;
  double boundary_bound = 0.0;  // (2 B^2 + 2 B_stu^2) * ambiguity fraction
  double epsilon = 0.0;
  double tau = 0.0;

  [[nodiscard]] double additivity_error() const;  // |interior + boundary - total| / max(total, tiny)
  [[nodiscard]] bool bound_holds() const { return boundary <= boundary_bound; }
};

RiskSplit risk_decomposition(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch,
                             double epsilon);

struct GapSweep {
  std::vector<double> tau;
  std::vector<double> max_gap;       // max over the parameter grid, per tau
  std::vector<std::size_t> argmax;   // grid index attaining it
  double slope = 0.0;                // log-log OLS slope of max_gap vs tau (0 if not fittable)
  bool fittable = false;
};

/// Max-over-grid paired gap for each temperature, on one shared batch.
GapSweep uniform_gap_sweep(const TeacherSpec& teacher, std::span<const MoEModel> param_grid,
                           std::span<const double> tau_grid, const GaussianLaw& law, std::size_t n,
                           std::uint64_t seed);

/// Default 5 x 5 grid around a binary teacher: router sharpness scalings
/// {0.5,0.75,1,1.25,1.5} (logits multiplied, interface kept) crossed with
/// expert-contrast scalings {0.5,0.75,1,1.25,1.5} of the teacher's contrast.
/// Students with a shifted interface are left out: their soft/hard gap changes
/// sign near tau ~ offset, so the max over such a grid on a fixed tau range
/// tracks the offsets rather than the O(tau) rate.
std::vector<MoEModel> default_sweep_grid(const TeacherSpec& teacher);

struct ShapeDerivativeCheck {
  double fd_derivative = 0.0;
  double fd_std_error = 0.0;
  double surface_formula = 0.0;
  double surface_std_error = 0.0;
  double abs_diff = 0.0;
  double combined_std_error = 0.0;
  double sigma_nu = 0.0;
  bool db_too_large = false;  // db > 1e-3 sigma_nu

  [[nodiscard]] bool agrees() const;  // abs_diff <= max(1e-3, 3 combined_std_error)
};

/// d L_0 / d b for a binary router S(x) = a_1 - a_2 = <nu, x> + b, where b
/// shifts the first logit. Increasing b grows expert 1's cell {S >= 0}, so
///   d L_0 / d b = + E[D_12(X) | S(X) = 0] * p_S(0),
///   D_12 = (f_1 - mu)^2 - (f_2 - mu)^2.
/// The finite difference streams n samples; the surface term samples the
/// exact conditional Gaussian on the hyperplane {S = 0} with n draws.
ShapeDerivativeCheck hard_risk_bias_derivative_check(const MoEModel& model, const TeacherSpec& teacher,
                                                     const GaussianLaw& law, double db, std::size_t n,
                                                     std::uint64_t seed);

}  // namespace moebl
