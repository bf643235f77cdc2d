#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace moebl {

/// Router logits a(x) for K >= 2 experts. Entries are finite.
class LogitVector {
 public:
  explicit LogitVector(Eigen::VectorXd values);
  LogitVector(std::initializer_list<double> values);

  [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }
  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  [[nodiscard]] double operator[](std::size_t k) const { return values_(static_cast<Eigen::Index>(k)); }

 private:
  Eigen::VectorXd values_;
};

/// Affine logits a_k(x) = <weight.row(k), x> + bias(k).
class LinearRouter {
 public:
  LinearRouter(Eigen::MatrixXd weight, Eigen::VectorXd bias);

  [[nodiscard]] std::size_t num_experts() const noexcept { return static_cast<std::size_t>(weight_.rows()); }
  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(weight_.cols()); }
  [[nodiscard]] const Eigen::MatrixXd& weight() const noexcept { return weight_; }
  [[nodiscard]] const Eigen::VectorXd& bias() const noexcept { return bias_; }

  [[nodiscard]] LogitVector logits(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Logits for every row of an n x d point matrix, as an n x K matrix.
  [[nodiscard]] Eigen::MatrixXd logits_batch(const Eigen::Ref<const Eigen::MatrixXd>& points) const;

  /// Binary router whose logit difference a_1 - a_2 is <normal, x> + offset.
  static LinearRouter binary(const Eigen::VectorXd& normal, double offset);

 private:
  Eigen::MatrixXd weight_;
  Eigen::VectorXd bias_;
};

/// K affine experts f_k(x) = <weights.row(k), x> + biases(k).
class LinearExpertSet {
 public:
  LinearExpertSet(Eigen::MatrixXd weights, Eigen::VectorXd biases);

  [[nodiscard]] std::size_t num_experts() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(weights_.cols()); }
  [[nodiscard]] const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  [[nodiscard]] const Eigen::VectorXd& biases() const noexcept { return biases_; }

  [[nodiscard]] double predict(std::size_t k, const Eigen::Ref<const Eigen::VectorXd>& x) const;
  [[nodiscard]] Eigen::VectorXd predict_all(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  [[nodiscard]] Eigen::MatrixXd predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& points) const;

 private:
  Eigen::MatrixXd weights_;
  Eigen::VectorXd biases_;
};

/// Router + experts + temperature. temperature == 0 selects hard routing.
class MoEModel {
 public:
  MoEModel(LinearRouter router, LinearExpertSet experts, double temperature);

  [[nodiscard]] const LinearRouter& router() const noexcept { return router_; }
  [[nodiscard]] const LinearExpertSet& experts() const noexcept { return experts_; }
  [[nodiscard]] double temperature() const noexcept { return temperature_; }
  [[nodiscard]] std::size_t num_experts() const noexcept { return router_.num_experts(); }
  [[nodiscard]] std::size_t dim() const noexcept { return router_.dim(); }
  [[nodiscard]] bool is_hard() const noexcept { return temperature_ == 0.0; }

  [[nodiscard]] MoEModel with_temperature(double tau) const;

 private:
  LinearRouter router_;
  LinearExpertSet experts_;
  double temperature_;
};

/// Temperature-tau softmax of the logits, computed after subtracting the max logit.
Eigen::VectorXd softmax_weights(const LogitVector& z, double tau);

/// Largest logit minus the second largest (zero on ties).
double top_two_margin(const LogitVector& z);

/// Smallest |z_k - z_l| over unordered pairs k != l.
double pairwise_min_margin(const LogitVector& z);

/// Zero-based index of the winning expert; ties go to the smallest index.
std::size_t hard_winner(const LogitVector& z);

double soft_predict(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);
double hard_predict(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// soft_predict when temperature > 0, hard_predict at the tau = 0 sentinel.
double predict(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

struct OffWinnerMass {
  double actual;  // 1 - max_k p_k
  double bound;   // (K-1) exp(-Delta / tau)
};

OffWinnerMass offwinner_mass_and_bound(const LogitVector& z, double tau);

}  // namespace moebl
