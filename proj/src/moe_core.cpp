#include "moebl/moe_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace moebl {

namespace {

void require_dim(const LinearRouter& router, Eigen::Index d) {
  if (static_cast<Eigen::Index>(router.dim()) != d) {
    throw std::invalid_argument("input dimension does not match the router");
  }
}

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("temperature must be positive and finite");
  }
}

}  // namespace

LogitVector::LogitVector(Eigen::VectorXd values) : values_(std::move(values)) {
  if (values_.size() < 2) throw std::invalid_argument("LogitVector needs K >= 2 entries");
  if (!values_.allFinite()) throw std::invalid_argument("LogitVector entries must be finite");
}

LogitVector::LogitVector(std::initializer_list<double> values)
    : LogitVector(Eigen::Map<const Eigen::VectorXd>(values.begin(), static_cast<Eigen::Index>(values.size()))) {}

LinearRouter::LinearRouter(Eigen::MatrixXd weight, Eigen::VectorXd bias)
    : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rows() < 2) throw std::invalid_argument("router needs K >= 2 rows");
  if (weight_.cols() < 1) throw std::invalid_argument("router needs d >= 1");
  if (bias_.size() != weight_.rows()) throw std::invalid_argument("router bias length must equal K");
  if (!weight_.allFinite() || !bias_.allFinite()) throw std::invalid_argument("router parameters must be finite");
}

LogitVector LinearRouter::logits(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  require_dim(*this, x.size());
  return LogitVector(weight_ * x + bias_);
}

Eigen::MatrixXd LinearRouter::logits_batch(const Eigen::Ref<const Eigen::MatrixXd>& points) const {
  require_dim(*this, points.cols());
  Eigen::MatrixXd out = points * weight_.transpose();
  out.rowwise() += bias_.transpose();
  return out;
}

LinearRouter LinearRouter::binary(const Eigen::VectorXd& normal, double offset) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, normal.size());
  w.row(0) = normal.transpose();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(2);
  b(0) = offset;
  return {std::move(w), std::move(b)};
}

LinearExpertSet::LinearExpertSet(Eigen::MatrixXd weights, Eigen::VectorXd biases)
    : weights_(std::move(weights)), biases_(std::move(biases)) {
  if (weights_.rows() < 1 || weights_.cols() < 1) throw std::invalid_argument("expert set must be non-empty");
  if (biases_.size() != weights_.rows()) throw std::invalid_argument("expert bias length must equal K");
  if (!weights_.allFinite() || !biases_.allFinite()) throw std::invalid_argument("expert parameters must be finite");
}

double LinearExpertSet::predict(std::size_t k, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (k >= num_experts()) throw std::invalid_argument("expert index out of range");
  if (x.size() != weights_.cols()) throw std::invalid_argument("input dimension does not match the experts");
  const auto row = static_cast<Eigen::Index>(k);
  return weights_.row(row).dot(x) + biases_(row);
}

Eigen::VectorXd LinearExpertSet::predict_all(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != weights_.cols()) throw std::invalid_argument("input dimension does not match the experts");
  return weights_ * x + biases_;
}

Eigen::MatrixXd LinearExpertSet::predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& points) const {
  if (points.cols() != weights_.cols()) throw std::invalid_argument("input dimension does not match the experts");
  Eigen::MatrixXd out = points * weights_.transpose();
  out.rowwise() += biases_.transpose();
  return out;
}

MoEModel::MoEModel(LinearRouter router, LinearExpertSet experts, double temperature)
    : router_(std::move(router)), experts_(std::move(experts)), temperature_(temperature) {
  if (router_.num_experts() != experts_.num_experts()) {
    throw std::invalid_argument("router and expert set disagree on K");
  }
  if (router_.dim() != experts_.dim()) throw std::invalid_argument("router and expert set disagree on d");
  if (!(temperature_ >= 0.0) || !std::isfinite(temperature_)) {
    throw std::invalid_argument("temperature must be >= 0 (0 selects hard routing)");
  }
}

MoEModel MoEModel::with_temperature(double tau) const { return {router_, experts_, tau}; }

Eigen::VectorXd softmax_weights(const LogitVector& z, double tau) {
  require_tau(tau);
  const Eigen::VectorXd& v = z.values();
  const double top = v.maxCoeff();
  // std::exp rather than Eigen's packet exp: the tail bound compares against
  // std::exp(-Delta / tau) and must see the same rounding.
  Eigen::VectorXd p(v.size());
  double total = 0.0;
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    p(k) = std::exp((v(k) - top) / tau);
    total += p(k);
  }
  p /= total;
  return p;
}

double top_two_margin(const LogitVector& z) {
  const Eigen::VectorXd& v = z.values();
  Eigen::Index arg = 0;
  const double top = v.maxCoeff(&arg);
  double second = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (k != arg) second = std::max(second, v(k));
  }
  return top - second;
}

double pairwise_min_margin(const LogitVector& z) {
  std::vector<double> sorted(z.values().begin(), z.values().end());
  std::sort(sorted.begin(), sorted.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < sorted.size(); ++k) best = std::min(best, sorted[k] - sorted[k - 1]);
  return best;
}

std::size_t hard_winner(const LogitVector& z) {
  // maxCoeff returns the first maximiser, which is the min-index tie rule.
  Eigen::Index arg = 0;
  z.values().maxCoeff(&arg);
  return static_cast<std::size_t>(arg);
}

double soft_predict(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  require_tau(model.temperature());
  const Eigen::VectorXd p = softmax_weights(model.router().logits(x), model.temperature());
  return p.dot(model.experts().predict_all(x));
}

double hard_predict(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return model.experts().predict(hard_winner(model.router().logits(x)), x);
}

double predict(const MoEModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return model.is_hard() ? hard_predict(model, x) : soft_predict(model, x);
}

OffWinnerMass offwinner_mass_and_bound(const LogitVector& z, double tau) {
  const Eigen::VectorXd p = softmax_weights(z, tau);
  // Summing the non-winning weights avoids the cancellation in 1 - p_max.
  const std::size_t winner = hard_winner(z);
  double off = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (k != winner) off += p(static_cast<Eigen::Index>(k));
  }
  const double k_minus_one = static_cast<double>(z.size() - 1);
  return {off, k_minus_one * std::exp(-top_two_margin(z) / tau)};
}

}  // namespace moebl
