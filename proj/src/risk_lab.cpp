#include "moebl/risk_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "moebl/boundary_mass.hpp"
#include "moebl/kernels.hpp"
#include "moebl/numerics.hpp"

namespace moebl {

namespace {

// Neumaier-compensated sum, so that splitting a sum by an indicator and
// re-adding agrees with the direct sum to ~1 ulp regardless of n.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::fabs(sum_) >= std::fabs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct Predictions {
  Eigen::VectorXd soft;
  Eigen::VectorXd hard;
  Eigen::VectorXd shift;  // h_tau - h_0 as sum_{k != w} p_k (f_k - f_w), free of cancellation
  Eigen::VectorXd delta;
  double B_f = 0.0;
};

// Generic K path, one pass over rows of the logit and expert matrices.
// The softmax arithmetic mirrors softmax_weights (shift by the max logit,
// std::exp, divide by the total).
Predictions predictions_on(const MoEModel& model, const Eigen::Ref<const Eigen::MatrixXd>& points, bool want_soft) {
  const Eigen::MatrixXd z = model.router().logits_batch(points);
  const Eigen::MatrixXd f = model.experts().predict_batch(points);
  const Eigen::Index n = z.rows();
  const Eigen::Index K = z.cols();
  const double tau = model.temperature();
  Predictions out;
  out.hard.resize(n);
  out.delta.resize(n);
  if (want_soft) {
    out.soft.resize(n);
    out.shift.resize(n);
  }
  out.B_f = n > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
  std::vector<double> w(static_cast<std::size_t>(K));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    double top = z(i, 0);
    for (Eigen::Index k = 1; k < K; ++k) {
      if (z(i, k) > top) {
        top = z(i, k);
        arg = k;
      }
    }
    double second = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
      if (k != arg) second = std::max(second, z(i, k));
    }
    out.hard(i) = f(i, arg);
    out.delta(i) = top - second;
    if (!want_soft) continue;
    double total = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      w[static_cast<std::size_t>(k)] = std::exp((z(i, k) - top) / tau);
      total += w[static_cast<std::size_t>(k)];
    }
    double h = 0.0;
    double shift = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double pk = w[static_cast<std::size_t>(k)] / total;
      h += pk * f(i, k);
      if (k != arg) shift += pk * (f(i, k) - f(i, arg));
    }
    out.soft(i) = h;
    out.shift(i) = shift;
  }
  return out;
}

void require_pair(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch) {
  if (batch.n() < 2) throw std::invalid_argument("risk estimation needs a batch of at least two samples");
  if (student.dim() != batch.dim() || teacher.router.dim() != batch.dim() || teacher.experts.dim() != batch.dim()) {
    throw std::invalid_argument("student, teacher and batch dimensions must agree");
  }
  if (teacher.router.num_experts() != teacher.experts.num_experts()) {
    throw std::invalid_argument("teacher router and experts disagree on K");
  }
}

void require_soft(const MoEModel& student) {
  if (student.is_hard()) throw std::invalid_argument("this check needs a soft student (tau > 0)");
}

McEstimate squared_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& h) {
  const Eigen::VectorXd r = (y - h).array().square().matrix();
  return mc_mean(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
}

RiskEstimate generic_with_targets(const MoEModel& student, const SampleBatch& batch, const Eigen::VectorXd& y) {
  const Predictions p = predictions_on(student, batch.points, !student.is_hard());
  RiskEstimate out;
  out.hard = squared_mean(y, p.hard);
  out.soft = student.is_hard() ? out.hard : squared_mean(y, p.soft);
  out.gap = std::fabs(out.soft.value - out.hard.value);
  out.tau = student.temperature();
  return out;
}

RiskEstimate binary_with_targets(const MoEModel& student, const SampleBatch& batch, const Eigen::VectorXd& y) {
  if (student.is_hard()) return generic_with_targets(student, batch, y);
  const Eigen::MatrixXd z = student.router().logits_batch(batch.points);
  const Eigen::MatrixXd f = student.experts().predict_batch(batch.points);
  const Eigen::VectorXd score = z.col(0) - z.col(1);
  const Eigen::VectorXd f1 = f.col(0);
  const Eigen::VectorXd f2 = f.col(1);
  const auto n = static_cast<std::size_t>(score.size());
  std::vector<double> soft(n);
  std::vector<double> hard(n);
  kernels::active_kernels().binary_losses(score.data(), f1.data(), f2.data(), y.data(), n,
                                          1.0 / student.temperature(), soft.data(), hard.data());
  RiskEstimate out;
  out.soft = mc_mean(soft);
  out.hard = mc_mean(hard);
  out.gap = std::fabs(out.soft.value - out.hard.value);
  out.tau = student.temperature();
  return out;
}

RiskEstimate risks_with_targets(const MoEModel& student, const SampleBatch& batch, const Eigen::VectorXd& y) {
  return student.num_experts() == 2 ? binary_with_targets(student, batch, y)
                                    : generic_with_targets(student, batch, y);
}

}  // namespace

Eigen::VectorXd TeacherSpec::targets(const SampleBatch& batch) const {
  return predictions_on(model(), batch.points, false).hard;
}

BatchPredictions batch_predictions(const MoEModel& model, const SampleBatch& batch) {
  if (batch.dim() != model.dim()) throw std::invalid_argument("batch dimension does not match the model");
  Predictions p = predictions_on(model, batch.points, !model.is_hard());
  return {std::move(p.soft), std::move(p.hard), std::move(p.delta), p.B_f};
}

RiskEstimate estimate_risks(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch) {
  require_pair(student, teacher, batch);
  return risks_with_targets(student, batch, teacher.targets(batch));
}

RiskEstimate estimate_risks_generic(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch) {
  require_pair(student, teacher, batch);
  return generic_with_targets(student, batch, teacher.targets(batch));
}

double pointwise_gap_bound_check(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch) {
  require_pair(student, teacher, batch);
  require_soft(student);
  const Predictions p = predictions_on(student, batch.points, true);
  // Evaluated so that each rounding step is monotone in the bound's direction:
  // p_k <= exp(-Delta/tau) and |f_k - f_w| <= 2 B_f hold exactly in floating point.
  const double km1 = static_cast<double>(student.num_experts() - 1);
  const double tau = student.temperature();
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < p.hard.size(); ++i) {
    const double lhs = std::fabs(p.shift(i));
    const double rhs = km1 * (std::exp(-p.delta(i) / tau) * (2.0 * p.B_f));
    worst = std::max(worst, lhs - rhs);
  }
  return worst;
}

GapBoundChain gap_bound_chain(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch,
                              double tau) {
  const MoEModel soft = student.with_temperature(tau);
  require_pair(soft, teacher, batch);
  require_soft(soft);
  const Eigen::VectorXd y = teacher.targets(batch);
  const Predictions p = predictions_on(soft, batch.points, true);
  const double n = static_cast<double>(batch.n());

  GapBoundChain out;
  out.constants.B_Y = y.cwiseAbs().maxCoeff();
  out.constants.B_f = p.B_f;
  out.constants.K = soft.num_experts();

  CompensatedSum soft_risk;
  CompensatedSum hard_risk;
  CompensatedSum abs_diff;
  CompensatedSum tail;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    soft_risk.add((y(i) - p.soft(i)) * (y(i) - p.soft(i)));
    hard_risk.add((y(i) - p.hard(i)) * (y(i) - p.hard(i)));
    abs_diff.add(std::fabs(p.shift(i)));
    tail.add(std::exp(-p.delta(i) / tau));
  }
  const double B_Y = out.constants.B_Y;
  const double B_f = out.constants.B_f;
  out.gap = std::fabs(soft_risk.value() - hard_risk.value()) / n;
  out.middle = (2.0 * B_Y + 2.0 * B_f) * abs_diff.value() / n;
  out.mean_tail = tail.value() / n;
  out.chain_bound = 4.0 * B_f * (B_Y + B_f) * static_cast<double>(out.constants.K - 1) * out.mean_tail;
  return out;
}

double RiskSplit::additivity_error() const {
  return std::fabs(interior + boundary - total) / std::max(std::fabs(total), std::numeric_limits<double>::min());
}

RiskSplit risk_decomposition(const MoEModel& student, const TeacherSpec& teacher, const SampleBatch& batch,
                             double epsilon) {
  require_pair(student, teacher, batch);
  require_soft(student);
  const Eigen::VectorXd mu = teacher.targets(batch);
  const Predictions p = predictions_on(student, batch.points, true);
  const auto amb = ambiguity_indicator(student.router(), batch, epsilon, student.temperature());

  CompensatedSum interior;
  CompensatedSum boundary;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double r = (mu(i) - p.soft(i)) * (mu(i) - p.soft(i));
    if (amb[static_cast<std::size_t>(i)] != 0) {
      boundary.add(r);
      ++hits;
    } else {
      interior.add(r);
    }
  }
  CompensatedSum total;
  for (Eigen::Index i = 0; i < mu.size(); ++i) total.add((mu(i) - p.soft(i)) * (mu(i) - p.soft(i)));

  const double n = static_cast<double>(batch.n());
  const double B = mu.cwiseAbs().maxCoeff();
  RiskSplit out;
  out.interior = interior.value() / n;
  out.boundary = boundary.value() / n;
  out.total = total.value() / n;
  out.ambiguity_fraction = static_cast<double>(hits) / n;
  out.boundary_bound = (2.0 * B * B + 2.0 * p.B_f * p.B_f) * out.ambiguity_fraction;
  out.epsilon = epsilon;
  out.tau = student.temperature();
  return out;
}

GapSweep uniform_gap_sweep(const TeacherSpec& teacher, std::span<const MoEModel> param_grid,
                           std::span<const double> tau_grid, const GaussianLaw& law, std::size_t n,
                           std::uint64_t seed) {
  if (param_grid.empty() || tau_grid.empty()) throw std::invalid_argument("gap sweep grids must be nonempty");
  const SampleBatch batch = gaussian_sample(law, n, seed);
  for (const MoEModel& m : param_grid) require_pair(m, teacher, batch);
  const Eigen::VectorXd y = teacher.targets(batch);

  GapSweep out;
  for (double tau : tau_grid) {
    if (!(tau > 0.0)) throw std::invalid_argument("gap sweep temperatures must be positive");
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t g = 0; g < param_grid.size(); ++g) {
      const double gap = risks_with_targets(param_grid[g].with_temperature(tau), batch, y).gap;
      if (gap > best) {
        best = gap;
        arg = g;
      }
    }
    out.tau.push_back(tau);
    out.max_gap.push_back(best);
    out.argmax.push_back(arg);
  }
  const bool positive = std::all_of(out.max_gap.begin(), out.max_gap.end(), [](double g) { return g > 0.0; });
  if (out.tau.size() >= 2 && positive) {
    out.slope = log_log_slope(out.tau, out.max_gap);
    out.fittable = true;
  }
  return out;
}

std::vector<MoEModel> default_sweep_grid(const TeacherSpec& teacher) {
  if (teacher.router.num_experts() != 2) throw std::invalid_argument("default sweep grid needs a binary teacher");
  const Eigen::MatrixXd& W = teacher.experts.weights();
  const Eigen::VectorXd& c = teacher.experts.biases();
  const Eigen::RowVectorXd w_mid = 0.5 * (W.row(0) + W.row(1));
  const Eigen::RowVectorXd w_half = 0.5 * (W.row(0) - W.row(1));
  const double c_mid = 0.5 * (c(0) + c(1));
  const double c_half = 0.5 * (c(0) - c(1));

  std::vector<MoEModel> grid;
  for (double sharp : {0.5, 0.75, 1.0, 1.25, 1.5}) {
    const LinearRouter router(sharp * teacher.router.weight(), sharp * teacher.router.bias());
    for (double scale : {0.5, 0.75, 1.0, 1.25, 1.5}) {
      Eigen::MatrixXd ew(2, W.cols());
      ew.row(0) = w_mid + scale * w_half;
      ew.row(1) = w_mid - scale * w_half;
      Eigen::VectorXd eb(2);
      eb << c_mid + scale * c_half, c_mid - scale * c_half;
      grid.emplace_back(router, LinearExpertSet(ew, eb), 1.0);
    }
  }
  return grid;
}

bool ShapeDerivativeCheck::agrees() const { return abs_diff <= std::max(1e-3, 3.0 * combined_std_error); }

ShapeDerivativeCheck hard_risk_bias_derivative_check(const MoEModel& model, const TeacherSpec& teacher,
                                                     const GaussianLaw& law, double db, std::size_t n,
                                                     std::uint64_t seed) {
  if (model.num_experts() != 2) throw std::invalid_argument("shape-derivative check needs K = 2");
  if (model.dim() != law.dim() || teacher.router.dim() != law.dim()) {
    throw std::invalid_argument("model, teacher and law dimensions must agree");
  }
  if (!(db > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  if (n < 2) throw std::invalid_argument("shape-derivative check needs n >= 2");

  const Eigen::VectorXd nu = (model.router().weight().row(0) - model.router().weight().row(1)).transpose();
  const double b = model.router().bias()(0) - model.router().bias()(1);
  const Eigen::VectorXd sigma_nu_vec = law.covariance() * nu;
  const double var = nu.dot(sigma_nu_vec);
  if (!(var > 0.0)) throw std::invalid_argument("router score must be non-degenerate under the law");
  const double sigma = std::sqrt(var);
  const double mean_s = nu.dot(law.mean()) + b;
  const double density_at_zero = normal_pdf(mean_s / sigma) / sigma;
  const MoEModel teacher_model = teacher.model();

  auto loss_contrast = [&](const Eigen::MatrixXd& points) {
    const Eigen::MatrixXd f = model.experts().predict_batch(points);
    const Eigen::VectorXd mu = predictions_on(teacher_model, points, false).hard;
    return Eigen::VectorXd(((f.col(0) - mu).array().square() - (f.col(1) - mu).array().square()).matrix());
  };

  ShapeDerivativeCheck out;
  out.sigma_nu = sigma;
  out.db_too_large = db > 1e-3 * sigma;

  // Central difference on one stream: L_0(b + db) - L_0(b - db) only changes
  // on the samples with -db <= S < db, where the winner flips from 2 to 1.
  {
    CompensatedSum s1;
    CompensatedSum s2;
    const double inv = 1.0 / (2.0 * db);
    for_each_sample_chunk(law, n, seed, [&](const Eigen::MatrixXd& chunk, std::size_t) {
      const Eigen::VectorXd s = (chunk * nu).array() + b;
      const Eigen::VectorXd D = loss_contrast(chunk);
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) >= -db && s(i) < db) {
          const double c = D(i) * inv;
          s1.add(c);
          s2.add(c * c);
        }
      }
    });
    const double nd = static_cast<double>(n);
    const double mean = s1.value() / nd;
    const double var_c = std::max(0.0, (s2.value() - nd * mean * mean) / (nd - 1.0));
    out.fd_derivative = mean;
    out.fd_std_error = std::sqrt(var_c / nd);
  }

  // Surface term: exact conditional law of X given S = 0,
  //   X = m + (Sigma nu / var) (0 - mean_s) + (Y - Sigma nu (nu' Y) / var),  Y ~ N(0, Sigma).
  {
    const GaussianLaw centred(Eigen::VectorXd::Zero(law.mean().size()), law.covariance());
    const Eigen::RowVectorXd shift = (law.mean() - sigma_nu_vec * (mean_s / var)).transpose();
    std::vector<double> d12;
    d12.reserve(n);
    for_each_sample_chunk(centred, n, seed ^ 0xa5a5f00dcafe1234ULL, [&](const Eigen::MatrixXd& chunk, std::size_t) {
      const Eigen::VectorXd proj = chunk * nu;
      Eigen::MatrixXd x = chunk - proj * (sigma_nu_vec.transpose() / var);
      x.rowwise() += shift;
      const Eigen::VectorXd D = loss_contrast(x);
      d12.insert(d12.end(), D.data(), D.data() + D.size());
    });
    const McEstimate e = mc_mean(d12);
    out.surface_formula = e.value * density_at_zero;
    out.surface_std_error = e.std_error * density_at_zero;
  }

  out.abs_diff = std::fabs(out.fd_derivative - out.surface_formula);
  out.combined_std_error = std::hypot(out.fd_std_error, out.surface_std_error);
  return out;
}

}  // namespace moebl
