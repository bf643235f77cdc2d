#include <chrono>
#include <cmath>
#include <limits>

#include "moebl/boundary_mass.hpp"
#include "moebl/experiments.hpp"
#include "moebl/numerics.hpp"

namespace moebl {

TeacherSpec binary_gaussian_teacher(std::size_t dim, double offset, double contrast_norm) {
  if (dim < 2) throw std::invalid_argument("binary_gaussian_teacher: dim must be >= 2");
  const auto d = static_cast<Eigen::Index>(dim);
  const Eigen::VectorXd normal = Eigen::VectorXd::Unit(d, 0);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, d);
  w(0, 1) = 0.5 * contrast_norm;
  w(1, 1) = -0.5 * contrast_norm;
  return {LinearRouter::binary(normal, offset), LinearExpertSet(w, Eigen::VectorXd::Zero(2))};
}

Exp1Result run_exp1(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const TeacherSpec teacher = binary_gaussian_teacher(config.dim, 0.0, config.contrast_norm);
  const GaussianLaw law = GaussianLaw::standard(config.dim);
  const SampleBatch batch = gaussian_sample(law, config.n, config.seed);
  const LinearScore score = LinearScore::from(Eigen::VectorXd::Unit(static_cast<Eigen::Index>(config.dim), 0), 0.0, law);

  Exp1Result out;
  std::vector<double> small_tau, small_bm, small_gap, all_bm, all_gap;
  for (double tau : config.taus) {
    const MoEModel student = teacher.model().with_temperature(tau);
    Exp1Row row;
    row.tau = tau;
    row.bm = estimate_bm_top(student, batch, 2.0 * tau);
    row.bm_analytic = analytic_slab_prob(score, 2.0 * tau);
    row.risk = estimate_risks(student, teacher, batch);
    row.gap_over_tau = row.risk.gap / tau;
    all_bm.push_back(row.bm.estimate.value);
    all_gap.push_back(row.risk.gap);
    if (tau <= 0.1 + 1e-12 && row.bm.estimate.value > 0.0 && row.risk.gap > 0.0) {
      small_tau.push_back(tau);
      small_bm.push_back(row.bm.estimate.value);
      small_gap.push_back(row.risk.gap);
    }
    out.rows.push_back(row);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.slope_mass = small_tau.size() >= 2 ? log_log_slope(small_tau, small_bm) : nan;
  out.slope_gap = small_tau.size() >= 2 ? log_log_slope(small_tau, small_gap) : nan;
  out.correlation = all_bm.size() >= 2 ? pearson(all_bm, all_gap) : nan;
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace moebl
