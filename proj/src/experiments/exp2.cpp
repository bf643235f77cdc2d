#include <chrono>

#include "moebl/boundary_mass.hpp"
#include "moebl/experiments.hpp"
#include "moebl/numerics.hpp"

namespace moebl {

namespace {

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

// Samples whose hard winner changes when the first logit is raised by delta.
McEstimate flip_rate(const LinearRouter& router, const SampleBatch& batch, double delta) {
  const Eigen::MatrixXd z = router.logits_batch(batch.points);
  std::size_t flips = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const bool before = z(i, 0) >= z(i, 1);
    const bool after = z(i, 0) + delta >= z(i, 1);
    flips += before != after ? 1 : 0;
  }
  return mc_proportion(flips, batch.n());
}

}  // namespace

Exp2Result run_exp2(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const GaussianLaw law = GaussianLaw::standard(config.dim);
  const SampleBatch batch = gaussian_sample(law, config.n, config.seed);
  const Eigen::VectorXd normal = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(config.dim), 0);

  Exp2Result out;
  std::vector<double> bm, gap, flip;
  for (double b : config.offsets) {
    const TeacherSpec teacher = binary_gaussian_teacher(config.dim, b, config.contrast_norm);
    const MoEModel student = teacher.model().with_temperature(config.tau);
    Exp2Row row;
    row.offset = b;
    row.bm = estimate_bm_top(student, batch, 2.0 * config.tau);
    row.bm_analytic = analytic_slab_prob(LinearScore::from(normal, b, law), 2.0 * config.tau);
    row.risk = estimate_risks(student, teacher, batch);
    row.flip = flip_rate(teacher.router, batch, config.perturbation);
    bm.push_back(row.bm.estimate.value);
    gap.push_back(row.risk.gap);
    flip.push_back(row.flip.value);
    out.rows.push_back(row);
  }
  if (bm.size() >= 2) {
    out.corr_gap_mass = pearson(gap, bm);
    out.corr_flip_mass = pearson(flip, bm);
  }
  out.gap_decreasing = strictly_decreasing(gap);
  out.flip_decreasing = strictly_decreasing(flip);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace moebl
