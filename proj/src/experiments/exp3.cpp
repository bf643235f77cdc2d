#include <chrono>

#include "moebl/experiments.hpp"
#include "moebl/sampling.hpp"

namespace moebl {

namespace {

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

}  // namespace

Exp3Result run_exp3(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t d = config.dim;

  // Teacher separator and initial direction get their own streams off the run seed.
  Exp3Result out;
  out.v = standard_normal_vector(d, chunk_stream_seed(config.seed, 0x7e1)).normalized();
  const SymmetrySpec spec(out.v, config.teacher_contrast * out.v,
                          Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
  const SampleBatch batch = gaussian_sample(spec.law(), config.n, config.seed);
  const Eigen::VectorXd y = spec.targets(batch);
  const LinearExpertSet experts = contrast_experts(batch, y, config.student_contrast * spec.d_star);
  out.u0 = initial_direction(out.v, config.initial_alignment, config.u0_norm, chunk_stream_seed(config.seed, 0x7e2));
  out.rayleigh_analytic = rayleigh_analytic(ResponseFn::sign(), spec);

  std::vector<double> entropy, bm, unorm;
  out.min_alignment = 1.0;
  for (double tau : config.taus) {
    TrainSettings settings;
    settings.eta = config.eta;
    settings.tau = tau;
    settings.steps = config.steps;
    settings.record_every = config.record_every;
    Exp3Run run{tau, reduced_router_train(spec, experts, batch, settings, out.u0)};
    const auto& f = run.trace.final();
    entropy.push_back(f.entropy);
    bm.push_back(f.boundary_mass);
    unorm.push_back(f.u.norm());
    out.min_alignment = std::min(out.min_alignment, f.alignment);
    out.any_diverged = out.any_diverged || run.trace.diverged;
    out.runs.push_back(std::move(run));
  }
  out.entropy_increasing = strictly_increasing(entropy);
  out.bm_increasing = strictly_increasing(bm);
  out.unorm_increasing = strictly_increasing(unorm);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace moebl
