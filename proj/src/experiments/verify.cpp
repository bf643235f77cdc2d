#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "moebl/boundary_mass.hpp"
#include "moebl/experiments.hpp"
#include "moebl/kernels.hpp"
#include "moebl/numerics.hpp"

namespace moebl {

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

Eigen::VectorXd naive_softmax(const Eigen::VectorXd& z, double tau) {
  const Eigen::VectorXd e = (z / tau).array().exp().matrix();
  return e / e.sum();
}

namespace {

using Clock = std::chrono::steady_clock;

struct Rng {
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  std::mt19937_64 gen;
  double normal(double s = 1.0) { return std::normal_distribution<double>(0.0, s)(gen); }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen); }
  Eigen::VectorXd vec(Eigen::Index d, double s = 1.0) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = normal(s);
    return v;
  }
  Eigen::MatrixXd mat(Eigen::Index r, Eigen::Index c, double s = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(s);
    return m;
  }
  // Well-conditioned random covariance.
  Eigen::MatrixXd covariance(Eigen::Index d) {
    const Eigen::MatrixXd a = mat(d, d);
    return a * a.transpose() / static_cast<double>(d) + 0.5 * Eigen::MatrixXd::Identity(d, d);
  }
  MoEModel model(Eigen::Index K, Eigen::Index d, double tau) {
    return {LinearRouter(mat(K, d), vec(K, 0.5)), LinearExpertSet(mat(K, d), vec(K)), tau};
  }
};

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed(std::uint64_t k) const { return chunk_stream_seed(seed_, 0x5e000 + k); }

  void add(std::string name, std::string tol, double observed, bool passed, std::string detail = {}) {
    report.checks.push_back({std::move(name), std::move(tol), observed, passed, std::move(detail)});
  }

  VerifyReport report;

 private:
  std::uint64_t seed_;
};

std::string fmt(double v) { return format6(v); }

double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

// ---- moe_core ----

// Survives logits of size 1e4: finite weights that sum to one.
bool softmax_overflow_check(Eigen::VectorXd (*softmax)(const Eigen::VectorXd&, double)) {
  const Eigen::VectorXd z = (Eigen::VectorXd(4) << 1e4, 0.5e4, -1e4, 1e4 - 1.0).finished();
  const Eigen::VectorXd p = softmax(z, 1.0);
  return p.allFinite() && std::fabs(p.sum() - 1.0) <= 1e-12;
}

Eigen::VectorXd guarded_softmax(const Eigen::VectorXd& z, double tau) { return softmax_weights(LogitVector(z), tau); }

void check_moe_core(Suite& s) {
  {
    Rng rng(s.seed(1));
    double worst = 0.0;
    for (int i = 0; i < 10'000; ++i) {
      const int K = rng.integer(2, 8);
      const Eigen::VectorXd z = rng.vec(K, 3.0);
      const double c = rng.uniform(-10.0, 10.0);
      const double tau = std::pow(10.0, rng.uniform(-2.0, 0.0));
      const Eigen::VectorXd shifted = (z.array() + c).matrix();
      worst = std::max(worst, max_abs(softmax_weights(LogitVector(shifted), tau) - softmax_weights(LogitVector(z), tau)));
    }
    s.add("moe_core.softmax_gauge_invariance", "max diff <= 1e-12 (1e4 draws)", worst, worst <= 1e-12);
  }
  {
    Rng rng(s.seed(2));
    const double taus[] = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
    std::size_t tail_bad = 0, nest_bad = 0;
    double worst = -1.0;
    for (int i = 0; i < 100'000; ++i) {
      const int K = rng.integer(2, 8);
      const double scale = std::pow(10.0, rng.uniform(-2.0, 1.0));
      const LogitVector z(rng.vec(K, scale));
      const double tau = taus[rng.integer(0, 6)];
      const OffWinnerMass m = offwinner_mass_and_bound(z, tau);
      if (!(m.actual <= m.bound)) ++tail_bad;
      worst = std::max(worst, m.actual - m.bound);
      if (!(pairwise_min_margin(z) <= top_two_margin(z))) ++nest_bad;
    }
    s.add("moe_core.softmax_tail_inequality", "violations == 0 (1e5 draws)", static_cast<double>(tail_bad),
          tail_bad == 0, "max(actual - bound) = " + fmt(worst));
    s.add("moe_core.margin_nesting", "violations == 0 (1e5 draws)", static_cast<double>(nest_bad), nest_bad == 0);
  }
  {
    Rng rng(s.seed(3));
    std::size_t bad = 0;
    for (int i = 0; i < 500; ++i) {
      const int K = rng.integer(2, 5);
      const MoEModel m = rng.model(K, 3, 0.1);
      const Eigen::VectorXd x = rng.vec(3);
      const LogitVector z = m.router().logits(x);
      const double delta = top_two_margin(z);
      if (!(delta > 0.0)) continue;
      const double hard = hard_predict(m, x);
      const double B_f = m.experts().predict_all(x).cwiseAbs().maxCoeff();
      double prev = std::numeric_limits<double>::infinity();
      for (double tau : {0.1, 0.01, 0.001}) {
        const double diff = std::fabs(soft_predict(m.with_temperature(tau), x) - hard);
        const double bound = 2.0 * B_f * (K - 1) * std::exp(-delta / tau);
        if (diff > bound || diff > prev || (prev > 0.0 && diff == prev)) ++bad;
        prev = diff;
      }
    }
    s.add("moe_core.zero_temperature_consistency", "decreasing and <= 2 B_f (K-1) e^{-Delta/tau}",
          static_cast<double>(bad), bad == 0);
  }
  {
    Rng rng(s.seed(4));
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const int K = rng.integer(2, 6);
      const MoEModel m = rng.model(K, 3, rng.uniform(0.05, 1.0));
      std::vector<int> perm(static_cast<std::size_t>(K));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng.gen);
      Eigen::MatrixXd rw(K, 3), ew(K, 3);
      Eigen::VectorXd rb(K), eb(K);
      for (int k = 0; k < K; ++k) {
        rw.row(k) = m.router().weight().row(perm[k]);
        rb(k) = m.router().bias()(perm[k]);
        ew.row(k) = m.experts().weights().row(perm[k]);
        eb(k) = m.experts().biases()(perm[k]);
      }
      const MoEModel p(LinearRouter(rw, rb), LinearExpertSet(ew, eb), m.temperature());
      for (int j = 0; j < 5; ++j) {
        const Eigen::VectorXd x = rng.vec(3);
        const double a = soft_predict(m, x);
        worst = std::max(worst, std::fabs(a - soft_predict(p, x)) / (1.0 + std::fabs(a)));
      }
    }
    s.add("moe_core.permutation_symmetry", "relative diff <= 1e-12", worst, worst <= 1e-12);
  }
  s.add("moe_core.softmax_overflow_guard", "finite at logits 1e4", 0.0, softmax_overflow_check(guarded_softmax));
  const bool naive_survives = softmax_overflow_check(naive_softmax);
  s.add("negative_control.naive_softmax_rejected", "overflow check must fail without max subtraction",
        naive_survives ? 1.0 : 0.0, !naive_survives);
}

// ---- sampling ----

void check_sampling(Suite& s) {
  Rng rng(s.seed(10));
  const GaussianLaw law(rng.vec(3), rng.covariance(3));
  const std::size_t n = 3 * kSampleChunkRows + 123;
  const SampleBatch a = gaussian_sample(law, n, s.seed(11));
  const SampleBatch b = gaussian_sample(law, n, s.seed(11));
  Eigen::MatrixXd streamed(n, 3);
  for_each_sample_chunk(law, n, s.seed(11), [&](const Eigen::MatrixXd& chunk, std::size_t first) {
    streamed.middleRows(static_cast<Eigen::Index>(first), chunk.rows()) = chunk;
  });
  const SampleBatch prefix = gaussian_sample(law, kSampleChunkRows + 7, s.seed(11));
  const bool same = a.points == b.points && a.points == streamed &&
                    prefix.points == a.points.topRows(prefix.points.rows());
  s.add("sampling.bitwise_determinism", "repeat, streamed and prefix batches identical", same ? 0.0 : 1.0, same);
}

// ---- boundary_mass ----

void check_boundary_mass(Suite& s, const ExperimentConfig& c) {
  {
    Rng rng(s.seed(20));
    std::size_t bad = 0, monotone_bad = 0;
    for (int K : {3, 4, 5}) {
      const MoEModel m = rng.model(K, 3, 1.0);
      const SampleBatch batch = gaussian_sample(GaussianLaw::standard(3), 20'000, s.seed(21 + K));
      for (double eps : {0.05, 0.25, 0.45})
        for (double tau : {0.05, 0.1, 0.5}) {
          const TaxonomyNesting t = taxonomy_nesting(m, batch, eps, tau);
          bad += t.violations;
          const double a = t.top_eps.estimate.value, b = t.amb.estimate.value, cc = t.top_K.estimate.value,
                       d = t.pair_K.estimate.value;
          if (!(a <= b && b <= cc && cc <= d)) ++monotone_bad;
        }
    }
    s.add("boundary_mass.taxonomy_nesting", "samplewise violations == 0", static_cast<double>(bad + monotone_bad),
          bad == 0 && monotone_bad == 0);
  }
  {
    const GaussianLaw law = GaussianLaw::standard(2);
    const SampleBatch batch = gaussian_sample(law, c.n, s.seed(30));
    double worst_z = 0.0, worst_diff = 0.0;
    bool ok = true;
    for (double b : {0.0, 0.7}) {
      const MoEModel m(LinearRouter::binary(Eigen::Vector2d(1.0, 0.0), b),
                       LinearExpertSet(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2)), 0.0);
      const LinearScore score = LinearScore::from(Eigen::Vector2d(1.0, 0.0), b, law);
      for (double w : {0.01, 0.05, 0.1, 0.2, 0.5}) {
        const McEstimate e = estimate_bm_top(m, batch, w).estimate;
        const double diff = std::fabs(e.value - analytic_slab_prob(score, w));
        worst_diff = std::max(worst_diff, diff);
        if (e.std_error > 0.0) worst_z = std::max(worst_z, diff / e.std_error);
        if (diff > 3.0 * e.std_error) ok = false;
      }
    }
    s.add("boundary_mass.mc_vs_analytic_slab", "|mc - analytic| <= 3 se", worst_z, ok,
          "max |diff| = " + fmt(worst_diff) + ", n = " + std::to_string(c.n) + "; observed is max z");
  }
  {
    const LinearScore score = LinearScore::from(Eigen::Vector2d(1.0, 0.0), 0.0, GaussianLaw::standard(2));
    const double C = coarea_coeff_gaussian(score, c.epsilon);
    double worst = 0.0;
    for (double tau : {0.05, 0.02, 0.01})
      worst = std::max(worst, std::fabs(analytic_slab_prob(score, kappa_eps(c.epsilon) * tau) / tau - C) / C);
    s.add("boundary_mass.coarea_linearity", "ratio drift <= 1% for tau <= 0.05", worst, worst <= 0.01);
  }
  {
    Rng rng(s.seed(40));
    const MoEModel m = rng.model(4, 3, 1.0);
    const SampleBatch batch = gaussian_sample(GaussianLaw::standard(3), 50'000, s.seed(41));
    std::size_t bad = 0;
    for (double w : {0.05, 0.2, 1.0}) bad += union_bound_violations(m.router(), batch, w);
    s.add("boundary_mass.union_bound", "violations == 0", static_cast<double>(bad), bad == 0);
  }
}

// ---- risk_lab ----

void check_risk_lab(Suite& s, const ExperimentConfig& c) {
  Rng rng(s.seed(50));
  const std::size_t d = c.dim;
  const GaussianLaw law = GaussianLaw::standard(d);
  const SampleBatch batch = gaussian_sample(law, 100'000, s.seed(51));
  const TeacherSpec exp1_teacher = binary_gaussian_teacher(d, 0.0, 2.0);

  // Student/teacher pairs: realizable exp1, a mismatched binary student, a K = 3 pair.
  std::vector<std::pair<MoEModel, TeacherSpec>> pairs;
  pairs.emplace_back(exp1_teacher.model(), exp1_teacher);
  {
    Eigen::MatrixXd w = exp1_teacher.experts.weights() * 1.3;
    w(0, 0) = 0.2;
    pairs.emplace_back(MoEModel(LinearRouter::binary(Eigen::VectorXd::Unit(d, 0), 0.2),
                                LinearExpertSet(w, Eigen::Vector2d(0.1, -0.3)), 0.0),
                       exp1_teacher);
  }
  {
    const MoEModel t = rng.model(3, static_cast<Eigen::Index>(d), 0.0);
    const TeacherSpec teacher{t.router(), t.experts()};
    const MoEModel stu(LinearRouter(t.router().weight() + rng.mat(3, d, 0.1), t.router().bias()),
                       LinearExpertSet(t.experts().weights() + rng.mat(3, d, 0.2), t.experts().biases()), 0.0);
    pairs.emplace_back(stu, teacher);
  }

  {
    std::size_t bad = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& [stu, teacher] : pairs)
      for (double tau : c.taus) {
        const GapBoundChain g = gap_bound_chain(stu, teacher, batch, tau);
        if (!g.holds()) ++bad;
        worst = std::max(worst, g.gap - g.chain_bound);
      }
    s.add("risk_lab.gap_le_chain_bound", "gap <= middle <= chain bound at every tau", worst, bad == 0,
          std::to_string(bad) + " failures; observed is max(gap - chain_bound)");
  }
  {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& [stu, teacher] : pairs)
      for (double tau : {0.05, 0.1, 0.5}) worst = std::max(worst, pointwise_gap_bound_check(stu.with_temperature(tau), teacher, batch));
    s.add("risk_lab.pointwise_gap_bound", "max(|h_tau - h_0| - bound) <= 0", worst, worst <= 0.0);
  }
  {
    double worst_add = 0.0;
    bool bound_ok = true;
    for (const auto& [stu, teacher] : pairs)
      for (double tau : {0.1, 0.2}) {
        const RiskSplit r = risk_decomposition(stu.with_temperature(tau), teacher, batch, c.epsilon);
        worst_add = std::max(worst_add, r.additivity_error());
        bound_ok = bound_ok && r.bound_holds();
      }
    s.add("risk_lab.decomposition_additivity", "relative error <= 1e-12", worst_add, worst_add <= 1e-12);
    s.add("risk_lab.decomposition_boundary_bound", "boundary <= (2B^2 + 2B_stu^2) amb", bound_ok ? 0.0 : 1.0,
          bound_ok);
  }
  {
    const std::vector<MoEModel> grid = default_sweep_grid(exp1_teacher);
    const std::vector<double> taus = {0.02, 0.05, 0.1, 0.2};
    const GapSweep sw = uniform_gap_sweep(exp1_teacher, grid, taus, law, 200'000, s.seed(52));
    s.add("risk_lab.uniform_gap_slope", "slope in [0.9, 1.1]", sw.slope,
          sw.fittable && sw.slope >= 0.9 && sw.slope <= 1.1);
  }
  {
    const GaussianLaw law2(Eigen::VectorXd::Zero(d), rng.covariance(static_cast<Eigen::Index>(d)));
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(d);
    nu(0) = 1.0;
    nu(1) = 0.5;
    Eigen::MatrixXd ew = Eigen::MatrixXd::Zero(2, d);
    ew(0, 1) = 1.5;
    ew(1, 0) = -0.7;
    const MoEModel model(LinearRouter::binary(nu, 0.3), LinearExpertSet(ew, Eigen::Vector2d(0.8, -0.4)), 0.0);
    const double sigma = std::sqrt(nu.dot(law2.covariance() * nu));
    const ShapeDerivativeCheck chk =
        hard_risk_bias_derivative_check(model, exp1_teacher, law2, 1e-3 * sigma, c.n, s.seed(53));
    s.add("risk_lab.shape_derivative", "|fd - surface| <= max(1e-3, 3 se)", chk.abs_diff, chk.agrees(),
          "fd = " + fmt(chk.fd_derivative) + ", surface = " + fmt(chk.surface_formula) +
              ", combined se = " + fmt(chk.combined_std_error));
  }
}

// ---- symmetry_lab ----

void check_symmetry_lab(Suite& s, const ExperimentConfig& c) {
  {
    const Eigen::Index d = 4;
    const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(d, 0);
    const SymmetrySpec spec(e1, e1, Eigen::MatrixXd::Identity(d, d));
    const OperatorEstimate est = build_M_mc(ResponseFn::sign(), spec, c.n, s.seed(60));
    const double target = 2.0 * std::sqrt(2.0 / M_PI);
    const double diff = std::fabs(est.rayleigh.value - target);
    s.add("symmetry_lab.gaussian_moment_identity", "|v'Mv - 2 sqrt(2/pi)| <= 3 se", diff,
          diff <= 3.0 * est.rayleigh.std_error, "se = " + fmt(est.rayleigh.std_error));
  }
  {
    Rng rng(s.seed(61));
    double worst_z = 0.0;
    bool ok = true;
    std::size_t applicable = 0, cert_bad = 0;
    for (int i = 0; i < 10; ++i) {
      const Eigen::Index d = rng.integer(2, 8);
      const Eigen::VectorXd v = rng.vec(d).normalized();
      const SymmetrySpec spec(v, rng.vec(d), rng.covariance(d));
      const SampleBatch batch = gaussian_sample(spec.law(), c.n, s.seed(100 + i));
      for (const ResponseFn& g : {ResponseFn::sign(), ResponseFn::tanh(1.5)}) {
        const OperatorEstimate est = build_M_mc(g, spec, batch);
        const double analytic = rayleigh_analytic(g, spec);
        const double diff = std::fabs(est.rayleigh.value - analytic);
        if (diff > 3.0 * est.rayleigh.std_error) ok = false;
        if (est.rayleigh.std_error > 0.0) worst_z = std::max(worst_z, diff / est.rayleigh.std_error);
        if (analytic > 3.0 * est.rayleigh.std_error) {
          ++applicable;
          const bool cert = est.op.eigenvalues()(0) > 0.0 && est.op.positive_projection(v).norm() > 1e-6;
          if (!cert) ++cert_bad;
        }
      }
    }
    s.add("symmetry_lab.rayleigh_agreement", "|v'Mv - analytic| <= 3 se (10 draws, sign + tanh)", worst_z, ok,
          "observed is max z");
    s.add("symmetry_lab.instability_certificate", "lambda_1 > 0 and |P_+ v| > 1e-6 where applicable",
          static_cast<double>(cert_bad), cert_bad == 0, std::to_string(applicable) + " applicable cases");
  }
  {
    Rng rng(s.seed(62));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Eigen::Index d = rng.integer(2, 8);
      const Eigen::VectorXd v = rng.vec(d).normalized();
      const SymmetrySpec spec(v, rng.vec(d, 0.5), Eigen::MatrixXd::Identity(d, d));
      const SampleBatch batch = gaussian_sample(spec.law(), 2000, s.seed(200 + i));
      const Eigen::VectorXd y = spec.targets(batch);
      const LinearExpertSet experts(rng.mat(2, d), rng.vec(2, 0.3));
      const Eigen::VectorXd u = rng.vec(d, 0.5);
      const double tau = std::pow(10.0, rng.uniform(-1.0, 0.0));
      const Eigen::VectorXd g = reduced_gradient(u, experts, y, batch, tau);
      const Eigen::VectorXd fd = reduced_gradient_fd(u, experts, y, batch, tau);
      worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
    }
    s.add("symmetry_lab.gradient_vs_fd", "relative error <= 1e-5 (100 configs)", worst, worst <= 1e-5);
  }
  {
    Rng rng(s.seed(63));
    double worst_comp = 0.0, worst_ratio = 0.0, worst_limit = 0.0;
    for (int i = 0; i < 50; ++i) {
      const Eigen::Index d = rng.integer(2, 6);
      const bool positive = i % 2 == 1;
      Eigen::MatrixXd a = rng.mat(d, d);
      Eigen::MatrixXd m = 0.5 * (a + a.transpose());
      if (positive) m = a * a.transpose() / static_cast<double>(d) + 0.1 * Eigen::MatrixXd::Identity(d, d);
      const EffectiveOperator op(m);
      const double eta = 0.05, tau = rng.uniform(0.1, 1.0);
      const std::size_t steps = 30;
      const Eigen::VectorXd u0 = rng.vec(d);
      const auto us = linearized_iterate(u0, op, eta, tau, steps);
      const Eigen::VectorXd c0 = op.eigenvectors().transpose() * u0;
      for (std::size_t t = 0; t <= steps; ++t) {
        Eigen::VectorXd closed(d);
        for (Eigen::Index k = 0; k < d; ++k)
          closed(k) = std::pow(1.0 + eta * op.eigenvalues()(k) / tau, static_cast<double>(t)) * c0(k);
        const Eigen::VectorXd comp = op.eigenvectors().transpose() * us[t];
        worst_comp = std::max(worst_comp, (comp - closed).cwiseAbs().maxCoeff() / closed.cwiseAbs().maxCoeff());
        if (positive) {
          const double rho = alignment_rate(op.eigenvalues()(0), op.eigenvalues()(1), eta, tau);
          // Normalised ratio starts at 1; compared on that scale since the
          // decayed component carries absolute, not relative, rounding.
          const double ratio = std::fabs(comp(1) / comp(0)) / std::fabs(c0(1) / c0(0));
          worst_ratio = std::max(worst_ratio, std::fabs(ratio - std::pow(rho, static_cast<double>(t))));
        }
      }
      if (positive) {
        const double l1 = op.eigenvalues()(0), l2 = op.eigenvalues()(1);
        worst_limit = std::max(worst_limit, std::fabs(alignment_rate(l1, l2, eta, 1e-15) - l2 / l1));
      }
    }
    s.add("symmetry_lab.linearized_components", "closed form to 1e-12 (50 cases)", worst_comp, worst_comp <= 1e-12);
    s.add("symmetry_lab.alignment_rate_decay", "|ratio_t / ratio_0 - rho^t| <= 1e-12", worst_ratio, worst_ratio <= 1e-12);
    s.add("symmetry_lab.alignment_rate_limit", "rho -> lambda_2/lambda_1 as tau -> 0", worst_limit,
          worst_limit <= 1e-12);
  }
  {
    Rng rng(s.seed(64));
    const Eigen::Index d = 5;
    const Eigen::VectorXd v = rng.vec(d).normalized();
    const Eigen::VectorXd ds = rng.vec(d);
    const Eigen::MatrixXd cov = rng.covariance(d);
    const SymmetrySpec plus(v, ds, cov), minus(v, -ds, cov);
    const SampleBatch batch = gaussian_sample(plus.law(), 20'000, s.seed(65));
    bool exact = true;
    for (const ResponseFn& g : {ResponseFn::sign(), ResponseFn::tanh(0.7)}) {
      const Eigen::MatrixXd mp = build_M_mc(g, plus, batch).op.matrix();
      const Eigen::MatrixXd mm = build_M_mc(g, minus, batch).op.matrix();
      exact = exact && mm == -mp;
    }
    s.add("symmetry_lab.sign_flip_negates_M", "bitwise M(-d) == -M(d)", exact ? 0.0 : 1.0, exact);
  }
}

// ---- kernels ----

void check_kernels(Suite& s) {
  const kernels::KernelTable* simd = kernels::avx2_kernels();
  if (simd == nullptr) {
    s.add("kernels.simd_vs_scalar", "skipped: no AVX2+FMA", 0.0, true);
    return;
  }
  const kernels::KernelTable& ref = kernels::scalar_kernels();
  Rng rng(s.seed(70));
  const std::size_t n = 4099, d = 5;
  std::vector<double> cols(n * d), w(d), a(n), b(n), y(n), f1(n), f2(n);
  for (auto& x : cols) x = rng.normal();
  for (auto& x : w) x = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.normal(20.0);
    b[i] = rng.normal();
    y[i] = rng.normal();
    f1[i] = rng.normal();
    f2[i] = rng.normal();
  }
  double worst = 0.0;
  auto rel = [&](double p, double q, double scale) { worst = std::max(worst, std::fabs(p - q) / std::max(scale, 1e-300)); };
  std::vector<double> o1(n), o2(n);
  ref.affine_scores(cols.data(), n, d, n, w.data(), 0.3, o1.data());
  simd->affine_scores(cols.data(), n, d, n, w.data(), 0.3, o2.data());
  for (std::size_t i = 0; i < n; ++i) rel(o1[i], o2[i], 1.0 + std::fabs(o1[i]));
  ref.exp(a.data(), n, o1.data());
  simd->exp(a.data(), n, o2.data());
  for (std::size_t i = 0; i < n; ++i) rel(o1[i], o2[i], o1[i]);
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) abs_sum += std::fabs(a[i] * b[i]);
  rel(ref.dot(a.data(), b.data(), n), simd->dot(a.data(), b.data(), n), abs_sum);
  double abs_a = 0.0;
  for (double x : a) abs_a += std::fabs(x);
  rel(ref.sum(a.data(), n), simd->sum(a.data(), n), abs_a);
  std::vector<double> s1(n), h1(n), s2(n), h2(n);
  ref.binary_losses(b.data(), f1.data(), f2.data(), y.data(), n, 10.0, s1.data(), h1.data());
  simd->binary_losses(b.data(), f1.data(), f2.data(), y.data(), n, 10.0, s2.data(), h2.data());
  bool hard_same = true;
  for (std::size_t i = 0; i < n; ++i) {
    rel(s1[i], s2[i], 1.0 + s1[i]);
    hard_same = hard_same && h1[i] == h2[i];
  }
  const kernels::GateSums g1 = ref.router_pass(b.data(), y.data(), f1.data(), f2.data(), n, 10.0, 0.1, o1.data());
  const kernels::GateSums g2 = simd->router_pass(b.data(), y.data(), f1.data(), f2.data(), n, 10.0, 0.1, o2.data());
  rel(g1.loss, g2.loss, g1.loss);
  rel(g1.entropy, g2.entropy, g1.entropy);
  for (std::size_t i = 0; i < n; ++i) rel(o1[i], o2[i], 1.0 + std::fabs(o1[i]));
  const bool slab_same = g1.slab_hits == g2.slab_hits && hard_same;
  s.add("kernels.simd_vs_scalar", "relative diff <= 1e-12, identical hard losses and slab counts", worst, worst <= 1e-12 && slab_same,
        std::string(simd->name) + " vs " + std::string(ref.name));
}

// ---- experiment-level properties, at each experiment's own defaults ----

void check_experiments(Suite& s, const ExperimentConfig& c) {
  {
    ExperimentConfig e = ExperimentConfig::defaults(ExperimentId::exp1);
    e.seed = c.seed;
    const Exp1Result r = run_exp1(e);
    bool agree = true;
    double worst = 0.0, ref = 0.0, worst_ratio = 0.0;
    std::size_t count = 0;
    for (const auto& row : r.rows) {
      const double diff = std::fabs(row.bm.estimate.value - row.bm_analytic);
      worst = std::max(worst, diff);
      agree = agree && diff <= std::max(0.002, 3.0 * row.bm.estimate.std_error);
      if (row.tau <= 0.2 + 1e-12) {
        ref += row.gap_over_tau;
        ++count;
      }
    }
    ref /= static_cast<double>(std::max<std::size_t>(count, 1));
    bool stable = count > 0;
    for (const auto& row : r.rows)
      if (row.tau <= 0.2 + 1e-12) {
        const double dev = std::fabs(row.gap_over_tau - ref) / ref;
        worst_ratio = std::max(worst_ratio, dev);
        stable = stable && dev <= 0.10 + 3.0 * row.risk.soft.std_error / row.tau / ref;
      }
    s.add("exp1.bm_vs_analytic", "|mc - analytic| <= max(0.002, 3 se)", worst, agree);
    s.add("exp1.ratio_stability", "gap/tau within 10% of its mean over tau <= 0.2", worst_ratio, stable);
    s.add("exp1.slope_mass", "in [0.95, 1.05]", r.slope_mass, r.slope_mass >= 0.95 && r.slope_mass <= 1.05);
    s.add("exp1.slope_gap", "in [0.95, 1.07]", r.slope_gap, r.slope_gap >= 0.95 && r.slope_gap <= 1.07);
    s.add("risk_lab.gap_mass_correlation", ">= 0.99 over the exp1 tau grid", r.correlation, r.correlation >= 0.99);
  }
  {
    ExperimentConfig e = ExperimentConfig::defaults(ExperimentId::exp2);
    e.seed = c.seed;
    const Exp2Result r = run_exp2(e);
    bool agree = true;
    double worst = 0.0;
    for (const auto& row : r.rows) {
      const double diff = std::fabs(row.bm.estimate.value - row.bm_analytic);
      worst = std::max(worst, diff);
      agree = agree && diff <= std::max(0.002, 3.0 * row.bm.estimate.std_error);
    }
    s.add("exp2.bm_vs_analytic", "|mc - analytic| <= max(0.002, 3 se)", worst, agree);
    s.add("exp2.gap_decreasing", "strictly decreasing in offset", r.gap_decreasing ? 1.0 : 0.0, r.gap_decreasing);
    s.add("exp2.flip_decreasing", "strictly decreasing in offset", r.flip_decreasing ? 1.0 : 0.0, r.flip_decreasing);
    const double corr = std::min(r.corr_gap_mass, r.corr_flip_mass);
    s.add("exp2.correlations", "gap and flip vs mass >= 0.999", corr, corr >= 0.999);
  }
  {
    ExperimentConfig e = ExperimentConfig::defaults(ExperimentId::exp3);
    e.seed = c.seed;
    const Exp3Result r = run_exp3(e);
    s.add("exp3.final_alignment", ">= 0.999 at every tau", r.min_alignment,
          r.min_alignment >= 0.999 && !r.any_diverged);
    s.add("exp3.entropy_increasing", "strictly increasing in tau", r.entropy_increasing ? 1.0 : 0.0,
          r.entropy_increasing);
    s.add("exp3.bm_increasing", "strictly increasing in tau", r.bm_increasing ? 1.0 : 0.0, r.bm_increasing);
  }
  {
    ExperimentConfig e1 = ExperimentConfig::defaults(ExperimentId::exp1);
    e1.seed = c.seed;
    e1.n = 20'000;
    ExperimentConfig e2 = ExperimentConfig::defaults(ExperimentId::exp2);
    e2.seed = c.seed;
    e2.n = 20'000;
    ExperimentConfig e3 = ExperimentConfig::defaults(ExperimentId::exp3);
    e3.seed = c.seed;
    e3.n = 5'000;
    e3.steps = 50;
    const bool same = exp1_csv(run_exp1(e1)) == exp1_csv(run_exp1(e1)) &&
                      exp2_csv(run_exp2(e2)) == exp2_csv(run_exp2(e2)) &&
                      exp3_csv(run_exp3(e3)) == exp3_csv(run_exp3(e3));
    s.add("experiments.csv_reproducible", "byte-identical CSV on repeat", same ? 0.0 : 1.0, same);
  }
}

}  // namespace

VerifyReport run_verify(const ExperimentConfig& config) {
  config.validate();
  const auto t0 = Clock::now();
  Suite s(config.seed);
  check_moe_core(s);
  check_sampling(s);
  check_boundary_mass(s, config);
  check_risk_lab(s, config);
  check_symmetry_lab(s, config);
  check_kernels(s);
  check_experiments(s, config);
  s.report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return s.report;
}

}  // namespace moebl
