// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "moebl/experiments.hpp"
#include "moebl/numerics.hpp"

using namespace moebl;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  std::printf("%s  criterion %d: %s\n        %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double Phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct Rng {
  explicit Rng(std::uint64_t s) : gen(s) {}
  std::mt19937_64 gen;
  double normal() { return std::normal_distribution<double>()(gen); }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen); }
  Eigen::VectorXd vec(Eigen::Index d) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = normal();
    return v;
  }
  Eigen::MatrixXd mat(Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal();
    return m;
  }
};

// Criteria 1 and 2.
void table1() {
  const ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentId::exp1);
  const auto t0 = std::chrono::steady_clock::now();
  const Exp1Result r = run_exp1(cfg);
  const double wall = seconds_since(t0);

  const std::vector<double> taus{0.02, 0.05, 0.10, 0.20};
  const std::vector<double> listed{0.031914, 0.079656, 0.158519, 0.311087};
  bool ok = wall < 10.0;
  std::string detail;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const Exp1Row* row = nullptr;
    for (const auto& x : r.rows)
      if (std::fabs(x.tau - taus[i]) < 1e-12) row = &x;
    if (row == nullptr) {
      ok = false;
      detail += "missing tau " + fmt("%g", taus[i]) + "; ";
      continue;
    }
    const double truth = 2.0 * Phi(2.0 * taus[i]) - 1.0;
    const double mc = row->bm.estimate.value;
    const double tol = std::max(0.002, 3.0 * row->bm.estimate.std_error);
    ok = ok && std::fabs(mc - truth) <= tol && std::fabs(mc - listed[i]) <= tol;
    ok = ok && std::fabs(row->bm_analytic - truth) <= 1e-12;
    detail += "tau=" + fmt("%g", taus[i]) + " mc=" + fmt("%.6f", mc) + " 2Phi(2tau)-1=" + fmt("%.6f", truth) +
              " listed=" + fmt("%.6f", listed[i]) + "; ";
  }
  detail += "tol max(0.002, 3se); wall " + fmt("%.2f", wall) + " s (< 10 s)";
  report(1, "Table 1 boundary-mass column vs 2Phi(2tau)-1", ok, detail);

  const bool ok2 = r.slope_mass >= 0.95 && r.slope_mass <= 1.05 && r.slope_gap >= 0.95 && r.slope_gap <= 1.07 &&
                   r.correlation >= 0.99;
  report(2, "Table 1 scaling signature", ok2,
         "slope_mass=" + fmt("%.6f", r.slope_mass) + " in [0.95,1.05]; slope_gap=" + fmt("%.6f", r.slope_gap) +
             " in [0.95,1.07]; corr=" + fmt("%.6f", r.correlation) + " >= 0.99");
}

// Criterion 3.
void table2() {
  const ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentId::exp2);
  const auto t0 = std::chrono::steady_clock::now();
  const Exp2Result r = run_exp2(cfg);
  const double wall = seconds_since(t0);

  const std::vector<double> offsets{0.0, 0.5, 1.0, 1.5, 2.0, 2.25};
  const std::vector<double> listed{0.158519, 0.139301, 0.096786, 0.052178, 0.022030, 0.013038};
  bool ok = wall < 10.0 && r.rows.size() == offsets.size();
  std::string detail;
  for (std::size_t i = 0; ok && i < offsets.size(); ++i) {
    const Exp2Row& row = r.rows[i];
    const double b = offsets[i];
    const double truth = Phi(0.2 - b) - Phi(-0.2 - b);
    const double mc = row.bm.estimate.value;
    const double tol = std::max(0.002, 3.0 * row.bm.estimate.std_error);
    ok = ok && std::fabs(row.offset - b) < 1e-12 && std::fabs(row.bm_analytic - truth) <= 1e-12;
    ok = ok && std::fabs(mc - truth) <= tol && std::fabs(mc - listed[i]) <= tol;
    detail += "b=" + fmt("%g", b) + " mc=" + fmt("%.6f", mc) + " analytic=" + fmt("%.6f", truth) + " listed=" +
              fmt("%.6f", listed[i]) + "; ";
  }
  ok = ok && r.gap_decreasing && r.flip_decreasing && r.corr_gap_mass >= 0.999 && r.corr_flip_mass >= 0.999;
  detail += std::string("gap decreasing=") + (r.gap_decreasing ? "yes" : "no") +
            " flip decreasing=" + (r.flip_decreasing ? "yes" : "no") + " corr_gap=" + fmt("%.6f", r.corr_gap_mass) +
            " corr_flip=" + fmt("%.6f", r.corr_flip_mass) + " (>= 0.999); wall " + fmt("%.2f", wall) + " s (< 10 s)";
  report(3, "Table 2 boundary mass, monotone gap/flip, correlations", ok, detail);
}

// Criterion 4.
void table3() {
  const ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentId::exp3);
  const auto t0 = std::chrono::steady_clock::now();
  const Exp3Result r = run_exp3(cfg);
  const double wall = seconds_since(t0);

  const std::vector<double> taus{0.05, 0.1, 0.2, 0.4};
  bool ok = wall < 60.0 && r.runs.size() == taus.size() && !r.any_diverged;
  std::string detail;
  for (std::size_t i = 0; ok && i < taus.size(); ++i) {
    const auto& f = r.runs[i].trace.final();
    ok = ok && std::fabs(r.runs[i].tau - taus[i]) < 1e-12 && f.alignment >= 0.999;
    if (i > 0) {
      const auto& p = r.runs[i - 1].trace.final();
      ok = ok && f.entropy > p.entropy && f.boundary_mass > p.boundary_mass;
    }
    detail += "tau=" + fmt("%g", taus[i]) + " align=" + fmt("%.6f", f.alignment) + " entropy=" +
              fmt("%.6f", f.entropy) + " bm=" + fmt("%.6f", f.boundary_mass) + "; ";
  }
  detail += "wall " + fmt("%.2f", wall) + " s (< 60 s)";
  report(4, "Table 3 alignment, increasing entropy and boundary mass", ok, detail);
}

// Criterion 5.
void gaussian_moment() {
  const SymmetrySpec e1(Eigen::VectorXd::Unit(4, 0), Eigen::VectorXd::Unit(4, 0), Eigen::MatrixXd::Identity(4, 4));
  const OperatorEstimate est = build_M_mc(ResponseFn::sign(), e1, 1'000'000, 501);
  const double cg = 2.0 * std::sqrt(2.0 / M_PI);
  const double vmv = e1.v.dot(est.op.matrix() * e1.v);
  bool ok = std::fabs(vmv - cg) <= 3.0 * est.rayleigh.std_error && std::fabs(cg - 1.595769) < 5e-7;
  std::string detail = "v'Mv=" + fmt("%.6f", vmv) + " vs 1.595769 (se " + fmt("%.2e", est.rayleigh.std_error) +
                       "); ";

  Rng rng(502);
  double worst_z = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Eigen::Index d = rng.integer(2, 8);
    const Eigen::MatrixXd a = rng.mat(d, d);
    const Eigen::MatrixXd cov = a * a.transpose() / double(d) + 0.5 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::VectorXd v = rng.vec(d).normalized();
    const Eigen::VectorXd ds = rng.vec(d);
    const SymmetrySpec spec(v, ds, cov);
    const OperatorEstimate e = build_M_mc(ResponseFn::sign(), spec, 1'000'000, 600 + i);
    const double s = std::sqrt(v.dot(cov * v));
    const double formula = cg * ds.dot(cov * v) * s;
    const double z = std::fabs(e.rayleigh.value - formula) / e.rayleigh.std_error;
    ok = ok && z <= 3.0 && std::fabs(rayleigh_analytic(ResponseFn::sign(), spec) - formula) <= 1e-12 * (1 + std::fabs(formula));
    worst_z = std::max(worst_z, z);
  }
  detail += "10 random (v, d*, Sigma): max |MC - kappa_g (d*'Sigma v) sqrt(v'Sigma v)| / se = " + fmt("%.3f", worst_z) +
            " (<= 3)";
  report(5, "Gaussian moment identity", ok, detail);
}

// Criterion 6.
void property_suite() {
  const ExperimentConfig cfg = ExperimentConfig::defaults(ExperimentId::verify);
  const VerifyReport r = run_verify(cfg);
  const char* named[] = {"moe_core.softmax_tail_inequality", "boundary_mass.taxonomy_nesting",
                         "risk_lab.decomposition_additivity", "risk_lab.pointwise_gap_bound",
                         "risk_lab.gap_le_chain_bound"};
  bool ok = r.all_passed();
  std::string detail;
  for (const char* name : named) {
    bool found = false;
    for (const auto& c : r.checks) {
      if (c.name != name) continue;
      found = true;
      detail += c.name + "=" + (c.passed ? "ok" : "FAIL") + " (" + fmt("%.3g", c.observed) + "); ";
    }
    ok = ok && found;
  }
  std::size_t passed = 0;
  for (const auto& c : r.checks) passed += c.passed;
  for (const auto& c : r.checks)
    if (!c.passed) detail += "failed: " + c.name + "; ";
  detail += std::to_string(passed) + "/" + std::to_string(r.checks.size()) + " verify checks pass; wall " +
            fmt("%.1f", r.wall_seconds) + " s";
  report(6, "Property suite (run_verify)", ok, detail);
}

// Criterion 7.
void gradient_and_shape() {
  Rng rng(701);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Index d = rng.integer(2, 8);
    const SymmetrySpec spec(rng.vec(d).normalized(), 0.5 * rng.vec(d), Eigen::MatrixXd::Identity(d, d));
    const SampleBatch batch = gaussian_sample(spec.law(), 2000, 800 + i);
    const Eigen::VectorXd y = spec.targets(batch);
    const LinearExpertSet ex(rng.mat(2, d), 0.3 * rng.vec(2));
    const Eigen::VectorXd u = 0.5 * rng.vec(d);
    const double tau = std::pow(10.0, rng.uniform(-1.0, 0.0));
    const Eigen::VectorXd g = reduced_gradient(u, ex, y, batch, tau);
    const Eigen::VectorXd fd = reduced_gradient_fd(u, ex, y, batch, tau);
    worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-300));
  }

  const GaussianLaw law = GaussianLaw::standard(3);
  const TeacherSpec teacher = binary_gaussian_teacher(3, 0.0, 2.0);
  const MoEModel model(LinearRouter::binary(rng.vec(3), 0.5), teacher.experts, 0.0);
  const ShapeDerivativeCheck sd = hard_risk_bias_derivative_check(model, teacher, law, 1e-3, 10'000'000, 702);
  const double tol = std::max(1e-3, 3.0 * sd.combined_std_error);
  const bool ok = worst <= 1e-5 && sd.abs_diff <= tol && !sd.db_too_large;
  report(7, "Gradient and shape-derivative checks", ok,
         "max relative |grad - FD| over 100 configs = " + fmt("%.3e", worst) + " (<= 1e-5); shape: fd=" +
             fmt("%.6f", sd.fd_derivative) + " surface=" + fmt("%.6f", sd.surface_formula) + " |diff|=" +
             fmt("%.2e", sd.abs_diff) + " <= " + fmt("%.2e", tol));
}

// Criterion 8.
void linearized_dynamics() {
  Rng rng(801);
  double worst_comp = 0.0, worst_ratio = 0.0, worst_limit = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Index d = rng.integer(2, 6);
    const Eigen::MatrixXd a = rng.mat(d, d);
    const EffectiveOperator op(a * a.transpose() / double(d) + 0.1 * Eigen::MatrixXd::Identity(d, d));
    const double eta = 0.05, tau = rng.uniform(0.1, 1.0);
    const Eigen::VectorXd u0 = rng.vec(d);
    const auto us = linearized_iterate(u0, op, eta, tau, 30);
    const Eigen::VectorXd c0 = op.eigenvectors().transpose() * u0;
    const double l1 = op.eigenvalues()(0), l2 = op.eigenvalues()(1);
    const double rho = alignment_rate(l1, l2, eta, tau);
    for (std::size_t t = 0; t < us.size(); ++t) {
      const Eigen::VectorXd c = op.eigenvectors().transpose() * us[t];
      double err = 0.0, scale = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double closed = std::pow(1.0 + eta * op.eigenvalues()(k) / tau, double(t)) * c0(k);
        err = std::max(err, std::fabs(c(k) - closed));
        scale = std::max(scale, std::fabs(closed));
      }
      worst_comp = std::max(worst_comp, err / scale);
      const double ratio = std::fabs(c(1) / c(0)) / std::fabs(c0(1) / c0(0));
      worst_ratio = std::max(worst_ratio, std::fabs(ratio - std::pow(rho, double(t))));
    }
    worst_limit = std::max(worst_limit, std::fabs(alignment_rate(l1, l2, eta, 1e-15) - l2 / l1));
  }
  const bool ok = worst_comp <= 1e-12 && worst_ratio <= 1e-12 && worst_limit <= 1e-12;
  report(8, "Linearized-dynamics exactness", ok,
         "components rel err " + fmt("%.2e", worst_comp) + ", |ratio_t/ratio_0 - rho^t| " + fmt("%.2e", worst_ratio) +
             ", |rho(tau->0) - l2/l1| " + fmt("%.2e", worst_limit) + " (all <= 1e-12)");
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{table1, table2, table3, gaussian_moment,
                                                    property_suite, gradient_and_shape, linearized_dynamics};
  for (const auto& c : criteria) {
    try {
      c();
    } catch (const std::exception& e) {
      std::printf("FAIL  exception: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
