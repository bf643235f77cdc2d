#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "moebl/boundary_mass.hpp"
#include "moebl/risk_lab.hpp"
#include "test_support.hpp"

using namespace moebl;
using moebl::test::phi;
using moebl::test::Rng;

namespace {

// Router on x_1, experts +-x_2 (contrast norm 2), zero offset.
TeacherSpec binary_teacher(int d, double offset = 0.0) {
  Eigen::MatrixXd ew = Eigen::MatrixXd::Zero(2, d);
  ew(0, 1) = 1.0;
  ew(1, 1) = -1.0;
  return {LinearRouter::binary(Eigen::VectorXd::Unit(d, 0), offset), LinearExpertSet(ew, Eigen::Vector2d::Zero())};
}

MoEModel student_of(const TeacherSpec& t, double tau) { return {t.router, t.experts, tau}; }

MoEModel random_model(Rng& rng, int K, int d, double tau) {
  return {LinearRouter(rng.mat(K, d), rng.vec(K, 0.3)), LinearExpertSet(rng.mat(K, d), rng.vec(K)), tau};
}

TeacherSpec random_teacher(Rng& rng, int K, int d) {
  return {LinearRouter(rng.mat(K, d), rng.vec(K, 0.3)), LinearExpertSet(rng.mat(K, d), rng.vec(K))};
}

MoEModel identical_experts(Rng& rng, int K, int d, double tau) {
  const Eigen::RowVectorXd w = rng.vec(d).transpose();
  Eigen::MatrixXd ew(K, d);
  for (int k = 0; k < K; ++k) ew.row(k) = w;
  return {LinearRouter(rng.mat(K, d), rng.vec(K)), LinearExpertSet(ew, Eigen::VectorXd::Constant(K, 0.4)), tau};
}

// Large-n limit of the gap for the binary teacher used as its own soft student:
// E[(2 X_2)^2] E[sigmoid(-|Z|/tau)^2] = 8 int_0^inf phi(z) sigmoid(-z/tau)^2 dz.
double gap_limit(double tau) {
  const int m = 200000;
  const double hi = 12.0, h = hi / m;
  auto f = [&](double z) {
    const double s = 1.0 / (1.0 + std::exp(z / tau));
    return phi(z) * s * s;
  };
  double acc = f(0.0) + f(hi);
  for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return 8.0 * acc * h / 3.0;
}

}  // namespace

TEST_CASE("estimate_risks examples") {
  Rng rng(51);
  const GaussianLaw law = GaussianLaw::standard(3);
  const SampleBatch batch = gaussian_sample(law, 20'000, 1);

  const TeacherSpec t = random_teacher(rng, 3, 3);
  const RiskEstimate self = estimate_risks(t.model(), t, batch);
  CHECK(self.hard.value == 0.0);
  CHECK(self.soft.value == 0.0);

  for (double tau : {0.01, 0.1, 1.0}) {
    const MoEModel same = identical_experts(rng, 3, 3, tau);
    const RiskEstimate r = estimate_risks(same, t, batch);
    CHECK(r.gap <= 1e-12 * (1.0 + r.hard.value));
    CHECK(r.soft.value >= 0.0);
  }
  CHECK_THROWS_AS(estimate_risks(random_model(rng, 2, 2, 0.1), t, batch), std::invalid_argument);
}

TEST_CASE("binary kernel path agrees with the generic path") {
  Rng rng(52);
  const SampleBatch batch = gaussian_sample(GaussianLaw::standard(4), 30'000, 2);
  for (int i = 0; i < 10; ++i) {
    const TeacherSpec t = random_teacher(rng, 2, 4);
    const MoEModel s = random_model(rng, 2, 4, rng.uniform(0.01, 1.0));
    const RiskEstimate a = estimate_risks(s, t, batch);
    const RiskEstimate b = estimate_risks_generic(s, t, batch);
    CHECK(a.soft.value == doctest::Approx(b.soft.value).epsilon(1e-11));
    CHECK(a.hard.value == doctest::Approx(b.hard.value).epsilon(1e-11));
    CHECK(a.gap == doctest::Approx(b.gap).epsilon(1e-8).scale(1e-12));
  }
}

TEST_CASE("gap/tau at tau = 0.1 is within 5% of its large-n limit across seeds") {
  const TeacherSpec t = binary_teacher(4);
  const double limit = gap_limit(0.1);
  CHECK(limit / 0.1 == doctest::Approx(0.6164).epsilon(0.01));
  const GaussianLaw law = GaussianLaw::standard(4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const RiskEstimate r = estimate_risks(student_of(t, 0.1), t, gaussian_sample(law, 400'000, seed));
    CAPTURE(seed);
    CHECK(std::fabs(r.gap / limit - 1.0) <= 0.05);
  }
}

TEST_CASE("pointwise_gap_bound_check examples") {
  Rng rng(53);
  const SampleBatch batch = gaussian_sample(GaussianLaw::standard(4), 100'000, 3);
  const TeacherSpec t = binary_teacher(4);
  CHECK(pointwise_gap_bound_check(student_of(t, 0.1), t, batch) <= 0.0);
  CHECK(pointwise_gap_bound_check(identical_experts(rng, 2, 4, 0.1), t, batch) <= 0.0);

  // Every sample on the interface (router rows equal): rhs = 2 B_f (K-1).
  Eigen::MatrixXd rw(3, 4);
  rw.setZero();
  const MoEModel tie(LinearRouter(rw, Eigen::Vector3d::Zero()), LinearExpertSet(rng.mat(3, 4), rng.vec(3)), 0.3);
  CHECK(pointwise_gap_bound_check(tie, random_teacher(rng, 3, 4), batch) <= 0.0);
  CHECK_THROWS_AS(pointwise_gap_bound_check(student_of(t, 0.0), t, batch), std::invalid_argument);
}

TEST_CASE("property: pointwise bound and bound chain on random models") {
  Rng rng(54);
  const SampleBatch batch = gaussian_sample(GaussianLaw::standard(3), 20'000, 4);
  for (int i = 0; i < 40; ++i) {
    const int K = rng.integer(2, 5);
    const TeacherSpec t = random_teacher(rng, K, 3);
    const double tau = std::pow(10.0, rng.uniform(-2.0, 0.0));
    const MoEModel s = random_model(rng, K, 3, tau);
    REQUIRE(pointwise_gap_bound_check(s, t, batch) <= 0.0);
    const GapBoundChain c = gap_bound_chain(s, t, batch, tau);
    REQUIRE(c.holds());
  }
}

TEST_CASE("gap_bound_chain examples") {
  Rng rng(55);
  const SampleBatch batch = gaussian_sample(GaussianLaw::standard(4), 200'000, 5);
  const TeacherSpec t = binary_teacher(4);
  const GapBoundChain z = gap_bound_chain(identical_experts(rng, 2, 4, 0.1), t, batch, 0.1);
  CHECK(z.gap <= 1e-12);
  CHECK(z.holds());

  std::vector<double> ratio;
  for (double tau : {0.2, 0.1, 0.05, 0.02, 0.01}) {
    const GapBoundChain c = gap_bound_chain(student_of(t, tau), t, batch, tau);
    CAPTURE(tau);
    CHECK(c.gap <= c.chain_bound);
    CHECK(c.holds());
    CHECK(c.constants.K == 2);
    // mean exp(-|Z|/tau) -> 2 phi(0) tau.
    CHECK(c.mean_tail / tau == doctest::Approx(2.0 * phi(0.0)).epsilon(0.1));
    ratio.push_back(c.chain_bound / tau);
  }
  for (std::size_t i = 1; i < ratio.size(); ++i) CHECK(ratio[i] <= 1.2 * ratio[0]);
}

TEST_CASE("risk_decomposition examples") {
  Rng rng(56);
  const TeacherSpec t = binary_teacher(4);
  const SampleBatch batch = gaussian_sample(GaussianLaw::standard(4), 100'000, 6);

  const RiskSplit s = risk_decomposition(student_of(t, 0.1), t, batch, 0.25);
  CHECK(s.additivity_error() <= 1e-12);
  CHECK(s.bound_holds());
  CHECK(s.ambiguity_fraction > 0.0);

  // A tiny slab on a small batch: no ambiguous samples at all.
  const SampleBatch small = gaussian_sample(GaussianLaw::standard(4), 1000, 7);
  const RiskSplit e = risk_decomposition(student_of(t, 1e-6), t, small, 0.25);
  REQUIRE(e.ambiguity_fraction == 0.0);
  CHECK(e.boundary == 0.0);
  CHECK(e.interior == e.total);

  // Identical router rows: weights (1/2, 1/2) everywhere, all samples ambiguous.
  const MoEModel flat(LinearRouter(Eigen::MatrixXd::Zero(2, 4), Eigen::Vector2d::Zero()), t.experts, 0.1);
  const RiskSplit f = risk_decomposition(flat, t, batch, 0.25);
  CHECK(f.ambiguity_fraction == 1.0);
  CHECK(f.interior == 0.0);
  CHECK(f.boundary == doctest::Approx(f.total).epsilon(1e-12));

  for (int i = 0; i < 20; ++i) {
    const int K = rng.integer(2, 5);
    const RiskSplit r = risk_decomposition(random_model(rng, K, 4, rng.uniform(0.05, 1.0)), random_teacher(rng, K, 4),
                                           small, rng.uniform(0.05, 0.45));
    REQUIRE(r.additivity_error() <= 1e-12);
    REQUIRE(r.bound_holds());
  }
}

TEST_CASE("uniform_gap_sweep examples") {
  Rng rng(57);
  const TeacherSpec t = binary_teacher(4);
  const GaussianLaw law = GaussianLaw::standard(4);
  const std::vector<double> taus{0.02, 0.05, 0.1, 0.2};

  std::vector<MoEModel> same;
  for (int i = 0; i < 4; ++i) same.push_back(identical_experts(rng, 2, 4, 0.1));
  const GapSweep z = uniform_gap_sweep(t, same, taus, law, 20'000, 1);
  for (double g : z.max_gap) CHECK(g <= 1e-12);

  const std::vector<MoEModel> one{student_of(t, 0.1)};
  const GapSweep s = uniform_gap_sweep(t, one, taus, law, 50'000, 2);
  const SampleBatch batch = gaussian_sample(law, 50'000, 2);
  for (std::size_t i = 0; i < taus.size(); ++i)
    CHECK(s.max_gap[i] == doctest::Approx(estimate_risks(student_of(t, taus[i]), t, batch).gap).epsilon(1e-12));

  const std::vector<MoEModel> grid = default_sweep_grid(t);
  CHECK(grid.size() == 25);
  const GapSweep g = uniform_gap_sweep(t, grid, taus, law, 200'000, 3);
  REQUIRE(g.fittable);
  CHECK(g.slope >= 0.9);
  CHECK(g.slope <= 1.1);
  for (std::size_t i = 1; i < taus.size(); ++i) CHECK(g.max_gap[i] > g.max_gap[i - 1]);

  const std::vector<MoEModel> empty;
  CHECK_THROWS_AS(uniform_gap_sweep(t, empty, taus, law, 100, 1), std::invalid_argument);
}

TEST_CASE("shape derivative: one-dimensional closed form") {
  // S = x + b, f_1 = 1, f_2 = 0, mu = 0: L_0(b) = P(X >= -b) = Phi(b), so dL_0/db = phi(b).
  const GaussianLaw law = GaussianLaw::standard(1);
  const TeacherSpec zero{LinearRouter::binary(Eigen::VectorXd::Ones(1), 0.0),
                         LinearExpertSet(Eigen::MatrixXd::Zero(2, 1), Eigen::Vector2d::Zero())};
  const LinearExpertSet ex(Eigen::MatrixXd::Zero(2, 1), Eigen::Vector2d(1.0, 0.0));
  for (double b : {0.0, 0.7}) {
    const MoEModel m(LinearRouter::binary(Eigen::VectorXd::Ones(1), b), ex, 0.0);
    const ShapeDerivativeCheck c = hard_risk_bias_derivative_check(m, zero, law, 1e-3, 2'000'000, 11);
    CAPTURE(b);
    CHECK(c.surface_formula == doctest::Approx(phi(b)).epsilon(1e-12));
    CHECK(std::fabs(c.fd_derivative - phi(b)) <= 3.0 * c.fd_std_error);
    CHECK_FALSE(c.db_too_large);
    CHECK(c.agrees());
  }
  const MoEModel m0(LinearRouter::binary(Eigen::VectorXd::Ones(1), 0.0), ex, 0.0);
  CHECK(std::fabs(hard_risk_bias_derivative_check(m0, zero, law, 1e-3, 1000, 1).surface_formula - 0.39894) < 5e-6);
  CHECK(hard_risk_bias_derivative_check(m0, zero, law, 0.5, 1000, 1).db_too_large);
}

TEST_CASE("shape derivative: experts agreeing on the interface") {
  // f_1 - f_2 = nu'x + b vanishes on {S = 0}, so D_12 = 0 there.
  Rng rng(58);
  const GaussianLaw law = GaussianLaw::standard(3);
  const Eigen::VectorXd nu = rng.vec(3);
  const double b = 0.3;
  Eigen::MatrixXd ew(2, 3);
  ew.row(1) = rng.vec(3).transpose();
  ew.row(0) = ew.row(1) + nu.transpose();
  const LinearExpertSet ex(ew, Eigen::Vector2d(0.2 + b, 0.2));
  const MoEModel m(LinearRouter::binary(nu, b), ex, 0.0);
  const ShapeDerivativeCheck c = hard_risk_bias_derivative_check(m, binary_teacher(3), law, 1e-3, 1'000'000, 12);
  CHECK(std::fabs(c.surface_formula) <= 1e-12);
  CHECK(std::fabs(c.fd_derivative) <= 1e-3);
  CHECK(c.agrees());
}

TEST_CASE("shape derivative: Gaussian d = 3, b = 0.5") {
  Rng rng(59);
  const GaussianLaw law = GaussianLaw::standard(3);
  const TeacherSpec t = random_teacher(rng, 2, 3);
  const MoEModel m(LinearRouter::binary(rng.vec(3), 0.5), LinearExpertSet(rng.mat(2, 3), rng.vec(2)), 0.0);
  const ShapeDerivativeCheck c = hard_risk_bias_derivative_check(m, t, law, 1e-3, 10'000'000, 13);
  CAPTURE(c.fd_derivative);
  CAPTURE(c.surface_formula);
  CAPTURE(c.combined_std_error);
  CHECK(c.abs_diff <= std::max(1e-3, 3.0 * c.combined_std_error));
  CHECK(c.agrees());
  CHECK(std::fabs(c.surface_formula) > 3.0 * c.surface_std_error);  // a non-trivial configuration
}
