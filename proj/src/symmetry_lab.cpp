#include "moebl/symmetry_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "moebl/kernels.hpp"
#include "moebl/numerics.hpp"

namespace moebl {

namespace {

void require_positive(double value, const char* what) {
  if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument(what);
}

void require_batch(const SampleBatch& batch, std::size_t d, const Eigen::VectorXd& y) {
  if (batch.dim() != d) throw std::invalid_argument("batch dimension does not match");
  if (batch.n() < 2) throw std::invalid_argument("reduced model needs at least two samples");
  if (static_cast<std::size_t>(y.size()) != batch.n()) throw std::invalid_argument("target length must equal n");
}

// Expert outputs on the batch, kept contiguous for the kernels.
struct ExpertColumns {
  Eigen::VectorXd f1;
  Eigen::VectorXd f2;
};

ExpertColumns expert_columns(const LinearExpertSet& experts, const SampleBatch& batch) {
  if (experts.num_experts() != 2) throw std::invalid_argument("reduced model needs exactly two experts");
  const Eigen::MatrixXd f = experts.predict_batch(batch.points);
  return {f.col(0), f.col(1)};
}

ReducedEval eval_columns(const Eigen::VectorXd& u, const ExpertColumns& f, const Eigen::VectorXd& y,
                         const SampleBatch& batch, double tau, double bm_width, bool want_gradient) {
  require_positive(tau, "temperature must be positive");
  if (static_cast<std::size_t>(u.size()) != batch.dim()) throw std::invalid_argument("router dimension mismatch");
  const kernels::KernelTable& k = kernels::active_kernels();
  const std::size_t n = batch.n();
  const std::size_t d = batch.dim();
  const double* x = batch.points.data();
  // Row blocks small enough that the gradient dots reread the block from
  // cache; blocks are reduced in index order, so the result is deterministic.
  constexpr std::size_t kBlock = 2048;
  std::vector<double> s(kBlock);
  std::vector<double> coef(kBlock);
  std::vector<double> grad(d, 0.0);
  kernels::GateSums sums;
  for (std::size_t i0 = 0; i0 < n; i0 += kBlock) {
    const std::size_t m = std::min(kBlock, n - i0);
    k.affine_scores(x + i0, m, d, n, u.data(), 0.0, s.data());
    // The slab is stated on the logit difference 2u'x; the kernel sees u'x.
    const kernels::GateSums part = k.router_pass(s.data(), y.data() + i0, f.f1.data() + i0, f.f2.data() + i0, m,
                                                 1.0 / tau, 0.5 * bm_width, coef.data());
    sums.loss += part.loss;
    sums.entropy += part.entropy;
    sums.slab_hits += part.slab_hits;
    if (want_gradient) {
      for (std::size_t j = 0; j < d; ++j) grad[j] += k.dot(x + j * n + i0, coef.data(), m);
    }
  }
  const double nd = static_cast<double>(n);
  ReducedEval out;
  out.risk = sums.loss / nd;
  out.entropy = sums.entropy / nd;
  out.boundary_mass = static_cast<double>(sums.slab_hits) / nd;
  if (want_gradient) {
    out.gradient.resize(static_cast<Eigen::Index>(d));
    const double scale = -4.0 / (tau * nd);
    for (std::size_t j = 0; j < d; ++j) out.gradient(static_cast<Eigen::Index>(j)) = scale * grad[j];
  }
  return out;
}

double effective_bm_width(const TrainSettings& s) { return s.bm_width > 0.0 ? s.bm_width : 2.0 * s.tau; }

}  // namespace

SymmetrySpec::SymmetrySpec(Eigen::VectorXd v_in, Eigen::VectorXd d_star_in, Eigen::MatrixXd sigma_in,
                           Eigen::VectorXd baseline_w_in, double baseline_b_in)
    : v(std::move(v_in)),
      d_star(std::move(d_star_in)),
      sigma(std::move(sigma_in)),
      baseline_w(std::move(baseline_w_in)),
      baseline_b(baseline_b_in) {
  const Eigen::Index d = v.size();
  if (d < 1) throw std::invalid_argument("SymmetrySpec needs d >= 1");
  if (std::fabs(v.norm() - 1.0) > 1e-12) throw std::invalid_argument("teacher separator v must be a unit vector");
  if (d_star.size() != d || sigma.rows() != d || sigma.cols() != d) {
    throw std::invalid_argument("SymmetrySpec shapes disagree");
  }
  if (baseline_w.size() == 0) baseline_w = Eigen::VectorXd::Zero(d);
  if (baseline_w.size() != d) throw std::invalid_argument("baseline weight has the wrong dimension");
  GaussianLaw check(Eigen::VectorXd::Zero(d), sigma);  // validates Sigma
  sigma = check.covariance();
}

GaussianLaw SymmetrySpec::law() const { return {Eigen::VectorXd::Zero(v.size()), sigma}; }

Eigen::VectorXd SymmetrySpec::targets(const SampleBatch& batch) const {
  if (batch.dim() != dim()) throw std::invalid_argument("batch dimension does not match the spec");
  const Eigen::VectorXd t = batch.points * v;
  const Eigen::VectorXd c = batch.points * d_star;
  Eigen::VectorXd y = (batch.points * baseline_w).array() + baseline_b;
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += (t(i) >= 0.0 ? 0.5 : -0.5) * c(i);
  return y;
}

ResponseFn ResponseFn::sign() { return {}; }

ResponseFn ResponseFn::tanh(double gamma) {
  require_positive(gamma, "tanh response needs gamma > 0");
  ResponseFn g;
  g.kind = Kind::tanh;
  g.gamma = gamma;
  return g;
}

ResponseFn ResponseFn::make_custom(std::function<double(double)> fn, bool allow_quadrature) {
  if (!fn) throw std::invalid_argument("custom response needs a callable");
  ResponseFn g;
  g.kind = Kind::custom;
  g.custom = std::move(fn);
  g.custom_quadrature = allow_quadrature;
  return g;
}

double ResponseFn::operator()(double z) const {
  switch (kind) {
    case Kind::sign: return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
    case Kind::tanh: return std::tanh(gamma * z);
    case Kind::custom: return custom(z);
  }
  return 0.0;
}

EffectiveOperator::EffectiveOperator(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() < 1 || matrix.rows() != matrix.cols()) throw std::invalid_argument("operator must be square");
  if (!matrix.allFinite()) throw std::invalid_argument("operator entries must be finite");
  matrix_ = 0.5 * (matrix + matrix.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(matrix_);
  if (eig.info() != Eigen::Success) throw NumericalFailure("symmetric eigensolver did not converge");
  // Eigen returns ascending order.
  eigenvalues_ = eig.eigenvalues().reverse();
  eigenvectors_ = eig.eigenvectors().rowwise().reverse();
}

Eigen::MatrixXd EffectiveOperator::reconstruct() const {
  return eigenvectors_ * eigenvalues_.asDiagonal() * eigenvectors_.transpose();
}

Eigen::VectorXd EffectiveOperator::positive_projection(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
    if (eigenvalues_(i) > 0.0) out += eigenvectors_.col(i).dot(x) * eigenvectors_.col(i);
  }
  return out;
}

OperatorEstimate build_M_mc(const ResponseFn& g, const SymmetrySpec& spec, const SampleBatch& batch) {
  if (batch.dim() != spec.dim()) throw std::invalid_argument("batch dimension does not match the spec");
  if (batch.n() < 2) throw std::invalid_argument("build_M_mc needs n >= 2");
  const Eigen::VectorXd t = batch.points * spec.v;
  const Eigen::VectorXd c = batch.points * spec.d_star;
  Eigen::VectorXd w(t.size());
  std::vector<double> rq(static_cast<std::size_t>(t.size()));
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    w(i) = g(t(i)) * c(i);
    rq[static_cast<std::size_t>(i)] = w(i) * t(i) * t(i);
  }
  const Eigen::MatrixXd m =
      (batch.points.transpose() * w.asDiagonal() * batch.points) / static_cast<double>(batch.n());
  return {EffectiveOperator(m), mc_mean(rq)};
}

OperatorEstimate build_M_mc(const ResponseFn& g, const SymmetrySpec& spec, std::size_t n, std::uint64_t seed) {
  return build_M_mc(g, spec, gaussian_sample(spec.law(), n, seed));
}

double kappa_g(const ResponseFn& g, double s) {
  require_positive(s, "kappa_g needs s > 0");
  if (g.kind == ResponseFn::Kind::sign) return 2.0 * std::sqrt(2.0 / std::numbers::pi);
  if (g.kind == ResponseFn::Kind::custom && !g.custom_quadrature) {
    throw std::invalid_argument("custom response has no quadrature hook");
  }
  // E[g(sZ) Z^3] over Z ~ N(0,1). The Gaussian tail beyond |z| = 12 is below
  // 1e-30, so the truncation is invisible at double precision.
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto integrand = [&](double z) { return g(s * z) * z * z * z * inv_sqrt_2pi * std::exp(-0.5 * z * z); };
  using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
  constexpr double tol = 1e-13;
  double err_neg = 0.0;
  double err_pos = 0.0;
  // Split at 0: tanh(gamma z) with large gamma has its only sharp feature there.
  const double neg = Quad::integrate(integrand, -12.0, 0.0, 20, tol, &err_neg);
  const double pos = Quad::integrate(integrand, 0.0, 12.0, 20, tol, &err_pos);
  const double value = neg + pos;
  if (!std::isfinite(value) || err_neg + err_pos > 1e-10 * std::max(1.0, std::fabs(value))) {
    throw NumericalFailure("kappa_g quadrature did not reach tolerance");
  }
  return value;
}

double rayleigh_analytic(const ResponseFn& g, const SymmetrySpec& spec) {
  const Eigen::VectorXd sv = spec.sigma * spec.v;
  const double s = std::sqrt(spec.v.dot(sv));
  return kappa_g(g, s) * spec.d_star.dot(sv) * s;
}

std::vector<Eigen::VectorXd> linearized_iterate(const Eigen::VectorXd& u0, const EffectiveOperator& M, double eta,
                                                double tau, std::size_t steps) {
  require_positive(eta, "eta must be positive");
  require_positive(tau, "tau must be positive");
  if (static_cast<std::size_t>(u0.size()) != M.dim()) throw std::invalid_argument("u0 dimension mismatch");
  const double r = eta / tau;
  std::vector<Eigen::VectorXd> out;
  out.reserve(steps + 1);
  out.push_back(u0);
  for (std::size_t t = 0; t < steps; ++t) out.push_back(out.back() + r * (M.matrix() * out.back()));
  return out;
}

double alignment_rate(double lambda1, double lambda2, double eta, double tau) {
  require_positive(eta, "eta must be positive");
  require_positive(tau, "tau must be positive");
  const double den = 1.0 + eta * lambda1 / tau;
  if (den == 0.0) throw std::invalid_argument("alignment rate undefined: 1 + eta lambda1 / tau = 0");
  return std::fabs((1.0 + eta * lambda2 / tau) / den);
}

double alignment(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::min(1.0, std::fabs(u.dot(v)) / (nu * nv));
}

ReducedEval reduced_eval(const Eigen::VectorXd& u, const LinearExpertSet& experts, const Eigen::VectorXd& y,
                         const SampleBatch& batch, double tau, double bm_width) {
  require_batch(batch, experts.dim(), y);
  return eval_columns(u, expert_columns(experts, batch), y, batch, tau, bm_width, true);
}

Eigen::VectorXd reduced_gradient(const Eigen::VectorXd& u, const LinearExpertSet& experts, const Eigen::VectorXd& y,
                                 const SampleBatch& batch, double tau) {
  return reduced_eval(u, experts, y, batch, tau, 2.0 * tau).gradient;
}

double reduced_risk(const Eigen::VectorXd& u, const LinearExpertSet& experts, const Eigen::VectorXd& y,
                    const SampleBatch& batch, double tau) {
  require_batch(batch, experts.dim(), y);
  return eval_columns(u, expert_columns(experts, batch), y, batch, tau, 2.0 * tau, false).risk;
}

Eigen::VectorXd reduced_gradient_fd(const Eigen::VectorXd& u, const LinearExpertSet& experts,
                                    const Eigen::VectorXd& y, const SampleBatch& batch, double tau) {
  require_batch(batch, experts.dim(), y);
  const ExpertColumns f = expert_columns(experts, batch);
  const double h = 1e-6 * (1.0 + u.norm());
  Eigen::VectorXd out(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    Eigen::VectorXd up = u;
    Eigen::VectorXd dn = u;
    up(j) += h;
    dn(j) -= h;
    const double lp = eval_columns(up, f, y, batch, tau, 2.0 * tau, false).risk;
    const double lm = eval_columns(dn, f, y, batch, tau, 2.0 * tau, false).risk;
    out(j) = (lp - lm) / (up(j) - dn(j));
  }
  return out;
}

LinearExpertSet contrast_experts(const SampleBatch& batch, const Eigen::VectorXd& y, const Eigen::VectorXd& contrast,
                                 bool with_intercept) {
  const auto d = static_cast<Eigen::Index>(batch.dim());
  if (contrast.size() != d) throw std::invalid_argument("contrast dimension mismatch");
  if (static_cast<std::size_t>(y.size()) != batch.n()) throw std::invalid_argument("target length must equal n");
  const Eigen::Index cols = with_intercept ? d + 1 : d;
  Eigen::MatrixXd design(batch.points.rows(), cols);
  design.leftCols(d) = batch.points;
  if (with_intercept) design.col(d).setOnes();
  const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(y);
  const double intercept = with_intercept ? beta(d) : 0.0;
  Eigen::MatrixXd w(2, d);
  w.row(0) = (beta.head(d) + 0.5 * contrast).transpose();
  w.row(1) = (beta.head(d) - 0.5 * contrast).transpose();
  Eigen::VectorXd b(2);
  b << intercept, intercept;
  return {w, b};
}

Eigen::VectorXd initial_direction(const Eigen::VectorXd& v, double cos_target, double norm, std::uint64_t seed) {
  if (!(cos_target >= 0.0 && cos_target <= 1.0)) throw std::invalid_argument("cos_target must lie in [0, 1]");
  const Eigen::VectorXd vn = v.normalized();
  Eigen::VectorXd w = standard_normal_vector(static_cast<std::size_t>(v.size()), seed);
  w -= w.dot(vn) * vn;
  if (!(w.norm() > 0.0)) throw std::invalid_argument("cannot build an orthogonal direction in d = 1");
  w.normalize();
  return norm * (cos_target * vn + std::sqrt(1.0 - cos_target * cos_target) * w);
}

RouterTrace reduced_router_train(const SymmetrySpec& spec, const LinearExpertSet& experts, const SampleBatch& batch,
                                 const TrainSettings& settings, const Eigen::VectorXd& u0) {
  require_positive(settings.eta, "eta must be positive");
  require_positive(settings.tau, "tau must be positive");
  if (static_cast<std::size_t>(u0.size()) != spec.dim()) throw std::invalid_argument("u0 dimension mismatch");
  const Eigen::VectorXd y = spec.targets(batch);
  require_batch(batch, experts.dim(), y);
  const ExpertColumns f = expert_columns(experts, batch);
  const double width = effective_bm_width(settings);
  const std::size_t every = std::max<std::size_t>(settings.record_every, 1);

  RouterTrace trace;
  trace.eta = settings.eta;
  trace.tau = settings.tau;
  trace.bm_width = width;
  trace.seed = batch.seed;

  Eigen::VectorXd u = u0;
  for (std::size_t t = 0;; ++t) {
    const ReducedEval e = eval_columns(u, f, y, batch, settings.tau, width, t < settings.steps);
    const bool last = t == settings.steps;
    if (t % every == 0 || last) {
      trace.records.push_back({t, u, alignment(u, spec.v), e.risk, e.entropy, e.boundary_mass});
    }
    if (last) break;
    u -= settings.eta * e.gradient;
    if (!u.allFinite() || u.norm() > 1e6) {
      trace.diverged = true;
      trace.records.push_back({t + 1, u, u.allFinite() ? alignment(u, spec.v) : 0.0, e.risk, e.entropy,
                               e.boundary_mass});
      break;
    }
  }
  return trace;
}

RouterTrace reduced_router_train(const SymmetrySpec& spec, const LinearExpertSet& experts,
                                 const TrainSettings& settings, std::size_t n, std::uint64_t seed,
                                 const Eigen::VectorXd& u0) {
  return reduced_router_train(spec, experts, gaussian_sample(spec.law(), n, seed), settings, u0);
}

}  // namespace moebl
