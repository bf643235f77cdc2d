#include "moebl/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace moebl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void fill_chunk(const GaussianLaw& law, std::uint64_t seed, std::size_t chunk, std::size_t rows,
                Eigen::MatrixXd& out) {
  const auto d = static_cast<Eigen::Index>(law.dim());
  std::mt19937_64 engine(chunk_stream_seed(seed, chunk));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows), d);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = normal(engine);
  }
  out.noalias() = z * law.cholesky().transpose();
  out.rowwise() += law.mean().transpose();
}

std::size_t chunk_count(std::size_t n) { return (n + kSampleChunkRows - 1) / kSampleChunkRows; }

std::size_t chunk_rows(std::size_t n, std::size_t chunk) {
  return std::min(kSampleChunkRows, n - chunk * kSampleChunkRows);
}

}  // namespace

GaussianLaw::GaussianLaw(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  const Eigen::Index d = mean_.size();
  if (d < 1) throw std::invalid_argument("GaussianLaw needs dimension >= 1");
  if (covariance_.rows() != d || covariance_.cols() != d) {
    throw std::invalid_argument("covariance shape does not match the mean");
  }
  if (!mean_.allFinite() || !covariance_.allFinite()) throw std::invalid_argument("GaussianLaw entries must be finite");
  const double scale = std::max(1.0, covariance_.cwiseAbs().maxCoeff());
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("covariance is not symmetric");
  }
  covariance_ = 0.5 * (covariance_ + covariance_.transpose()).eval();

  Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance is not positive definite");
  chol_ = llt.matrixL();
  const double max_diag = covariance_.diagonal().maxCoeff();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(chol_(i, i) * chol_(i, i) >= 1e-12 * max_diag)) {
      throw std::invalid_argument("covariance is numerically singular (Cholesky pivot too small)");
    }
  }
}

GaussianLaw GaussianLaw::standard(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
}

std::uint64_t chunk_stream_seed(std::uint64_t seed, std::uint64_t chunk_index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(chunk_index + 0x632be59bd9b4e019ULL));
}

SampleBatch gaussian_sample(const GaussianLaw& law, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gaussian_sample needs n >= 1");
  SampleBatch batch;
  batch.seed = seed;
  batch.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(law.dim()));

  const std::size_t chunks = chunk_count(n);
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(chunks, 1));
  // Chunk c depends only on (seed, c), so the split across threads does not
  // change the result.
  auto work = [&](std::size_t worker) {
    Eigen::MatrixXd block;
    for (std::size_t c = worker; c < chunks; c += workers) {
      const std::size_t rows = chunk_rows(n, c);
      block.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(law.dim()));
      fill_chunk(law, seed, c, rows, block);
      batch.points.middleRows(static_cast<Eigen::Index>(c * kSampleChunkRows), static_cast<Eigen::Index>(rows)) =
          block;
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  return batch;
}

void for_each_sample_chunk(const GaussianLaw& law, std::size_t n, std::uint64_t seed,
                           const std::function<void(const Eigen::MatrixXd& chunk, std::size_t first_row)>& visit) {
  if (n < 1) throw std::invalid_argument("for_each_sample_chunk needs n >= 1");
  Eigen::MatrixXd block;
  for (std::size_t c = 0; c < chunk_count(n); ++c) {
    const std::size_t rows = chunk_rows(n, c);
    block.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(law.dim()));
    fill_chunk(law, seed, c, rows, block);
    visit(block, c * kSampleChunkRows);
  }
}

Eigen::VectorXd standard_normal_vector(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 engine(splitmix64(seed ^ 0x5bd1e995ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = normal(engine);
  return out;
}

McEstimate mc_mean(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("mc_mean needs at least two values");
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n), values.size()};
}

McEstimate mc_proportion(std::size_t hits, std::size_t n) {
  if (n < 2) throw std::invalid_argument("mc_proportion needs n >= 2");
  if (hits > n) throw std::invalid_argument("mc_proportion: hits exceed n");
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(hits) / nd;
  return {p, std::sqrt(p * (1.0 - p) / (nd - 1.0)), n};
}

}  // namespace moebl
