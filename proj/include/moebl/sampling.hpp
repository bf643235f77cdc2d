#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include <Eigen/Dense>

namespace moebl {

/// N(mean, covariance) with a cached lower Cholesky factor.
///
/// Construction rejects non-symmetric input (entrywise asymmetry above
/// 1e-12 relative to the largest entry) and any Cholesky pivot below
/// 1e-12 times the largest diagonal entry.
class GaussianLaw {
 public:
  GaussianLaw(Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  static GaussianLaw standard(std::size_t dim);

  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }
  [[nodiscard]] const Eigen::VectorXd& mean() const noexcept { return mean_; }
  [[nodiscard]] const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
  [[nodiscard]] const Eigen::MatrixXd& cholesky() const noexcept { return chol_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_;
};

/// n x d sample matrix (column-major, so each coordinate is contiguous).
struct SampleBatch {
  Eigen::MatrixXd points;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t n() const noexcept { return static_cast<std::size_t>(points.rows()); }
  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(points.cols()); }
};

/// Rows per chunk. Every chunk draws from its own stream seeded from
/// (seed, chunk index), so chunks can be produced in any order.
inline constexpr std::size_t kSampleChunkRows = std::size_t{1} << 14;

/// Stream seed for one chunk (SplitMix64 finaliser over seed and index).
std::uint64_t chunk_stream_seed(std::uint64_t seed, std::uint64_t chunk_index);

SampleBatch gaussian_sample(const GaussianLaw& law, std::size_t n, std::uint64_t seed);

/// Visits the same rows gaussian_sample(law, n, seed) would produce, one
/// chunk at a time and in chunk order, without materialising the batch.
void for_each_sample_chunk(const GaussianLaw& law, std::size_t n, std::uint64_t seed,
                           const std::function<void(const Eigen::MatrixXd& chunk, std::size_t first_row)>& visit);

/// i.i.d. standard normal draws for ad-hoc use (initial directions, random configurations).
Eigen::VectorXd standard_normal_vector(std::size_t dim, std::uint64_t seed);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(n)
  std::size_t n = 0;
};

/// Mean and standard error, two-pass, in index order.
McEstimate mc_mean(std::span<const double> values);

/// mc_mean of a 0/1 sequence with `hits` ones out of `n`, without the sequence.
McEstimate mc_proportion(std::size_t hits, std::size_t n);

}  // namespace moebl
