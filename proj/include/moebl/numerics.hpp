#pragma once

#include <span>
#include <stdexcept>
#include <string>

namespace moebl {

/// Raised when an iterative or quadrature routine fails to reach its tolerance.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

// Standard normal distribution function and density. The CDF goes through
// erfc so the lower tail keeps full relative accuracy.
double normal_cdf(double z);
double normal_pdf(double z);

/// Ordinary least-squares slope of log(y) against log(x). All entries must be
/// positive and there must be at least two of them.
double log_log_slope(std::span<const double> x, std::span<const double> y);

/// Intercept companion of log_log_slope: returns exp(intercept), i.e. C in y ~ C x^slope.
double log_log_prefactor(std::span<const double> x, std::span<const double> y);

/// Pearson correlation; returns 0 when either series is constant.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace moebl
