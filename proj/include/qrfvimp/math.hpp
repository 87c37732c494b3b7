#ifndef QRFVIMP_MATH_HPP
#define QRFVIMP_MATH_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace qrfvimp {

inline constexpr double kPi = 3.14159265358979323846;

double normal_pdf(double x);
double normal_cdf(double x);

/// Inverse standard normal CDF, accurate to ~1 ulp (rational approximation
/// refined by one Halley step on erfc).
double normal_quantile(double p);

/// Adaptive Simpson quadrature on [a, b] to absolute tolerance `tol`.
/// Throws NumericError when the recursion depth limit is hit before the
/// local error estimate falls below tolerance.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-10);

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [0, 1]
  std::vector<double> weights;  // sum to 1
};

/// Gauss-Legendre nodes/weights mapped to [0, 1].
GaussLegendreRule gauss_legendre(int order);

/// Mean against normalized weights. Weights need not sum to one.
double weighted_mean(std::span<const double> values, std::span<const double> weights);

/// Population-style weighted variance: sum w_i (v_i - mean)^2 / sum w_i.
double weighted_variance(std::span<const double> values, std::span<const double> weights);

/// Sample variance with divisor n-1. Requires at least two values.
double sample_variance(std::span<const double> values);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

/// Ordinary least squares y ~ a + b x with the usual slope standard error.
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

/// FNV-1a over a byte range; used for dataset fingerprints and file checksums.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Shortest decimal representation that round-trips the double exactly.
std::string format_double(double v);

}  // namespace qrfvimp

#endif  // QRFVIMP_MATH_HPP
