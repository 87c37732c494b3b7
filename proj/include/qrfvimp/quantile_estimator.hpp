#ifndef QRFVIMP_QUANTILE_ESTIMATOR_HPP
#define QRFVIMP_QUANTILE_ESTIMATOR_HPP

#include <span>
#include <vector>

#include "qrfvimp/dataset.hpp"
#include "qrfvimp/forest.hpp"
#include "qrfvimp/pinball.hpp"

namespace qrfvimp {

/// Floor applied to the conditional density estimate before it enters
/// 1/f^2; the population density is bounded away from zero near the
/// quantile, so the floor only guards numerics.
inline constexpr double kDensityFloor = 1e-4;

struct QuantilePrediction {
  double q_hat = 0.0;
  double eta_hat = 0.0;
  double f_hat = 0.0;
  double sigma2_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.0;
  bool f_floored = false;
  double bandwidth = 0.0;
};

/// Smallest support value whose cumulative weight reaches tau; this is the
/// left endpoint of the argmin set of sum_i w_i rho_tau(values_i - theta),
/// consistent with the left-derivative convention psi_tau(0) = tau - 1.
double weighted_quantile(std::span<const double> values, const WeightVector& weights,
                         QuantileLevel tau);

/// Forest-weighted kernel density at `at` with Gaussian kernel and
/// bandwidth h (unfloored).
double weighted_kde(std::span<const double> values, const WeightVector& weights, double at,
                    double h);

/// Silverman-style rule h = 1.06 sigma_w m_eff^{-1/5} with m_eff = 1 / sum K^2
/// (effective support size). Degenerate scale falls back to an IQR-based value
/// floored at 1e-3.
double default_bandwidth(std::span<const double> values, const WeightVector& weights);

/// Assembles sigma2 = tau(1-tau) eta / f^2 and the two-sided interval
/// q_hat -+ z_{(1+level)/2} sqrt((s/n) sigma2).
QuantilePrediction interval_from_components(double q_hat, double eta_hat, double f_hat,
                                            QuantileLevel tau, double level, std::size_t n,
                                            std::size_t s);

/// Weighted-quantile prediction at x against the model's training responses.
double predict_quantile(const ForestModel& model, const Dataset& data,
                        std::span<const double> x);

/// Plug-in variance scaling (n/s) sum_i K(x, X_i)^2.
double variance_scaling(const ForestModel& model, std::span<const double> x, std::size_t n,
                        std::size_t s);

/// Forest-weighted conditional density of Y at `at`, floored at kDensityFloor.
double conditional_density(const ForestModel& model, const Dataset& data,
                           std::span<const double> x, double at, double h);

QuantilePrediction predict_with_interval(const ForestModel& model, const Dataset& data,
                                         std::span<const double> x, double level);

/// Bundles a fitted model with its training responses and reusable weight
/// scratch so repeated queries avoid per-point allocation. Not thread-safe;
/// use one instance per thread.
class ForestPredictor {
 public:
  explicit ForestPredictor(const ForestModel& model);
  ForestPredictor(const ForestModel& model, const Dataset& data);

  struct PointStats {
    double q_hat = 0.0;
    double eta_hat = 0.0;
    double f_hat = 0.0;
    bool f_floored = false;
    double bandwidth = 0.0;
  };

  const ForestModel& model() const { return model_; }

  double quantile(std::span<const double> x);
  /// One weight pass yielding q_hat, eta_hat, and the (floored) density at
  /// q_hat. fixed_bandwidth <= 0 selects the default per-point rule.
  PointStats stats(std::span<const double> x, double fixed_bandwidth = 0.0);
  QuantilePrediction interval(std::span<const double> x, double level);

 private:
  void load_weights(std::span<const double> x);
  double scan_quantile(double tau) const;

  const ForestModel& model_;
  std::span<const double> y_;
  std::vector<std::int32_t> y_order_;  // rows sorted by (response, row)
  WeightAccumulator acc_;
};

}  // namespace qrfvimp

#endif  // QRFVIMP_QUANTILE_ESTIMATOR_HPP
