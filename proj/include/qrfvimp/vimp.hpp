#ifndef QRFVIMP_VIMP_HPP
#define QRFVIMP_VIMP_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qrfvimp/dataset.hpp"
#include "qrfvimp/forest.hpp"
#include "qrfvimp/pinball.hpp"
#include "qrfvimp/rng.hpp"

namespace qrfvimp {

/// Sorted set of 0-based feature positions to remove from the restricted
/// model. May be empty.
class FeatureSubset {
 public:
  FeatureSubset() = default;
  explicit FeatureSubset(std::vector<std::size_t> indices);

  const std::vector<std::size_t>& indices() const { return indices_; }
  bool empty() const { return indices_.empty(); }
  std::size_t size() const { return indices_.size(); }

  /// Indices must be valid for a p-column dataset; for restricted fits the
  /// subset must also leave at least one column.
  void validate_for(std::size_t n_cols, bool allow_full = true) const;

 private:
  std::vector<std::size_t> indices_;
};

struct CrossFitSplit {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> eval_rows;
};

/// Uniform random partition into two folds of equal size (+-1 when n is odd).
CrossFitSplit cross_fit_split(const Dataset& data, Rng& rng);

/// Forest on the dataset with the subset columns removed. The model keeps the
/// source column mapping, so queries still take full-dimension points.
ForestModel fit_restricted(const Dataset& data, const FeatureSubset& subset,
                           const ForestConfig& config, int threads = 0);

struct ViEstimate {
  double v_hat = 0.0;
  std::vector<double> per_point;  // one loss difference per evaluation row
};

/// Cross-fitted excess-risk estimate: the average over evaluation rows of
/// rho_tau(Y - q_restricted(X)) - rho_tau(Y - q_full(X)), both quantiles
/// predicted from the training-fold forests. Rejects models whose training
/// fingerprint does not match the training fold or matches the evaluation
/// fold (fold leakage).
ViEstimate vi_estimate(const Dataset& train, const Dataset& eval_fold, const ForestModel& full,
                       const ForestModel& restricted, QuantileLevel tau, int threads = 1);

/// Sample variance (divisor n-1) of the per-point loss differences.
double vi_variance(std::span<const double> per_point);

struct BiasConstantEstimate {
  double c_hat = 0.0;
  double floor_fraction_full = 0.0;
  double floor_fraction_restricted = 0.0;
  bool quality_warning = false;  // density floor engaged on > 50% of points
};

/// Plug-in bias constant: tau(1-tau)/(2 n_eval) * sum_i of
/// eta_restricted/f_restricted - eta_full/f_full, with each density evaluated
/// at the owning model's own prediction. bandwidth <= 0 selects the default
/// per-point rule.
BiasConstantEstimate bias_constant_estimate(const ForestModel& full,
                                            const ForestModel& restricted, const Dataset& train,
                                            const Dataset& eval_fold, QuantileLevel tau,
                                            double bandwidth = 0.0, int threads = 1);

/// v_tilde = v_hat - n_eval^(beta-1) * c_hat.
double bias_corrected_vi(double v_hat, double c_hat, std::size_t n_eval, double beta);

/// center +- z_{(1+level)/2} * sigma_s / sqrt(n_eval).
std::pair<double, double> vi_confidence_interval(double center, double sigma_s_hat,
                                                 std::size_t n_eval, double level);

struct VimpReport {
  double v_hat = 0.0;
  double sigma_s_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double c_hat = 0.0;
  double v_tilde = 0.0;
  double corrected_ci_low = 0.0;
  double corrected_ci_high = 0.0;
  double beta_used = 0.0;
  double tau = 0.5;
  double level = 0.95;
  std::size_t n_eval = 0;
  std::vector<std::size_t> subset;  // 0-based
  std::uint64_t seed = 0;
  bool bias_estimated = true;
  double floor_fraction_full = 0.0;
  double floor_fraction_restricted = 0.0;
  std::vector<std::string> warnings;
  std::optional<std::vector<double>> per_point_losses;
};

struct VimpOptions {
  FeatureSubset subset;
  ForestConfig forest;       // seed drives the cross-fit split and both fits
  double level = 0.95;
  int threads = 0;
  bool keep_per_point = false;
  bool estimate_bias = true;
  double bandwidth = 0.0;    // <= 0: default per-point rule
};

/// Full pipeline: cross-fit split, two nuisance fits (same seed, so an empty
/// subset yields exactly identical models and v_hat == 0), evaluation-fold
/// scoring, variance, bias constant, corrected estimate, and intervals.
VimpReport run_vimp(const Dataset& data, const VimpOptions& options);

nlohmann::json vimp_report_to_json(const VimpReport& report);

}  // namespace qrfvimp

#endif  // QRFVIMP_VIMP_HPP
