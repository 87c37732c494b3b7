#ifndef QRFVIMP_SIMLAB_HPP
#define QRFVIMP_SIMLAB_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrfvimp/dataset.hpp"
#include "qrfvimp/forest.hpp"
#include "qrfvimp/pinball.hpp"
#include "qrfvimp/rng.hpp"
#include "qrfvimp/vimp.hpp"

namespace qrfvimp {

enum class DgpKind { linear_gaussian, linear_noise_features, heteroscedastic };

DgpKind dgp_kind_from_string(const std::string& name);
std::string dgp_kind_to_string(DgpKind kind);

/// Linear-Gaussian data-generating process on the unit cube:
///   X ~ U[0,1]^p iid,  Y = c'X + scale(X) * eps,  eps ~ N(0,1),
/// with scale(x) = noise_scale for the homoscedastic kinds and
/// noise_scale * (1 + x_1) for the heteroscedastic one. Coefficients shorter
/// than p are zero-padded (extra columns are pure noise features).
struct DGPSpec {
  DgpKind kind = DgpKind::linear_gaussian;
  std::vector<double> coefficients;
  double noise_scale = 1.0;
  std::size_t p = 1;

  void validate() const;
  double coefficient(std::size_t j) const {
    return j < coefficients.size() ? coefficients[j] : 0.0;
  }
  double mean(std::span<const double> x) const;
  double scale(std::span<const double> x) const;
};

Dataset generate(const DGPSpec& dgp, std::size_t n, Rng& rng);

/// Analytic conditional quantile: mean(x) + scale(x) * z_tau.
double oracle_quantile(const DGPSpec& dgp, QuantileLevel tau, std::span<const double> x);

/// Quantile of Y given X_{-S} = x_{-S}. The removed coordinates enter through
/// the convolution W = c_S'U + scale * eps with U ~ U[0,1]^{|S|}; the CDF is
/// evaluated by Gauss-Legendre quadrature and inverted by bisection to 1e-8.
/// Precomputes the convolution quantile, so `at` is cheap per point.
class RestrictedQuantileOracle {
 public:
  RestrictedQuantileOracle(const DGPSpec& dgp, QuantileLevel tau, const FeatureSubset& subset);
  double at(std::span<const double> x) const;

 private:
  double convolution_quantile(double scale_factor) const;

  DGPSpec dgp_;
  double tau_ = 0.5;
  std::vector<std::size_t> subset_;
  std::vector<std::size_t> quad_dims_;   // removed dims that matter (coef != 0 or scale)
  bool scale_depends_on_query_ = false;  // heteroscedastic with x_1 kept
  double const_quantile_ = 0.0;          // used when the convolution is scale-fixed
  std::vector<double> grid_quantiles_;   // over x_1 in [0,1] otherwise
};

double oracle_restricted_quantile(const DGPSpec& dgp, QuantileLevel tau,
                                  std::span<const double> x, const FeatureSubset& subset);

/// Population variable importance V_tau(S) by tensor quadrature over the
/// active coordinates, using the closed-form Gaussian pinball risk.
double oracle_vi(const DGPSpec& dgp, QuantileLevel tau, const FeatureSubset& subset);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo cross-check of oracle_vi.
McEstimate oracle_vi_mc(const DGPSpec& dgp, QuantileLevel tau, const FeatureSubset& subset,
                        std::size_t n_draws, std::uint64_t seed);

enum class Campaign { phase_transition, normality, bias_scaling };

Campaign campaign_from_string(const std::string& name);
std::string campaign_to_string(Campaign c);

struct SimConfig {
  Campaign campaign = Campaign::phase_transition;
  DGPSpec dgp;
  double tau = 0.5;
  std::vector<std::size_t> n_grid;
  std::vector<double> beta_grid;
  int replications = 300;
  double level = 0.95;
  FeatureSubset subset;                           // VI campaigns
  std::vector<std::vector<double>> probe_points;  // normality campaign
  ForestConfig forest;  // beta, tau, and seed are driven per cell/replication
  std::uint64_t seed = 0;
  int threads = 0;
  double max_failure_rate = 0.10;

  void validate() const;
};

/// One long-format record per (n, beta, replication, metric).
struct SimRecord {
  std::size_t n = 0;
  double beta = 0.0;
  int rep = 0;
  std::string metric;
  double value = 0.0;
};

struct SimResult {
  std::vector<SimRecord> records;
  nlohmann::json summary;
};

/// Cross-fitted VI with bias machinery over the (n, beta) grid; records
/// estimates, standardized errors, and CI hit flags against the oracle.
SimResult run_phase_transition(const SimConfig& config);

/// Pointwise standardized errors of the quantile estimator at the probe
/// points; reports QQ correlation against normal quantiles and CI coverage.
SimResult run_pointwise_normality(const SimConfig& config);

/// mean |v_hat - V| across the n grid at fixed beta; reports the log-log
/// slope with its least-squares standard error.
SimResult run_bias_scaling(const SimConfig& config);

SimResult run_campaign(const SimConfig& config);

void write_sim_csv(const SimResult& result, const std::string& path);

SimConfig sim_config_from_json(const nlohmann::json& doc);
nlohmann::json sim_config_to_json(const SimConfig& config);

}  // namespace qrfvimp

#endif  // QRFVIMP_SIMLAB_HPP
