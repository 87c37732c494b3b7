#include "qrfvimp/vimp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qrfvimp/errors.hpp"
#include "qrfvimp/math.hpp"
#include "qrfvimp/parallel.hpp"
#include "qrfvimp/quantile_estimator.hpp"

namespace qrfvimp {

namespace {

constexpr std::uint64_t kCrossFitTag = 0x63666974ULL;

void check_folds(const Dataset& train, const Dataset& eval_fold, const ForestModel& full,
                 const ForestModel& restricted) {
  if (!(full.data_fingerprint() == train.fingerprint()) ||
      !(restricted.data_fingerprint() == train.fingerprint())) {
    throw ValueError("vi_estimate: models were not fitted on the given training fold");
  }
  if (train.fingerprint() == eval_fold.fingerprint()) {
    throw ValueError("vi_estimate: fold leakage (training and evaluation folds coincide)");
  }
  if (eval_fold.n_cols() != full.query_dim()) {
    throw ValueError("vi_estimate: evaluation fold dimension does not match the models");
  }
}

struct FoldPoint {
  double contribution = 0.0;
  double bias_term = 0.0;
  bool floored_full = false;
  bool floored_restricted = false;
};

// Shared evaluation-fold sweep: one weight pass per (point, model) yields the
// quantile and, when requested, the variance-scaling/density pieces.
std::vector<FoldPoint> sweep_fold(const Dataset& train, const Dataset& eval_fold,
                                  const ForestModel& full, const ForestModel& restricted,
                                  QuantileLevel tau, bool with_bias, double bandwidth,
                                  int threads) {
  const std::size_t n_eval = eval_fold.n_rows();
  std::vector<FoldPoint> points(n_eval);
  const int n_threads = resolve_threads(threads);
  const std::size_t n_chunks =
      std::min<std::size_t>(n_eval, static_cast<std::size_t>(n_threads) * 4);
  const std::size_t chunk = (n_eval + n_chunks - 1) / n_chunks;

  parallel_for(n_chunks, n_threads, [&](std::size_t c) {
    ForestPredictor full_pred(full);
    ForestPredictor restricted_pred(restricted);
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(n_eval, lo + chunk);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto x = eval_fold.row(i);
      const double y = eval_fold.y(i);
      FoldPoint& pt = points[i];
      if (with_bias) {
        const auto sf = full_pred.stats(x, bandwidth);
        const auto sr = restricted_pred.stats(x, bandwidth);
        pt.contribution = pinball_loss(y - sr.q_hat, tau) - pinball_loss(y - sf.q_hat, tau);
        pt.bias_term = sr.eta_hat / sr.f_hat - sf.eta_hat / sf.f_hat;
        pt.floored_full = sf.f_floored;
        pt.floored_restricted = sr.f_floored;
      } else {
        const double qf = full_pred.quantile(x);
        const double qr = restricted_pred.quantile(x);
        pt.contribution = pinball_loss(y - qr, tau) - pinball_loss(y - qf, tau);
      }
    }
  });
  return points;
}

}  // namespace

FeatureSubset::FeatureSubset(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end()) {
    throw ValueError("FeatureSubset: duplicate feature index");
  }
}

void FeatureSubset::validate_for(std::size_t n_cols, bool allow_full) const {
  for (std::size_t i : indices_) {
    if (i >= n_cols) throw ValueError("FeatureSubset: feature index out of range");
  }
  if (!allow_full && indices_.size() >= n_cols) {
    throw ConfigError("FeatureSubset: removing every feature leaves no covariates");
  }
}

CrossFitSplit cross_fit_split(const Dataset& data, Rng& rng) {
  const std::size_t n = data.n_rows();
  if (n < 4) throw ValueError("cross_fit_split: need at least 4 rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_below(i + 1));
    std::swap(order[i], order[j]);
  }
  CrossFitSplit split;
  const std::size_t n_train = (n + 1) / 2;  // odd n puts the extra row in train
  split.train_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.eval_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train_rows.begin(), split.train_rows.end());
  std::sort(split.eval_rows.begin(), split.eval_rows.end());
  return split;
}

ForestModel fit_restricted(const Dataset& data, const FeatureSubset& subset,
                           const ForestConfig& config, int threads) {
  subset.validate_for(data.n_cols(), /*allow_full=*/false);
  if (subset.empty()) return fit_forest(data, config, threads);

  Dataset reduced = data.drop_columns(subset.indices());
  ForestConfig cfg = config;
  // An explicit mtry tuned for the full design may exceed the reduced one.
  cfg.mtry = std::min(cfg.mtry, reduced.n_cols());
  ForestModel base = fit_forest(reduced, cfg, threads);

  std::vector<std::size_t> kept;
  kept.reserve(reduced.n_cols());
  const auto& drop = subset.indices();
  for (std::size_t j = 0, d = 0; j < data.n_cols(); ++j) {
    if (d < drop.size() && drop[d] == j) {
      ++d;
    } else {
      kept.push_back(j);
    }
  }
  return ForestModel::rebind_columns(std::move(base), std::move(kept), data.fingerprint(),
                                     data.n_cols(), data.feature_names());
}

ViEstimate vi_estimate(const Dataset& train, const Dataset& eval_fold, const ForestModel& full,
                       const ForestModel& restricted, QuantileLevel tau, int threads) {
  check_folds(train, eval_fold, full, restricted);
  const auto points =
      sweep_fold(train, eval_fold, full, restricted, tau, /*with_bias=*/false, 0.0, threads);
  ViEstimate out;
  out.per_point.reserve(points.size());
  double sum = 0.0;
  for (const FoldPoint& pt : points) {
    out.per_point.push_back(pt.contribution);
    sum += pt.contribution;
  }
  out.v_hat = sum / static_cast<double>(points.size());
  return out;
}

double vi_variance(std::span<const double> per_point) {
  if (per_point.size() < 2) throw ValueError("vi_variance: need at least 2 points");
  return sample_variance(per_point);
}

BiasConstantEstimate bias_constant_estimate(const ForestModel& full,
                                            const ForestModel& restricted, const Dataset& train,
                                            const Dataset& eval_fold, QuantileLevel tau,
                                            double bandwidth, int threads) {
  check_folds(train, eval_fold, full, restricted);
  const auto points =
      sweep_fold(train, eval_fold, full, restricted, tau, /*with_bias=*/true, bandwidth, threads);
  BiasConstantEstimate out;
  double sum = 0.0;
  std::size_t floored_full = 0, floored_restricted = 0;
  for (const FoldPoint& pt : points) {
    sum += pt.bias_term;
    floored_full += pt.floored_full ? 1 : 0;
    floored_restricted += pt.floored_restricted ? 1 : 0;
  }
  const double t = tau.value();
  const auto n = static_cast<double>(points.size());
  out.c_hat = t * (1.0 - t) / (2.0 * n) * sum;
  out.floor_fraction_full = static_cast<double>(floored_full) / n;
  out.floor_fraction_restricted = static_cast<double>(floored_restricted) / n;
  out.quality_warning =
      out.floor_fraction_full > 0.5 || out.floor_fraction_restricted > 0.5;
  return out;
}

double bias_corrected_vi(double v_hat, double c_hat, std::size_t n_eval, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw ValueError("bias_corrected_vi: beta must lie in (0, 1]");
  }
  if (n_eval == 0) throw ValueError("bias_corrected_vi: n_eval must be positive");
  return v_hat - std::pow(static_cast<double>(n_eval), beta - 1.0) * c_hat;
}

std::pair<double, double> vi_confidence_interval(double center, double sigma_s_hat,
                                                 std::size_t n_eval, double level) {
  if (sigma_s_hat < 0.0) throw ValueError("vi_confidence_interval: sigma must be nonnegative");
  if (!(level > 0.0 && level < 1.0)) {
    throw ValueError("vi_confidence_interval: level must lie in (0, 1)");
  }
  if (n_eval == 0) throw ValueError("vi_confidence_interval: n_eval must be positive");
  const double half =
      normal_quantile(0.5 * (1.0 + level)) * sigma_s_hat / std::sqrt(static_cast<double>(n_eval));
  return {center - half, center + half};
}

VimpReport run_vimp(const Dataset& data, const VimpOptions& options) {
  options.subset.validate_for(data.n_cols(), /*allow_full=*/false);
  const QuantileLevel tau(options.forest.tau);

  Rng rng = Rng::derive(options.forest.seed, {kCrossFitTag});
  const CrossFitSplit split = cross_fit_split(data, rng);
  const Dataset train = data.subset_rows(split.train_rows);
  const Dataset eval_fold = data.subset_rows(split.eval_rows);

  // Both nuisance fits share the seed: with an empty subset the restricted
  // model coincides with the full one and v_hat is exactly zero.
  const ForestModel full = fit_forest(train, options.forest, options.threads);
  const ForestModel restricted =
      fit_restricted(train, options.subset, options.forest, options.threads);

  const auto points = sweep_fold(train, eval_fold, full, restricted, tau,
                                 options.estimate_bias, options.bandwidth, options.threads);

  VimpReport report;
  report.n_eval = eval_fold.n_rows();
  report.tau = tau.value();
  report.level = options.level;
  report.subset = options.subset.indices();
  report.seed = options.forest.seed;
  report.beta_used = full.config().beta_used;
  report.bias_estimated = options.estimate_bias;
  report.warnings = full.warnings();

  std::vector<double> per_point;
  per_point.reserve(points.size());
  double sum = 0.0, bias_sum = 0.0;
  std::size_t floored_full = 0, floored_restricted = 0;
  for (const FoldPoint& pt : points) {
    per_point.push_back(pt.contribution);
    sum += pt.contribution;
    bias_sum += pt.bias_term;
    floored_full += pt.floored_full ? 1 : 0;
    floored_restricted += pt.floored_restricted ? 1 : 0;
  }
  const auto n = static_cast<double>(points.size());
  report.v_hat = sum / n;
  report.sigma_s_hat = std::sqrt(vi_variance(per_point));

  if (options.estimate_bias) {
    const double t = tau.value();
    report.c_hat = t * (1.0 - t) / (2.0 * n) * bias_sum;
    report.floor_fraction_full = static_cast<double>(floored_full) / n;
    report.floor_fraction_restricted = static_cast<double>(floored_restricted) / n;
    if (report.floor_fraction_full > 0.5 || report.floor_fraction_restricted > 0.5) {
      report.warnings.push_back(
          "density floor engaged on more than half of the evaluation points; the bias "
          "constant estimate is unreliable");
    }
  }
  report.v_tilde = bias_corrected_vi(report.v_hat, report.c_hat, report.n_eval, report.beta_used);

  std::tie(report.ci_low, report.ci_high) =
      vi_confidence_interval(report.v_hat, report.sigma_s_hat, report.n_eval, options.level);
  std::tie(report.corrected_ci_low, report.corrected_ci_high) =
      vi_confidence_interval(report.v_tilde, report.sigma_s_hat, report.n_eval, options.level);

  if (options.keep_per_point) report.per_point_losses = std::move(per_point);
  return report;
}

nlohmann::json vimp_report_to_json(const VimpReport& report) {
  nlohmann::json doc;
  doc["v_hat"] = report.v_hat;
  doc["sigma_s_hat"] = report.sigma_s_hat;
  doc["ci_low"] = report.ci_low;
  doc["ci_high"] = report.ci_high;
  doc["c_hat"] = report.c_hat;
  doc["v_tilde"] = report.v_tilde;
  doc["corrected_ci_low"] = report.corrected_ci_low;
  doc["corrected_ci_high"] = report.corrected_ci_high;
  doc["beta_used"] = report.beta_used;
  doc["tau"] = report.tau;
  doc["level"] = report.level;
  doc["n_eval"] = report.n_eval;
  std::vector<std::size_t> one_based;
  one_based.reserve(report.subset.size());
  for (std::size_t i : report.subset) one_based.push_back(i + 1);
  doc["subset"] = one_based;
  doc["seed"] = report.seed;
  doc["bias_estimated"] = report.bias_estimated;
  doc["floor_fraction_full"] = report.floor_fraction_full;
  doc["floor_fraction_restricted"] = report.floor_fraction_restricted;
  doc["warnings"] = report.warnings;
  return doc;
}

}  // namespace qrfvimp
