#include "qrfvimp/quantile_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qrfvimp/errors.hpp"
#include "qrfvimp/math.hpp"

namespace qrfvimp {

namespace {

void check_weight_support(std::span<const double> values, const WeightVector& wv) {
  if (wv.indices.empty()) throw ValueError("weighted_quantile: empty support");
  if (wv.indices.size() != wv.weights.size()) {
    throw ValueError("weighted_quantile: index/weight size mismatch");
  }
  for (std::size_t i = 0; i < wv.indices.size(); ++i) {
    if (wv.indices[i] < 0 || static_cast<std::size_t>(wv.indices[i]) >= values.size()) {
      throw ValueError("weighted_quantile: support index out of range");
    }
    if (!(wv.weights[i] > 0.0)) throw ValueError("weighted_quantile: weights must be positive");
  }
}

void check_model_data(const ForestModel& model, const Dataset& data) {
  if (!(model.data_fingerprint() == data.fingerprint())) {
    throw ValueError("model/data mismatch: this model was fitted on different data");
  }
}

}  // namespace

double weighted_quantile(std::span<const double> values, const WeightVector& weights,
                         QuantileLevel tau) {
  check_weight_support(values, weights);
  std::vector<std::pair<double, double>> pairs;  // (value, weight)
  pairs.reserve(weights.indices.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.indices.size(); ++i) {
    const double v = values[static_cast<std::size_t>(weights.indices[i])];
    if (!std::isfinite(v)) throw ValueError("weighted_quantile: non-finite value");
    pairs.emplace_back(v, weights.weights[i]);
    total += weights.weights[i];
  }
  std::sort(pairs.begin(), pairs.end());
  const double target = tau.value() * total;
  double cum = 0.0;
  for (const auto& [value, weight] : pairs) {
    cum += weight;
    if (cum >= target) return value;
  }
  return pairs.back().first;  // guards cumulative rounding shortfall
}

double weighted_kde(std::span<const double> values, const WeightVector& weights, double at,
                    double h) {
  if (!(h > 0.0)) throw ValueError("weighted_kde: bandwidth must be positive");
  check_weight_support(values, weights);
  double total = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < weights.indices.size(); ++i) {
    const double v = values[static_cast<std::size_t>(weights.indices[i])];
    mass += weights.weights[i] * normal_pdf((v - at) / h);
    total += weights.weights[i];
  }
  return mass / (h * total);
}

double default_bandwidth(std::span<const double> values, const WeightVector& weights) {
  check_weight_support(values, weights);
  if (weights.indices.size() < 2) {
    throw ValueError("default_bandwidth: need at least 2 support points");
  }
  double total = 0.0, sq = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < weights.indices.size(); ++i) {
    total += weights.weights[i];
    mean += weights.weights[i] * values[static_cast<std::size_t>(weights.indices[i])];
  }
  mean /= total;
  for (std::size_t i = 0; i < weights.indices.size(); ++i) {
    const double d = values[static_cast<std::size_t>(weights.indices[i])] - mean;
    sq += weights.weights[i] * d * d;
  }
  const double sigma_w = std::sqrt(sq / total);
  double sum_w2 = 0.0;
  for (double w : weights.weights) sum_w2 += w * w;
  const double m_eff = total * total / sum_w2;

  if (sigma_w > 0.0 && std::isfinite(sigma_w)) {
    return 1.06 * sigma_w * std::pow(m_eff, -0.2);
  }
  const double q25 = weighted_quantile(values, weights, QuantileLevel(0.25));
  const double q75 = weighted_quantile(values, weights, QuantileLevel(0.75));
  return std::max(1e-3, (q75 - q25) / 1.349);
}

QuantilePrediction interval_from_components(double q_hat, double eta_hat, double f_hat,
                                            QuantileLevel tau, double level, std::size_t n,
                                            std::size_t s) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ValueError("interval_from_components: level must lie in (0, 1)");
  }
  const double t = tau.value();
  QuantilePrediction pred;
  pred.q_hat = q_hat;
  pred.eta_hat = eta_hat;
  pred.f_hat = f_hat;
  pred.level = level;
  pred.sigma2_hat = t * (1.0 - t) * eta_hat / (f_hat * f_hat);
  const double z = normal_quantile(0.5 * (1.0 + level));
  const double half =
      z * std::sqrt(static_cast<double>(s) / static_cast<double>(n) * pred.sigma2_hat);
  pred.ci_low = q_hat - half;
  pred.ci_high = q_hat + half;
  return pred;
}

double predict_quantile(const ForestModel& model, const Dataset& data,
                        std::span<const double> x) {
  check_model_data(model, data);
  ForestPredictor predictor(model, data);
  return predictor.quantile(x);
}

double variance_scaling(const ForestModel& model, std::span<const double> x, std::size_t n,
                        std::size_t s) {
  if (s == 0) throw ValueError("variance_scaling: s must be positive");
  const WeightVector wv = forest_weights(model, x);
  double sum_w2 = 0.0;
  for (double w : wv.weights) sum_w2 += w * w;
  return static_cast<double>(n) / static_cast<double>(s) * sum_w2;
}

double conditional_density(const ForestModel& model, const Dataset& data,
                           std::span<const double> x, double at, double h) {
  check_model_data(model, data);
  const WeightVector wv = forest_weights(model, x);
  return std::max(weighted_kde(data.responses(), wv, at, h), kDensityFloor);
}

QuantilePrediction predict_with_interval(const ForestModel& model, const Dataset& data,
                                         std::span<const double> x, double level) {
  check_model_data(model, data);
  ForestPredictor predictor(model, data);
  return predictor.interval(x, level);
}

ForestPredictor::ForestPredictor(const ForestModel& model)
    : model_(model), y_(model.responses()) {
  y_order_.resize(y_.size());
  std::iota(y_order_.begin(), y_order_.end(), 0);
  std::sort(y_order_.begin(), y_order_.end(), [&](std::int32_t a, std::int32_t b) {
    return y_[a] < y_[b] || (y_[a] == y_[b] && a < b);
  });
  acc_.reset(model.n_train_rows());
}

ForestPredictor::ForestPredictor(const ForestModel& model, const Dataset& data)
    : ForestPredictor(model) {
  check_model_data(model, data);
}

void ForestPredictor::load_weights(std::span<const double> x) {
  acc_.clear();
  model_.accumulate_weights(x, acc_);
}

double ForestPredictor::scan_quantile(double tau) const {
  double total = 0.0;
  for (std::int32_t id : acc_.touched()) total += acc_.at(id);
  const double target = tau * total;
  double cum = 0.0;
  double last = 0.0;
  for (std::int32_t id : y_order_) {
    const double w = acc_.at(id);
    if (w == 0.0) continue;
    cum += w;
    last = y_[id];
    if (cum >= target) return last;
  }
  return last;
}

double ForestPredictor::quantile(std::span<const double> x) {
  load_weights(x);
  return scan_quantile(model_.config().tau);
}

ForestPredictor::PointStats ForestPredictor::stats(std::span<const double> x,
                                                   double fixed_bandwidth) {
  load_weights(x);
  PointStats out;
  out.q_hat = scan_quantile(model_.config().tau);

  const auto touched = acc_.touched();
  double total = 0.0, sum_w2 = 0.0, mean = 0.0;
  for (std::int32_t id : touched) {
    const double w = acc_.at(id);
    total += w;
    sum_w2 += w * w;
    mean += w * y_[id];
  }
  mean /= total;
  const std::size_t n = model_.n_train_rows();
  const std::size_t s = model_.config().subsample_size;
  out.eta_hat = static_cast<double>(n) / static_cast<double>(s) * sum_w2;

  double h = fixed_bandwidth;
  if (!(h > 0.0)) {
    double sq = 0.0;
    for (std::int32_t id : touched) {
      const double d = y_[id] - mean;
      sq += acc_.at(id) * d * d;
    }
    const double sigma_w = std::sqrt(sq / total);
    if (sigma_w > 0.0 && std::isfinite(sigma_w)) {
      const double m_eff = total * total / sum_w2;
      h = 1.06 * sigma_w * std::pow(m_eff, -0.2);
    } else {
      // Degenerate weighted scale; quantile spread fallback.
      double lo = scan_quantile(0.25);
      double hi = scan_quantile(0.75);
      h = std::max(1e-3, (hi - lo) / 1.349);
    }
  }
  out.bandwidth = h;

  double mass = 0.0;
  for (std::int32_t id : touched) {
    mass += acc_.at(id) * normal_pdf((y_[id] - out.q_hat) / h);
  }
  const double f_raw = mass / (h * total);
  out.f_floored = !(f_raw > kDensityFloor);
  out.f_hat = std::max(f_raw, kDensityFloor);
  return out;
}

QuantilePrediction ForestPredictor::interval(std::span<const double> x, double level) {
  const PointStats st = stats(x);
  QuantilePrediction pred = interval_from_components(
      st.q_hat, st.eta_hat, st.f_hat, QuantileLevel(model_.config().tau), level,
      model_.n_train_rows(), model_.config().subsample_size);
  pred.f_floored = st.f_floored;
  pred.bandwidth = st.bandwidth;
  return pred;
}

}  // namespace qrfvimp
