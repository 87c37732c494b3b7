#include "qrfvimp/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qrfvimp/errors.hpp"
#include "qrfvimp/math.hpp"
#include "qrfvimp/parallel.hpp"

namespace qrfvimp {

namespace {

constexpr std::uint64_t kTreeStreamTag = 0x74726565ULL;  // per-tree stream id

// 0-based position of the left-continuous empirical tau-quantile in a
// sorted sample of size m: smallest k with (k+1)/m >= tau.
std::size_t left_quantile_pos(std::size_t m, double tau) {
  double k = std::ceil(tau * static_cast<double>(m) - 1e-9);
  if (k < 1.0) k = 1.0;
  if (k > static_cast<double>(m)) k = static_cast<double>(m);
  return static_cast<std::size_t>(k) - 1;
}

void subsample_into(std::vector<std::int32_t>& pool, std::size_t n, std::size_t s, Rng& rng,
                    std::vector<std::int32_t>& out) {
  pool.resize(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < s; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(s));
  std::sort(out.begin(), out.end());
}

void split_into_halves(std::span<const std::int32_t> indices, Rng& rng,
                       std::vector<std::int32_t>& train, std::vector<std::int32_t>& est) {
  std::vector<std::int32_t> shuffled(indices.begin(), indices.end());
  for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_below(i + 1));
    std::swap(shuffled[i], shuffled[j]);
  }
  const std::size_t half = shuffled.size() / 2;
  train.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(half));
  est.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(half), shuffled.end());
  std::sort(train.begin(), train.end());
  std::sort(est.begin(), est.end());
}

struct BestSplit {
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Recursive grower. Index buffers are partitioned in place (stable two-pass)
// so children see contiguous ranges; scratch vectors are reused across nodes.
class Grower {
 public:
  Grower(const Dataset& data, const ResolvedForestConfig& cfg, Rng& rng)
      : data_(data), cfg_(cfg), rng_(rng) {}

  TreeStructure grow(std::span<const std::int32_t> train_half,
                     std::span<const std::int32_t> est_half) {
    train_buf_.assign(train_half.begin(), train_half.end());
    est_buf_.assign(est_half.begin(), est_half.end());
    std::sort(train_buf_.begin(), train_buf_.end());
    std::sort(est_buf_.begin(), est_buf_.end());
    tree_ = TreeStructure{};
    tree_.leaf_offsets.push_back(0);
    tree_.train_members = train_buf_;
    grow_node(0, train_buf_.size(), 0, est_buf_.size());
    return std::move(tree_);
  }

 private:
  std::int32_t grow_node(std::size_t tb, std::size_t te, std::size_t eb, std::size_t ee) {
    const std::int32_t node_id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{});
    tree_.nodes[node_id].n_train = static_cast<std::int32_t>(te - tb);

    BestSplit best = find_best_split(tb, te, eb, ee);
    if (best.feature < 0) {
      make_leaf(node_id, eb, ee);
      return node_id;
    }

    const std::size_t tmid = partition(train_buf_, tb, te, best);
    const std::size_t emid = partition(est_buf_, eb, ee, best);
    tree_.nodes[node_id].feature = best.feature;
    tree_.nodes[node_id].threshold = best.threshold;
    const std::int32_t left = grow_node(tb, tmid, eb, emid);
    tree_.nodes[node_id].left = left;
    const std::int32_t right = grow_node(tmid, te, emid, ee);
    tree_.nodes[node_id].right = right;
    return node_id;
  }

  BestSplit find_best_split(std::size_t tb, std::size_t te, std::size_t eb, std::size_t ee) {
    BestSplit best;
    const std::size_t m = te - tb;
    const std::size_t em = ee - eb;
    if (m < 2 || em < 2 * cfg_.min_leaf_est) return best;

    // Smallest admissible child size under the alpha-fraction rule.
    const double alpha_m = cfg_.alpha * static_cast<double>(m);
    std::size_t c_min = static_cast<std::size_t>(std::ceil(alpha_m - 1e-9));
    if (c_min < 1) c_min = 1;
    if (m < 2 * c_min) return best;

    // Node quantile of the training-half responses.
    ys_.clear();
    for (std::size_t i = tb; i < te; ++i) ys_.push_back(data_.y(train_buf_[i]));
    const std::size_t k = left_quantile_pos(m, cfg_.tau);
    std::nth_element(ys_.begin(), ys_.begin() + static_cast<std::ptrdiff_t>(k), ys_.end());
    const double q_node = ys_[static_cast<std::ptrdiff_t>(k)];

    // Pseudo-outcomes take only two values (tau and tau-1), so child means
    // reduce to positive-residual proportions; the gain is computed from
    // integer counts, which keeps zero gains exactly zero.
    std::size_t npos_total = 0;
    for (std::size_t i = tb; i < te; ++i) {
      npos_total += data_.y(train_buf_[i]) - q_node > 0.0 ? 1 : 0;
    }
    if (npos_total == 0 || npos_total == m) return best;

    draw_candidates();
    for (std::int32_t f : candidates_) {
      sorted_train_.clear();
      for (std::size_t i = tb; i < te; ++i) {
        sorted_train_.emplace_back(data_.x(train_buf_[i], static_cast<std::size_t>(f)),
                                   train_buf_[i]);
      }
      std::sort(sorted_train_.begin(), sorted_train_.end());
      if (!(sorted_train_.front().first < sorted_train_.back().first)) continue;

      est_vals_.clear();
      for (std::size_t i = eb; i < ee; ++i) {
        est_vals_.push_back(data_.x(est_buf_[i], static_cast<std::size_t>(f)));
      }
      std::sort(est_vals_.begin(), est_vals_.end());

      std::size_t est_left = 0;
      std::size_t npos_left = 0;
      for (std::size_t i = 1; i < m; ++i) {
        npos_left += data_.y(sorted_train_[i - 1].second) - q_node > 0.0 ? 1 : 0;
        const double a = sorted_train_[i - 1].first;
        const double b = sorted_train_[i].first;
        if (!(a < b)) continue;
        const std::size_t n_left = i;
        const std::size_t n_right = m - i;
        if (n_left < c_min || n_right < c_min) continue;
        double thr = a + (b - a) * 0.5;
        if (!(thr < b)) thr = a;  // keep routing consistent when midpoint rounds up
        while (est_left < em && est_vals_[est_left] <= thr) ++est_left;
        if (est_left < cfg_.min_leaf_est || em - est_left < cfg_.min_leaf_est) continue;
        const double diff = static_cast<double>(npos_left) / static_cast<double>(n_left) -
                            static_cast<double>(npos_total - npos_left) /
                                static_cast<double>(n_right);
        const double gain = static_cast<double>(n_left) * static_cast<double>(n_right) /
                            (static_cast<double>(m) * static_cast<double>(m)) * diff * diff;
        // Strict improvement: ties resolve to the lowest feature index and
        // lowest threshold because of the scan order.
        if (gain > best.gain) {
          best.feature = f;
          best.threshold = thr;
          best.gain = gain;
        }
      }
    }
    if (!(best.gain > 0.0)) best.feature = -1;
    return best;
  }

  void draw_candidates() {
    const std::size_t p = data_.n_cols();
    feat_pool_.resize(p);
    std::iota(feat_pool_.begin(), feat_pool_.end(), 0);
    const std::size_t mtry = std::min(cfg_.mtry, p);
    for (std::size_t i = 0; i < mtry; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng_.uniform_below(p - i));
      std::swap(feat_pool_[i], feat_pool_[j]);
    }
    candidates_.assign(feat_pool_.begin(), feat_pool_.begin() + static_cast<std::ptrdiff_t>(mtry));
    std::sort(candidates_.begin(), candidates_.end());
  }

  // Stable partition of buf[b, e) by x_feature <= threshold; returns the split point.
  std::size_t partition(std::vector<std::int32_t>& buf, std::size_t b, std::size_t e,
                        const BestSplit& split) {
    part_left_.clear();
    part_right_.clear();
    for (std::size_t i = b; i < e; ++i) {
      const double v = data_.x(buf[i], static_cast<std::size_t>(split.feature));
      (v <= split.threshold ? part_left_ : part_right_).push_back(buf[i]);
    }
    std::copy(part_left_.begin(), part_left_.end(), buf.begin() + static_cast<std::ptrdiff_t>(b));
    std::copy(part_right_.begin(), part_right_.end(),
              buf.begin() + static_cast<std::ptrdiff_t>(b + part_left_.size()));
    return b + part_left_.size();
  }

  void make_leaf(std::int32_t node_id, std::size_t eb, std::size_t ee) {
    tree_.nodes[node_id].leaf = static_cast<std::int32_t>(tree_.num_leaves());
    // est_buf_ stays sorted within ranges (stable partitions of a sorted array).
    tree_.leaf_members.insert(tree_.leaf_members.end(),
                              est_buf_.begin() + static_cast<std::ptrdiff_t>(eb),
                              est_buf_.begin() + static_cast<std::ptrdiff_t>(ee));
    tree_.leaf_offsets.push_back(static_cast<std::int32_t>(tree_.leaf_members.size()));
  }

  const Dataset& data_;
  const ResolvedForestConfig& cfg_;
  Rng& rng_;
  TreeStructure tree_;
  std::vector<std::int32_t> train_buf_, est_buf_;
  std::vector<double> ys_;
  std::vector<std::pair<double, std::int32_t>> sorted_train_;
  std::vector<double> est_vals_;
  std::vector<std::int32_t> feat_pool_, candidates_;
  std::vector<std::int32_t> part_left_, part_right_;
};

}  // namespace

ResolvedForestConfig resolve_config(const ForestConfig& config, std::size_t n_rows,
                                    std::size_t n_cols) {
  if (n_rows < 2 || n_cols < 1) throw ConfigError("resolve_config: empty dataset");
  if (config.num_trees < 1) throw ConfigError("resolve_config: num_trees must be positive");
  if (!(config.alpha > 0.0 && config.alpha < 0.5)) {
    throw ConfigError("resolve_config: alpha must lie in (0, 0.5)");
  }
  if (config.min_leaf_est < 1) throw ConfigError("resolve_config: min_leaf_est must be >= 1");

  ResolvedForestConfig out;
  out.num_trees = config.num_trees;
  out.alpha = config.alpha;
  out.min_leaf_est = config.min_leaf_est;
  out.seed = config.seed;
  out.tau = QuantileLevel(config.tau).value();

  const std::size_t s_floor = 4 * config.min_leaf_est;
  if (config.subsample_size == 0) {
    if (!(config.beta > 0.0 && config.beta < 1.0)) {
      throw ConfigError("resolve_config: beta must lie in (0, 1) when subsample_size is unset");
    }
    double s_real = std::round(std::pow(static_cast<double>(n_rows), config.beta));
    auto s = static_cast<std::size_t>(s_real);
    if (s % 2 == 1) --s;  // honest halves need an even subsample
    s = std::max(s, s_floor);
    if (s > n_rows) {
      throw ConfigError("resolve_config: derived subsample size exceeds n; lower beta or "
                        "min_leaf_est");
    }
    out.subsample_size = s;
    out.beta_used = config.beta;
  } else {
    if (config.subsample_size % 2 == 1) {
      throw ConfigError("resolve_config: subsample_size must be even");
    }
    if (config.subsample_size > n_rows) {
      throw ConfigError("resolve_config: subsample_size exceeds the number of rows");
    }
    if (config.subsample_size < s_floor) {
      throw ConfigError("resolve_config: subsample_size must be at least 4*min_leaf_est");
    }
    out.subsample_size = config.subsample_size;
    out.beta_used = std::log(static_cast<double>(config.subsample_size)) /
                    std::log(static_cast<double>(n_rows));
  }

  if (config.mtry == 0) {
    out.mtry = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_cols))));
  } else {
    if (config.mtry > n_cols) throw ConfigError("resolve_config: mtry exceeds feature count");
    out.mtry = config.mtry;
  }
  out.mtry = std::max<std::size_t>(1, std::min(out.mtry, n_cols));
  return out;
}

std::int32_t TreeStructure::find_leaf(std::span<const double> x) const {
  std::int32_t i = 0;
  while (nodes[i].feature >= 0) {
    i = x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                            : nodes[i].right;
  }
  return nodes[i].leaf;
}

std::int32_t TreeStructure::find_leaf_mapped(std::span<const double> x,
                                             std::span<const std::size_t> column_map) const {
  std::int32_t i = 0;
  while (nodes[i].feature >= 0) {
    const double v = x[column_map[static_cast<std::size_t>(nodes[i].feature)]];
    i = v <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  }
  return nodes[i].leaf;
}

bool TreeStructure::same_structure(const TreeStructure& other) const {
  if (nodes.size() != other.nodes.size() || leaf_offsets != other.leaf_offsets ||
      leaf_members != other.leaf_members) {
    return false;
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& a = nodes[i];
    const TreeNode& b = other.nodes[i];
    if (a.feature != b.feature || a.threshold != b.threshold || a.left != b.left ||
        a.right != b.right || a.leaf != b.leaf || a.n_train != b.n_train) {
      return false;
    }
  }
  return true;
}

double WeightVector::sum() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

void WeightAccumulator::reset(std::size_t n_rows) {
  dense_.assign(n_rows, 0.0);
  touched_.clear();
}

void WeightAccumulator::clear() {
  for (std::int32_t i : touched_) dense_[i] = 0.0;
  touched_.clear();
}

WeightVector WeightAccumulator::to_weight_vector() const {
  WeightVector out;
  out.indices.assign(touched_.begin(), touched_.end());
  std::sort(out.indices.begin(), out.indices.end());
  out.weights.reserve(out.indices.size());
  for (std::int32_t i : out.indices) out.weights.push_back(dense_[i]);
  return out;
}

std::vector<std::int32_t> subsample_indices(std::size_t n, std::size_t s, Rng& rng) {
  if (s == 0) throw ValueError("subsample_indices: s must be positive");
  if (s > n) throw ValueError("subsample_indices: s exceeds n");
  std::vector<std::int32_t> pool, out;
  subsample_into(pool, n, s, rng, out);
  return out;
}

std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>> honest_split(
    std::span<const std::int32_t> indices, Rng& rng) {
  if (indices.empty() || indices.size() % 2 != 0) {
    throw ValueError("honest_split: index set size must be even and positive");
  }
  std::vector<std::int32_t> train, est;
  split_into_halves(indices, rng, train, est);
  return {std::move(train), std::move(est)};
}

std::vector<double> pseudo_outcomes(std::span<const double> y, QuantileLevel tau) {
  if (y.empty()) throw ValueError("pseudo_outcomes: empty node");
  std::vector<double> sorted(y.begin(), y.end());
  const std::size_t k = left_quantile_pos(sorted.size(), tau.value());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double q_node = sorted[static_cast<std::ptrdiff_t>(k)];
  std::vector<double> rho;
  rho.reserve(y.size());
  for (double v : y) rho.push_back(score(v - q_node, tau));
  return rho;
}

double split_gain(std::span<const double> pseudo, std::span<const std::size_t> left) {
  const std::size_t m = pseudo.size();
  if (left.empty() || left.size() >= m) {
    throw ValueError("split_gain: both children must be nonempty");
  }
  std::vector<bool> is_left(m, false);
  for (std::size_t i : left) {
    if (i >= m) throw ValueError("split_gain: left index out of range");
    is_left[i] = true;
  }
  double sum_left = 0.0, sum_right = 0.0;
  std::size_t n_left = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (is_left[i]) {
      sum_left += pseudo[i];
      ++n_left;
    } else {
      sum_right += pseudo[i];
    }
  }
  if (n_left != left.size()) throw ValueError("split_gain: duplicate left index");
  const std::size_t n_right = m - n_left;
  const double diff = sum_left / static_cast<double>(n_left) -
                      sum_right / static_cast<double>(n_right);
  return static_cast<double>(n_left) * static_cast<double>(n_right) /
         (static_cast<double>(m) * static_cast<double>(m)) * diff * diff;
}

TreeStructure grow_tree(const Dataset& data, std::span<const std::int32_t> train_half,
                        std::span<const std::int32_t> est_half,
                        const ResolvedForestConfig& config, Rng& rng) {
  if (train_half.size() < 2 * config.min_leaf_est ||
      est_half.size() < 2 * config.min_leaf_est) {
    throw ValueError("grow_tree: halves must contain at least 2*min_leaf_est rows");
  }
  std::vector<std::int32_t> a(train_half.begin(), train_half.end());
  std::vector<std::int32_t> b(est_half.begin(), est_half.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
    if (a[i] == b[j]) throw ValueError("grow_tree: halves must be disjoint");
    if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const auto n = static_cast<std::int32_t>(data.n_rows());
  if (a.front() < 0 || a.back() >= n || b.front() < 0 || b.back() >= n) {
    throw ValueError("grow_tree: row index out of range");
  }
  Grower grower(data, config, rng);
  return grower.grow(a, b);
}

WeightVector tree_kernel(const TreeStructure& tree, std::span<const double> x) {
  const std::int32_t leaf_id = tree.find_leaf(x);
  const auto members = tree.leaf(leaf_id);
  if (members.empty()) {
    throw NumericError("tree_kernel: leaf without estimation members (corrupt tree)");
  }
  WeightVector out;
  out.indices.assign(members.begin(), members.end());
  out.weights.assign(members.size(), 1.0 / static_cast<double>(members.size()));
  return out;
}

void ForestModel::accumulate_weights(std::span<const double> x, WeightAccumulator& acc) const {
  if (x.size() != query_dim_) {
    throw ValueError("forest_weights: query dimension does not match the model");
  }
  const bool identity = column_map_.size() == query_dim_;
  const double inv_b = 1.0 / static_cast<double>(trees_.size());
  for (const TreeStructure& tree : trees_) {
    const std::int32_t leaf_id =
        identity ? tree.find_leaf(x) : tree.find_leaf_mapped(x, column_map_);
    const auto members = tree.leaf(leaf_id);
    if (members.empty()) {
      throw NumericError("forest_weights: leaf without estimation members (corrupt model)");
    }
    const double w = inv_b / static_cast<double>(members.size());
    for (std::int32_t id : members) acc.add(id, w);
  }
}

ForestModel ForestModel::from_parts(ResolvedForestConfig config, std::vector<TreeStructure> trees,
                                    std::vector<std::size_t> column_map,
                                    DataFingerprint fingerprint, std::size_t query_dim,
                                    std::vector<double> responses,
                                    std::vector<std::string> warnings,
                                    std::vector<std::string> feature_names) {
  if (trees.empty()) throw ValueError("ForestModel: no trees");
  if (column_map.empty() || column_map.size() > query_dim) {
    throw ValueError("ForestModel: invalid column map");
  }
  if (responses.size() != fingerprint.n_rows) {
    throw ValueError("ForestModel: response vector does not match row count");
  }
  if (!feature_names.empty() && feature_names.size() != query_dim) {
    throw ValueError("ForestModel: feature name count does not match query dimension");
  }
  ForestModel model;
  model.config_ = config;
  model.config_.num_trees = static_cast<int>(trees.size());
  model.trees_ = std::move(trees);
  model.column_map_ = std::move(column_map);
  model.fingerprint_ = fingerprint;
  model.query_dim_ = query_dim;
  model.responses_ = std::move(responses);
  model.warnings_ = std::move(warnings);
  model.feature_names_ = std::move(feature_names);
  return model;
}

ForestModel ForestModel::rebind_columns(ForestModel base, std::vector<std::size_t> column_map,
                                        DataFingerprint source_fingerprint, std::size_t query_dim,
                                        std::vector<std::string> source_names) {
  if (column_map.size() != base.column_map_.size()) {
    throw ValueError("ForestModel::rebind_columns: column count mismatch");
  }
  for (std::size_t c : column_map) {
    if (c >= query_dim) throw ValueError("ForestModel::rebind_columns: column out of range");
  }
  if (source_fingerprint.n_rows != base.fingerprint_.n_rows) {
    throw ValueError("ForestModel::rebind_columns: row count mismatch");
  }
  base.column_map_ = std::move(column_map);
  base.fingerprint_ = source_fingerprint;
  base.query_dim_ = query_dim;
  base.feature_names_ = std::move(source_names);
  return base;
}

Rng tree_stream(const ResolvedForestConfig& config, std::size_t tree_index) {
  return Rng::derive(config.seed, {kTreeStreamTag, tree_index});
}

ForestModel fit_forest(const Dataset& data, const ForestConfig& config, int threads) {
  const ResolvedForestConfig resolved = resolve_config(config, data.n_rows(), data.n_cols());
  const std::size_t n = data.n_rows();
  const std::size_t s = resolved.subsample_size;

  std::vector<TreeStructure> trees(static_cast<std::size_t>(resolved.num_trees));
  parallel_for(trees.size(), threads, [&](std::size_t b) {
    Rng rng = tree_stream(resolved, b);
    thread_local std::vector<std::int32_t> pool;
    std::vector<std::int32_t> subsample;
    subsample_into(pool, n, s, rng, subsample);
    std::vector<std::int32_t> train, est;
    split_into_halves(subsample, rng, train, est);
    Grower grower(data, resolved, rng);
    trees[b] = grower.grow(train, est);
  });

  std::vector<std::string> warnings;
  const double ratio = static_cast<double>(n) / static_cast<double>(s);
  if (static_cast<double>(resolved.num_trees) < 2.0 * ratio) {
    warnings.push_back("num_trees=" + std::to_string(resolved.num_trees) +
                       " is below 2*n/s=" + std::to_string(2.0 * ratio) +
                       "; the kernel Monte Carlo error may dominate (want B >> n/s)");
  }

  std::vector<std::size_t> column_map(data.n_cols());
  std::iota(column_map.begin(), column_map.end(), 0);
  std::vector<double> responses(data.responses().begin(), data.responses().end());
  return ForestModel::from_parts(resolved, std::move(trees), std::move(column_map),
                                 data.fingerprint(), data.n_cols(), std::move(responses),
                                 std::move(warnings), data.feature_names());
}

WeightVector forest_weights(const ForestModel& model, std::span<const double> x) {
  WeightAccumulator acc;
  acc.reset(model.n_train_rows());
  model.accumulate_weights(x, acc);
  return acc.to_weight_vector();
}

}  // namespace qrfvimp
