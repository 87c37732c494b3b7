#ifndef QRFVIMP_FOREST_HPP
#define QRFVIMP_FOREST_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qrfvimp/dataset.hpp"
#include "qrfvimp/pinball.hpp"
#include "qrfvimp/rng.hpp"

namespace qrfvimp {

/// User-facing forest settings. Zero-valued fields are resolved against the
/// training data: subsample_size from beta, mtry to ceil(sqrt(p)).
struct ForestConfig {
  int num_trees = 1000;
  std::size_t subsample_size = 0;  // 0: derive from beta as round(n^beta)
  double beta = 0.0;               // required in (0,1) when subsample_size == 0
  double alpha = 0.05;             // minimum child fraction on the training half
  std::size_t min_leaf_est = 5;    // minimum estimation-half members per leaf
  std::size_t mtry = 0;            // 0: ceil(sqrt(p))
  std::uint64_t seed = 0;
  double tau = 0.5;
};

/// ForestConfig with every field materialized against (n, p).
struct ResolvedForestConfig {
  int num_trees = 0;
  std::size_t subsample_size = 0;
  double beta_used = 0.0;  // beta if given, else log(s)/log(n)
  double alpha = 0.0;
  std::size_t min_leaf_est = 0;
  std::size_t mtry = 0;
  std::uint64_t seed = 0;
  double tau = 0.5;

  std::size_t half_size() const { return subsample_size / 2; }
};

/// Validates and materializes a config. Throws ConfigError on violations
/// (odd explicit s, s > n, s < 4*min_leaf_est, alpha outside (0, 0.5), ...).
ResolvedForestConfig resolve_config(const ForestConfig& config, std::size_t n_rows,
                                    std::size_t n_cols);

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;     // leaf slot when feature == -1
  std::int32_t n_train = 0;   // training-half rows reaching this node
};

/// One honest tree: split structure grown on the training half, leaf
/// membership recorded over the estimation half.
struct TreeStructure {
  std::vector<TreeNode> nodes;
  std::vector<std::int32_t> leaf_offsets;  // size num_leaves + 1
  std::vector<std::int32_t> leaf_members;  // estimation rows, flat, sorted per leaf
  std::vector<std::int32_t> train_members; // S_b^tr; kept for diagnostics, not persisted

  std::size_t num_leaves() const { return leaf_offsets.empty() ? 0 : leaf_offsets.size() - 1; }

  std::span<const std::int32_t> leaf(std::int32_t leaf_id) const {
    return std::span<const std::int32_t>(leaf_members.data() + leaf_offsets[leaf_id],
                                         leaf_offsets[leaf_id + 1] - leaf_offsets[leaf_id]);
  }

  /// Index of the leaf containing x (x in the tree's own feature space).
  std::int32_t find_leaf(std::span<const double> x) const;

  /// Same routing, but reading coordinate j of the tree as x[column_map[j]].
  std::int32_t find_leaf_mapped(std::span<const double> x,
                                std::span<const std::size_t> column_map) const;

  bool same_structure(const TreeStructure& other) const;
};

/// Sparse nonnegative kernel weights at a query point; indices are
/// estimation-half rows, weights sum to one.
struct WeightVector {
  std::vector<std::int32_t> indices;
  std::vector<double> weights;

  double sum() const;
};

/// Reusable dense scratch for accumulating kernel weights over many queries
/// without per-query allocation.
class WeightAccumulator {
 public:
  void reset(std::size_t n_rows);

  void add(std::int32_t index, double weight) {
    if (dense_[index] == 0.0) touched_.push_back(index);
    dense_[index] += weight;
  }

  /// Zeroes only the touched entries, keeping capacity.
  void clear();

  double at(std::int32_t index) const { return dense_[index]; }
  std::span<const std::int32_t> touched() const { return touched_; }

  WeightVector to_weight_vector() const;  // sorted by index

 private:
  std::vector<double> dense_;
  std::vector<std::int32_t> touched_;
};

// --- sampling primitives ---

/// s distinct indices from {0..n-1}, uniform, returned sorted.
std::vector<std::int32_t> subsample_indices(std::size_t n, std::size_t s, Rng& rng);

/// Random split of an even-sized index set into two disjoint halves
/// (train, estimation), each returned sorted.
std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>> honest_split(
    std::span<const std::int32_t> indices, Rng& rng);

// --- split criterion ---

/// Gradient pseudo-outcomes psi_tau(y_i - q_P) where q_P is the
/// left-continuous empirical tau-quantile of the node's responses.
std::vector<double> pseudo_outcomes(std::span<const double> y, QuantileLevel tau);

/// Heterogeneity gain (n_L n_R / n_P^2) (mean_L - mean_R)^2 for the child
/// split given by 0-based positions `left` into `pseudo`.
double split_gain(std::span<const double> pseudo, std::span<const std::size_t> left);

/// Grows one honest tree. Structure depends on the training half only;
/// the estimation half contributes leaf membership and admissibility counts.
TreeStructure grow_tree(const Dataset& data, std::span<const std::int32_t> train_half,
                        std::span<const std::int32_t> est_half,
                        const ResolvedForestConfig& config, Rng& rng);

/// Uniform base kernel over the estimation-half members of the leaf
/// containing x.
WeightVector tree_kernel(const TreeStructure& tree, std::span<const double> x);

class ForestModel {
 public:
  const ResolvedForestConfig& config() const { return config_; }
  const std::vector<TreeStructure>& trees() const { return trees_; }
  /// Fingerprint of the dataset passed to fit (pre column-drop for
  /// restricted fits), used to detect cross-fitting fold leakage.
  const DataFingerprint& data_fingerprint() const { return fingerprint_; }
  /// Original column indices backing the tree feature space.
  const std::vector<std::size_t>& column_map() const { return column_map_; }
  /// Number of columns a query point must carry.
  std::size_t query_dim() const { return query_dim_; }
  std::size_t n_train_rows() const { return fingerprint_.n_rows; }
  /// Training responses, indexed by the row ids stored in the leaves.
  /// Embedded so a persisted model predicts without the training covariates.
  const std::vector<double>& responses() const { return responses_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Feature names in query order (the source dataset's columns).
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  /// Adds the averaged base kernels at x into `acc` (hot path, no allocation).
  void accumulate_weights(std::span<const double> x, WeightAccumulator& acc) const;

  static ForestModel from_parts(ResolvedForestConfig config, std::vector<TreeStructure> trees,
                                std::vector<std::size_t> column_map, DataFingerprint fingerprint,
                                std::size_t query_dim, std::vector<double> responses,
                                std::vector<std::string> warnings,
                                std::vector<std::string> feature_names = {});

  /// Rebinds a model fitted on a column-reduced dataset to its source
  /// dataset: queries become full-dimension, routed through `column_map`.
  static ForestModel rebind_columns(ForestModel base, std::vector<std::size_t> column_map,
                                    DataFingerprint source_fingerprint, std::size_t query_dim,
                                    std::vector<std::string> source_names);

 private:
  ForestModel() = default;
  ResolvedForestConfig config_;
  std::vector<TreeStructure> trees_;
  std::vector<std::size_t> column_map_;
  DataFingerprint fingerprint_;
  std::size_t query_dim_ = 0;
  std::vector<double> responses_;
  std::vector<std::string> warnings_;
  std::vector<std::string> feature_names_;
};

/// The random stream tree b draws its subsample, honest split, and split
/// candidates from. Exposed so a tree can be re-grown in isolation.
Rng tree_stream(const ResolvedForestConfig& config, std::size_t tree_index);

/// Fits B honest trees on independent subsamples. Per-tree random streams
/// derive from (seed, tree index), so the result does not depend on thread
/// scheduling.
ForestModel fit_forest(const Dataset& data, const ForestConfig& config, int threads = 0);

/// Averaged forest kernel at x; weights sum to one over estimation rows.
WeightVector forest_weights(const ForestModel& model, std::span<const double> x);

}  // namespace qrfvimp

#endif  // QRFVIMP_FOREST_HPP
