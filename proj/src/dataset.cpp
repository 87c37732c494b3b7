#include "qrfvimp/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "qrfvimp/errors.hpp"
#include "qrfvimp/math.hpp"

namespace qrfvimp {

Dataset::Dataset(std::vector<double> x, std::vector<double> y, std::size_t n_cols,
                 std::vector<std::string> feature_names)
    : x_(std::move(x)), y_(std::move(y)), n_cols_(n_cols), names_(std::move(feature_names)) {
  if (n_cols_ == 0) throw SchemaError("Dataset: need at least one feature column");
  if (x_.size() % n_cols_ != 0) throw SchemaError("Dataset: x size is not a multiple of n_cols");
  n_rows_ = x_.size() / n_cols_;
  if (n_rows_ < 2) throw SchemaError("Dataset: need at least two rows");
  if (y_.size() != n_rows_) throw SchemaError("Dataset: y length does not match row count");
  for (double v : x_) {
    if (!std::isfinite(v)) throw SchemaError("Dataset: non-finite covariate entry");
  }
  for (double v : y_) {
    if (!std::isfinite(v)) throw SchemaError("Dataset: non-finite response entry");
  }
  if (names_.empty()) {
    names_.reserve(n_cols_);
    for (std::size_t j = 0; j < n_cols_; ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (names_.size() != n_cols_) {
    throw SchemaError("Dataset: feature name count does not match column count");
  }
  std::uint64_t h = fnv1a(&n_rows_, sizeof(n_rows_));
  h = fnv1a(&n_cols_, sizeof(n_cols_), h);
  h = fnv1a(x_.data(), x_.size() * sizeof(double), h);
  h = fnv1a(y_.data(), y_.size() * sizeof(double), h);
  fingerprint_ = DataFingerprint{n_rows_, n_cols_, h};
}

Dataset Dataset::subset_rows(std::span<const std::size_t> rows) const {
  std::vector<double> xs;
  std::vector<double> ys;
  xs.reserve(rows.size() * n_cols_);
  ys.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= n_rows_) throw ValueError("Dataset::subset_rows: row index out of range");
    xs.insert(xs.end(), x_.begin() + r * n_cols_, x_.begin() + (r + 1) * n_cols_);
    ys.push_back(y_[r]);
  }
  return Dataset(std::move(xs), std::move(ys), n_cols_, names_);
}

Dataset Dataset::drop_columns(std::span<const std::size_t> cols) const {
  std::vector<bool> drop(n_cols_, false);
  for (std::size_t c : cols) {
    if (c >= n_cols_) throw ValueError("Dataset::drop_columns: column index out of range");
    drop[c] = true;
  }
  std::size_t kept = 0;
  for (std::size_t j = 0; j < n_cols_; ++j) kept += drop[j] ? 0 : 1;
  if (kept == 0) throw ValueError("Dataset::drop_columns: cannot drop every column");
  std::vector<double> xs;
  xs.reserve(n_rows_ * kept);
  std::vector<std::string> names;
  names.reserve(kept);
  for (std::size_t j = 0; j < n_cols_; ++j) {
    if (!drop[j]) names.push_back(names_[j]);
  }
  for (std::size_t i = 0; i < n_rows_; ++i) {
    for (std::size_t j = 0; j < n_cols_; ++j) {
      if (!drop[j]) xs.push_back(x_[i * n_cols_ + j]);
    }
  }
  return Dataset(std::move(xs), std::vector<double>(y_), kept, std::move(names));
}

}  // namespace qrfvimp
