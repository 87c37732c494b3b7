#ifndef QRFVIMP_DATASET_HPP
#define QRFVIMP_DATASET_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qrfvimp {

struct DataFingerprint {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::uint64_t checksum = 0;

  bool operator==(const DataFingerprint&) const = default;
};

/// Covariate matrix (row-major) plus response vector. The unit of ingestion,
/// fitting, and evaluation. Immutable after construction.
class Dataset {
 public:
  Dataset(std::vector<double> x, std::vector<double> y, std::size_t n_cols,
          std::vector<std::string> feature_names = {});

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }

  double x(std::size_t row, std::size_t col) const { return x_[row * n_cols_ + col]; }
  double y(std::size_t row) const { return y_[row]; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(x_.data() + i * n_cols_, n_cols_);
  }
  std::span<const double> responses() const { return y_; }
  const std::vector<std::string>& feature_names() const { return names_; }

  const DataFingerprint& fingerprint() const { return fingerprint_; }

  /// New dataset keeping the given rows, in the given order.
  Dataset subset_rows(std::span<const std::size_t> rows) const;

  /// New dataset dropping the given (sorted, 0-based) columns.
  Dataset drop_columns(std::span<const std::size_t> cols) const;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<std::string> names_;
  DataFingerprint fingerprint_;
};

}  // namespace qrfvimp

#endif  // QRFVIMP_DATASET_HPP
