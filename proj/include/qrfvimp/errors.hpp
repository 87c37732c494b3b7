#ifndef QRFVIMP_ERRORS_HPP
#define QRFVIMP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qrfvimp {

// Error classes map 1:1 onto the CLI exit-code classes, so library code
// should throw the most specific one that applies.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values passed to library operations.
class ValueError : public Error {
 public:
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Invalid or inconsistent configuration (flags, sim configs, forest settings).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Structurally broken inputs: malformed CSV, unknown columns, corrupt model files.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& msg) : Error(msg) {}
};

// Missing or unreadable/unwritable files.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Numerical failures: quadrature non-convergence, simulation failure-rate aborts.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace qrfvimp

#endif  // QRFVIMP_ERRORS_HPP
