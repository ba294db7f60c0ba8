#pragma once

#include <stdexcept>
#include <string>

namespace gbmixed {

// Process exit codes used by the command-line front end.
enum class ErrorKind : int {
  kUsage = 2,
  kData = 3,
  kNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kUsage, "config error: " + w) {}
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& w) : Error(ErrorKind::kData, "schema error: " + w) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorKind::kData, "parse error: " + w) {}
};

struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::kData, "data error: " + w) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::kData, "shape error: " + w) {}
};

struct SingularCovarianceError : Error {
  explicit SingularCovarianceError(const std::string& group_id)
      : Error(ErrorKind::kNumerical,
              "singular covariance: Cholesky failed after jitter for group '" + group_id + "'"),
        group(group_id) {}
  std::string group;
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::kNumerical, "numerical failure: " + w) {}
};

}  // namespace gbmixed
