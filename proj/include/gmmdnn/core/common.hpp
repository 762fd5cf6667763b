#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmmdnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorCode {
  kDimensionMismatch,
  kNotPositiveDefinite,
  kInvalidSpec,
  kParseError,
  kNonFiniteIntermediate,
  kAssumptionViolated,
  kAssumptionNotVerified,
  kDeltaOutOfRange,
  kQOutOfRange,
  kInvalidArgument,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type. `where` is a location
// hint: a JSON pointer into a document, a file path, or empty.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string where = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& where() const noexcept { return where_; }

 private:
  ErrorCode code_;
  std::string where_;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                    std::to_string(got));
  }
}

// Formats a double with 17 significant digits so that parsing it back yields
// the identical bit pattern.
std::string format_double(double value);

}  // namespace gmmdnn
