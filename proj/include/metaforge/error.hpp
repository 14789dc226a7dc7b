#pragma once

#include <stdexcept>
#include <string>

namespace metaforge {

// Every failure the library can raise, partitioned so the CLI can map
// input problems to exit code 1 and numerical problems to exit code 2.
enum class ErrorKind {
  // input / usage
  ParseError,
  SchemaError,
  ValidationError,
  UsageError,
  // shape and domain
  DimensionMismatch,
  NonFiniteInput,
  DomainError,
  EmptyDataset,
  InsufficientStudies,
  TooFewStudies,
  TooFewClusters,
  MissingDf,
  ZeroTStatistic,
  // numerical
  RankDeficient,
  DegenerateWeights,
  DegenerateDesign,
  SingularCovariance,
  NegativeTau2,
  NonConvergence,
  InvalidComparison,
  ZeroHeterogeneity,
  NumericalError,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // True for faults in what the user handed us, false for faults that
  // arose while computing on valid input.
  bool user_fault() const noexcept {
    switch (kind_) {
      case ErrorKind::ParseError:
      case ErrorKind::SchemaError:
      case ErrorKind::ValidationError:
      case ErrorKind::UsageError:
      case ErrorKind::DimensionMismatch:
      case ErrorKind::NonFiniteInput:
      case ErrorKind::DomainError:
      case ErrorKind::EmptyDataset:
      case ErrorKind::InsufficientStudies:
      case ErrorKind::TooFewStudies:
      case ErrorKind::TooFewClusters:
      case ErrorKind::MissingDf:
      case ErrorKind::ZeroTStatistic:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace metaforge
