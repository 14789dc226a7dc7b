#include "metaforge/error.hpp"

namespace metaforge {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::UsageError: return "UsageError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::InsufficientStudies: return "InsufficientStudies";
    case ErrorKind::TooFewStudies: return "TooFewStudies";
    case ErrorKind::TooFewClusters: return "TooFewClusters";
    case ErrorKind::MissingDf: return "MissingDf";
    case ErrorKind::ZeroTStatistic: return "ZeroTStatistic";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::DegenerateWeights: return "DegenerateWeights";
    case ErrorKind::DegenerateDesign: return "DegenerateDesign";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::NegativeTau2: return "NegativeTau2";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::InvalidComparison: return "InvalidComparison";
    case ErrorKind::ZeroHeterogeneity: return "ZeroHeterogeneity";
    case ErrorKind::NumericalError: return "NumericalError";
  }
  return "Error";
}

}  // namespace metaforge
