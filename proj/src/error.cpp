#include "cinpp/error.hpp"

namespace cinpp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::FeatureShapeMismatch: return "FeatureShapeMismatch";
    case ErrorCode::UnknownCell: return "UnknownCell";
    case ErrorCode::MissingFeatures: return "MissingFeatures";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::EmptyComplex: return "EmptyComplex";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::IO: return "IO";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptBlob: return "CorruptBlob";
    case ErrorCode::BadParams: return "BadParams";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code),
      message_(message) {}

Error::Error(ErrorCode code, const std::string& message, std::size_t line)
    : std::runtime_error(std::string(to_string(code)) + " (line " + std::to_string(line) +
                         "): " + message),
      code_(code),
      message_(message),
      line_(line) {}

}  // namespace cinpp
