#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cinpp {

enum class ErrorCode {
  SelfLoop,
  DuplicateEdge,
  IndexOutOfRange,
  FeatureShapeMismatch,
  UnknownCell,
  MissingFeatures,
  NotConverged,
  DomainMismatch,
  ShapeMismatch,
  NonFinite,
  NotScalar,
  EmptyComplex,
  EmptySplit,
  EmptyDataset,
  Malformed,
  IO,
  VersionMismatch,
  CorruptBlob,
  BadParams,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code so that callers (the CLI
// in particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  Error(ErrorCode code, const std::string& message, std::size_t line);

  ErrorCode code() const noexcept { return code_; }
  // Message without the code/line prefix.
  const std::string& message() const noexcept { return message_; }
  // 1-based line number for errors raised while parsing line-oriented input.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::optional<std::size_t> line_;
};

}  // namespace cinpp
