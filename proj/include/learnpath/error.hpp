#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace learnpath {

enum class ErrorCode {
  ParseError,
  IoError,
  DuplicateId,
  InvalidCorrectIndex,
  InvalidValue,
  SkippedNotRatable,
  UnknownQuestion,
  UnknownUser,
  AllMissing,
  DanglingArcEndpoint,
  EmptyConceptLabel,
  UnknownConcept,
  Stuck,
  ConceptExhausted,
  PoolExhausted,
  EmptyMatrix,
  EmptyPool,
  TooFewPoints,
  TooFewRows,
  MixedLabelTypes,
  SchemaMismatch,
  EmptyEstimates,
  Infeasible,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

// Every recoverable failure in the library is reported through this type; the
// code lets callers (the service, the CLI) map failures without parsing text.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace learnpath
