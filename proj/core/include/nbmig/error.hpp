#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nbmig {

// Module-qualified error codes. The CLI maps them onto exit statuses.
enum class ErrorCode : std::uint8_t {
  // trace
  MalformedRecord,
  UnknownMessageType,
  // policy
  UnknownCell,
  InvalidPolicyInput,
  ZeroBaseline,
  // knowledge
  EmptyDataset,
  InsufficientData,
  ParallelLines,
  UnknownParameter,
  // cellparse
  SyntaxError,
  // statered
  InvalidBandwidth,
  InvalidState,
  // generic
  InvalidArgument,
};

const char* to_string(ErrorCode code) noexcept;

// Qualified name such as "trace.UnknownMessageType".
std::string qualified_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nbmig
