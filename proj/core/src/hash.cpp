#include "nbmig/hash.hpp"

#include "nbmig/error.hpp"

namespace nbmig {

Fnv1a& Fnv1a::update(std::string_view bytes) noexcept {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::update(std::span<const std::uint8_t> bytes) noexcept {
  for (std::uint8_t c : bytes) {
    state_ ^= c;
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::field(std::string_view bytes) noexcept {
  field(static_cast<std::uint64_t>(bytes.size()));
  return update(bytes);
}

Fnv1a& Fnv1a::field(std::uint64_t value) noexcept {
  for (int i = 0; i < 8; ++i) {
    state_ ^= static_cast<std::uint8_t>(value >> (8 * i));
    state_ *= kPrime;
  }
  return *this;
}

std::uint64_t fnv1a(std::string_view bytes) noexcept {
  return Fnv1a{}.update(bytes).digest();
}

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnknownMessageType: return "UnknownMessageType";
    case ErrorCode::UnknownCell: return "UnknownCell";
    case ErrorCode::InvalidPolicyInput: return "InvalidPolicyInput";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ParallelLines: return "ParallelLines";
    case ErrorCode::UnknownParameter: return "UnknownParameter";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::InvalidBandwidth: return "InvalidBandwidth";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string qualified_name(ErrorCode code) {
  const char* module = "core";
  switch (code) {
    case ErrorCode::MalformedRecord:
    case ErrorCode::UnknownMessageType: module = "trace"; break;
    case ErrorCode::UnknownCell:
    case ErrorCode::InvalidPolicyInput:
    case ErrorCode::ZeroBaseline: module = "policy"; break;
    case ErrorCode::EmptyDataset:
    case ErrorCode::InsufficientData:
    case ErrorCode::ParallelLines:
    case ErrorCode::UnknownParameter: module = "knowledge"; break;
    case ErrorCode::SyntaxError: module = "cellparse"; break;
    case ErrorCode::InvalidBandwidth:
    case ErrorCode::InvalidState: module = "statered"; break;
    case ErrorCode::InvalidArgument: break;
  }
  return std::string(module) + "." + to_string(code);
}

}  // namespace nbmig
