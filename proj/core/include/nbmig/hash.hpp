#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace nbmig {

// 64-bit FNV-1a. Stable across processes and platforms, which std::hash is not.
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a& update(std::string_view bytes) noexcept;
  Fnv1a& update(std::span<const std::uint8_t> bytes) noexcept;
  // Length-prefixed field, so ("ab","c") and ("a","bc") hash differently.
  Fnv1a& field(std::string_view bytes) noexcept;
  Fnv1a& field(std::uint64_t value) noexcept;

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

std::uint64_t fnv1a(std::string_view bytes) noexcept;

// 16 lowercase hex digits.
std::string to_hex(std::uint64_t value);

}  // namespace nbmig
