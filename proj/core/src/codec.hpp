#pragma once

#include <cstdint>
#include <memory>
#include <span>

namespace nbmig::detail {

// Streams bytes through deflate and counts the compressed output without keeping it.
class DeflateCounter {
 public:
  DeflateCounter();
  ~DeflateCounter();
  DeflateCounter(const DeflateCounter&) = delete;
  DeflateCounter& operator=(const DeflateCounter&) = delete;

  void feed(std::span<const std::uint8_t> bytes);
  // Flushes the stream; call once.
  std::uint64_t finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nbmig::detail
