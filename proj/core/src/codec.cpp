#include "codec.hpp"

#include <array>
#include <zlib.h>

#include "nbmig/error.hpp"

namespace nbmig::detail {

struct DeflateCounter::Impl {
  z_stream zs{};
  std::array<unsigned char, 16384> out{};
  std::uint64_t produced = 0;
  bool finished = false;

  void pump(int flush) {
    int rc = Z_OK;
    do {
      zs.next_out = out.data();
      zs.avail_out = static_cast<uInt>(out.size());
      rc = deflate(&zs, flush);
      if (rc == Z_STREAM_ERROR) throw Error(ErrorCode::InvalidState, "deflate stream error");
      produced += out.size() - zs.avail_out;
    } while (zs.avail_out == 0 || (flush == Z_FINISH && rc != Z_STREAM_END));
  }
};

DeflateCounter::DeflateCounter() : impl_(std::make_unique<Impl>()) {
  // Fixed level keeps sizes reproducible for a given zlib build.
  if (deflateInit(&impl_->zs, 6) != Z_OK) throw Error(ErrorCode::InvalidState, "deflateInit failed");
}

DeflateCounter::~DeflateCounter() { deflateEnd(&impl_->zs); }

void DeflateCounter::feed(std::span<const std::uint8_t> bytes) {
  if (impl_->finished) throw Error(ErrorCode::InvalidState, "feed after finish");
  // Bytes are only read, zlib's API just is not const-correct.
  impl_->zs.next_in = const_cast<unsigned char*>(bytes.data());
  impl_->zs.avail_in = static_cast<uInt>(bytes.size());
  impl_->pump(Z_NO_FLUSH);
}

std::uint64_t DeflateCounter::finish() {
  if (!impl_->finished) {
    impl_->zs.next_in = nullptr;
    impl_->zs.avail_in = 0;
    impl_->pump(Z_FINISH);
    impl_->finished = true;
  }
  return impl_->produced;
}

}  // namespace nbmig::detail
