#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctcpipe/error.hpp"
#include "ctcpipe/raster.hpp"

namespace ctc {

/// Alternating run lengths over the row-major bits, starting with a run of
/// zeros (possibly empty). Only the first run may be zero in the output.
inline std::vector<std::uint64_t> encode_rle(const BinaryMask& m) {
  std::vector<std::uint64_t> runs;
  std::uint8_t current = 0;
  std::uint64_t len = 0;
  for (auto bit : m.pixels()) {
    if (bit != current) {
      runs.push_back(len);
      current = bit;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

inline BinaryMask decode_rle_mask(std::span<const std::uint64_t> runs, int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorCode::protocol, "RLE mask dimensions must be positive");
  const std::uint64_t n = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height);
  std::uint64_t total = 0;
  for (auto r : runs) {
    if (r > n || total > n - r) throw Error(ErrorCode::protocol, "RLE runs exceed mask size");
    total += r;
  }
  if (total != n) {
    throw Error(ErrorCode::protocol, "RLE runs sum to " + std::to_string(total) + ", expected " + std::to_string(n));
  }
  std::vector<std::uint8_t> bits;
  bits.reserve(static_cast<std::size_t>(n));
  std::uint8_t value = 0;
  for (auto r : runs) {
    bits.insert(bits.end(), static_cast<std::size_t>(r), value);
    value ^= 1;
  }
  return BinaryMask(width, height, std::move(bits));
}

}  // namespace ctc
