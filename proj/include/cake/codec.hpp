#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cake {

// Chunk payload codecs. quant8 is a real per-chunk min/max affine 8-bit
// quantizer over 16-bit floats. factor(r) is a size-only stand-in for
// external compressors (e.g. r = 8.6): its encoded bytes honor the ratio
// and decode restores length, but the values carry no meaning.
struct Codec {
  enum class Kind { identity, quant8, factor };

  Kind kind = Kind::identity;
  double ratio = 1.0;  // factor only; must be > 1

  static Codec identity() { return {Kind::identity, 1.0}; }
  static Codec quant8() { return {Kind::quant8, 1.0}; }
  static Codec factor(double r);

  // "identity" | "quant8" | "factor:<r>"
  static Codec parse(std::string_view id);
  std::string id() const;

  std::uint64_t encoded_size(std::uint64_t raw_bytes) const;
};

std::vector<std::byte> codec_encode(const Codec& codec, std::span<const std::byte> payload);

std::vector<std::byte> codec_decode(const Codec& codec, std::span<const std::byte> encoded,
                                    std::uint64_t original_len);

// IEEE binary16 conversions (round to nearest even on narrowing).
std::uint16_t fp16_from_float(float f);
float fp16_to_float(std::uint16_t h);

}  // namespace cake
