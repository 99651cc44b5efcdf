#include "cake/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cake {

std::uint16_t fp16_from_float(float f) {
  std::uint32_t x;
  std::memcpy(&x, &f, sizeof(x));
  std::uint32_t sign = (x >> 16) & 0x8000u;
  std::uint32_t biased = (x >> 23) & 0xFFu;
  std::uint32_t mant = x & 0x7FFFFFu;
  if (biased == 0xFFu) return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0));
  int exp = static_cast<int>(biased) - 127 + 15;
  if (exp >= 31) return static_cast<std::uint16_t>(sign | 0x7C00u);  // overflow to inf
  if (exp <= 0) {
    if (exp < -10) return static_cast<std::uint16_t>(sign);  // underflow to zero
    mant |= 0x800000u;
    std::uint32_t shift = static_cast<std::uint32_t>(14 - exp);
    std::uint32_t sub = mant >> shift;
    std::uint32_t rem = mant & ((1u << shift) - 1);
    std::uint32_t half = 1u << (shift - 1);
    if (rem > half || (rem == half && (sub & 1u))) ++sub;
    return static_cast<std::uint16_t>(sign | sub);
  }
  std::uint32_t h = sign | (static_cast<std::uint32_t>(exp) << 10) | (mant >> 13);
  std::uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;  // may carry into exponent; that is correct
  return static_cast<std::uint16_t>(h);
}

float fp16_to_float(std::uint16_t h) {
  std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t x;
  if (exp == 0) {
    if (mant == 0) {
      x = sign;
    } else {
      std::uint32_t e = 127 - 15 + 1;
      while (!(mant & 0x400u)) {
        mant <<= 1;
        --e;
      }
      mant &= 0x3FFu;
      x = sign | (e << 23) | (mant << 13);
    }
  } else if (exp == 31) {
    x = sign | 0x7F800000u | (mant << 13);
  } else {
    x = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  float f;
  std::memcpy(&f, &x, sizeof(f));
  return f;
}

Codec Codec::factor(double r) {
  if (!(r > 1.0)) throw std::invalid_argument("codec: factor ratio must be > 1");
  return {Kind::factor, r};
}

Codec Codec::parse(std::string_view id) {
  if (id == "identity") return identity();
  if (id == "quant8") return quant8();
  if (id.rfind("factor:", 0) == 0) {
    std::string num(id.substr(7));
    std::size_t pos = 0;
    double r = std::stod(num, &pos);
    if (pos != num.size()) throw std::invalid_argument("codec: bad factor ratio '" + num + "'");
    return factor(r);
  }
  throw std::invalid_argument("codec: unknown id '" + std::string(id) + "'");
}

std::string Codec::id() const {
  switch (kind) {
    case Kind::identity:
      return "identity";
    case Kind::quant8:
      return "quant8";
    case Kind::factor: {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "factor:%g", ratio);
      return buf;
    }
  }
  throw std::logic_error("codec: bad kind");
}

std::uint64_t Codec::encoded_size(std::uint64_t raw_bytes) const {
  switch (kind) {
    case Kind::identity:
      return raw_bytes;
    case Kind::quant8:
      if (raw_bytes % 2 != 0) throw std::invalid_argument("quant8: payload length must be even");
      return 4 + raw_bytes / 2;  // two fp16 scales + one byte per element
    case Kind::factor: {
      if (raw_bytes == 0) return 0;
      auto n = static_cast<std::uint64_t>(
          std::ceil(static_cast<long double>(raw_bytes) / static_cast<long double>(ratio)));
      return std::max<std::uint64_t>(n, 1);
    }
  }
  throw std::logic_error("codec: bad kind");
}

namespace {

std::vector<std::byte> quant8_encode(std::span<const std::byte> payload) {
  if (payload.size() % 2 != 0) throw std::invalid_argument("quant8: payload length must be even");
  std::size_t n = payload.size() / 2;
  const auto* halves = reinterpret_cast<const std::uint16_t*>(payload.data());
  float lo = 0.0f, hi = 0.0f;
  if (n > 0) {
    lo = hi = fp16_to_float(halves[0]);
    for (std::size_t i = 1; i < n; ++i) {
      float v = fp16_to_float(halves[i]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::vector<std::byte> out(4 + n);
  std::uint16_t lo16 = fp16_from_float(lo), hi16 = fp16_from_float(hi);
  std::memcpy(out.data(), &lo16, 2);
  std::memcpy(out.data() + 2, &hi16, 2);
  float range = hi - lo;
  auto* levels = reinterpret_cast<std::uint8_t*>(out.data() + 4);
  for (std::size_t i = 0; i < n; ++i) {
    if (range <= 0.0f) {
      levels[i] = 0;
      continue;
    }
    float t = (fp16_to_float(halves[i]) - lo) / range * 255.0f;
    long q = std::lroundf(t);
    levels[i] = static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
  }
  return out;
}

std::vector<std::byte> quant8_decode(std::span<const std::byte> encoded, std::uint64_t original_len) {
  if (original_len % 2 != 0) throw std::invalid_argument("quant8: original length must be even");
  std::size_t n = original_len / 2;
  if (encoded.size() != 4 + n) throw std::invalid_argument("quant8: encoded length mismatch");
  std::uint16_t lo16, hi16;
  std::memcpy(&lo16, encoded.data(), 2);
  std::memcpy(&hi16, encoded.data() + 2, 2);
  float lo = fp16_to_float(lo16);
  float range = fp16_to_float(hi16) - lo;
  const auto* levels = reinterpret_cast<const std::uint8_t*>(encoded.data() + 4);
  std::vector<std::byte> out(original_len);
  auto* halves = reinterpret_cast<std::uint16_t*>(out.data());
  for (std::size_t i = 0; i < n; ++i) {
    float v = range <= 0.0f ? lo : lo + static_cast<float>(levels[i]) / 255.0f * range;
    halves[i] = fp16_from_float(v);
  }
  return out;
}

// Keeps a deterministic prefix of the payload; values are expressly
// meaningless after a round trip.
std::vector<std::byte> factor_encode(const Codec& c, std::span<const std::byte> payload) {
  std::uint64_t n = c.encoded_size(payload.size());
  std::vector<std::byte> out(static_cast<std::size_t>(n));
  std::size_t take = std::min<std::size_t>(payload.size(), out.size());
  std::memcpy(out.data(), payload.data(), take);
  return out;
}

std::vector<std::byte> factor_decode(const Codec& c, std::span<const std::byte> encoded,
                                     std::uint64_t original_len) {
  if (encoded.size() != c.encoded_size(original_len))
    throw std::invalid_argument("factor: encoded length mismatch");
  std::vector<std::byte> out(static_cast<std::size_t>(original_len));
  std::size_t take = std::min<std::size_t>(encoded.size(), out.size());
  std::memcpy(out.data(), encoded.data(), take);
  return out;
}

}  // namespace

std::vector<std::byte> codec_encode(const Codec& codec, std::span<const std::byte> payload) {
  switch (codec.kind) {
    case Codec::Kind::identity:
      return {payload.begin(), payload.end()};
    case Codec::Kind::quant8:
      return quant8_encode(payload);
    case Codec::Kind::factor:
      return factor_encode(codec, payload);
  }
  throw std::logic_error("codec: bad kind");
}

std::vector<std::byte> codec_decode(const Codec& codec, std::span<const std::byte> encoded,
                                    std::uint64_t original_len) {
  switch (codec.kind) {
    case Codec::Kind::identity:
      if (encoded.size() != original_len) throw std::invalid_argument("identity: length mismatch");
      return {encoded.begin(), encoded.end()};
    case Codec::Kind::quant8:
      return quant8_decode(encoded, original_len);
    case Codec::Kind::factor:
      return factor_decode(codec, encoded, original_len);
  }
  throw std::logic_error("codec: bad kind");
}

}  // namespace cake
