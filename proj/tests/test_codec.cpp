#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <vector>

#include "cake/codec.hpp"

using namespace cake;

namespace {

std::vector<std::byte> halves_payload(const std::vector<float>& values) {
  std::vector<std::byte> payload(values.size() * 2);
  auto* out = reinterpret_cast<std::uint16_t*>(payload.data());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = fp16_from_float(values[i]);
  return payload;
}

std::vector<float> payload_halves(const std::vector<std::byte>& payload) {
  std::vector<float> values(payload.size() / 2);
  const auto* in = reinterpret_cast<const std::uint16_t*>(payload.data());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = fp16_to_float(in[i]);
  return values;
}

// Direct per-element requantization in double precision: what an affine
// min/max 8-bit round trip must produce, computed without the codec.
std::vector<double> requantize_oracle(const std::vector<float>& values) {
  double lo = values[0], hi = values[0];
  for (float v : values) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (float v : values) {
    if (hi <= lo) {
      out.push_back(lo);
      continue;
    }
    double q = std::round((v - lo) / (hi - lo) * 255.0);
    out.push_back(lo + q / 255.0 * (hi - lo));
  }
  return out;
}

}  // namespace

TEST_CASE("codec ids parse and print") {
  CHECK(Codec::parse("identity").kind == Codec::Kind::identity);
  CHECK(Codec::parse("quant8").kind == Codec::Kind::quant8);
  Codec f = Codec::parse("factor:8.6");
  CHECK(f.kind == Codec::Kind::factor);
  CHECK(f.ratio == doctest::Approx(8.6));
  CHECK(f.id() == "factor:8.6");
  CHECK_THROWS_AS(Codec::parse("zstd"), std::invalid_argument);
  CHECK_THROWS_AS(Codec::factor(1.0), std::invalid_argument);
}

TEST_CASE("encoded sizes follow the declared ratios") {
  CHECK(Codec::identity().encoded_size(1048576) == 1048576);
  CHECK(Codec::quant8().encoded_size(1048576) == 524292);  // half + 4 bytes of scales
  CHECK(Codec::factor(8.6).encoded_size(268435456) == 31213426);
  CHECK_THROWS_AS(Codec::quant8().encoded_size(1047), std::invalid_argument);
}

TEST_CASE("identity round trip is exact") {
  std::mt19937_64 rng(3);
  std::vector<std::byte> payload(4096);
  for (auto& b : payload) b = static_cast<std::byte>(rng() & 0xFF);
  auto encoded = codec_encode(Codec::identity(), payload);
  CHECK(encoded == payload);
  CHECK(codec_decode(Codec::identity(), encoded, payload.size()) == payload);
  CHECK_THROWS_AS(codec_decode(Codec::identity(), encoded, payload.size() - 1),
                  std::invalid_argument);
}

TEST_CASE("quant8 matches the per-element requantization oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (int round = 0; round < 20; ++round) {
    std::size_t n = 16 + rng() % 4096;
    std::vector<float> values(n);
    for (auto& v : values) v = fp16_to_float(fp16_from_float(dist(rng)));
    auto payload = halves_payload(values);
    auto encoded = codec_encode(Codec::quant8(), payload);
    CHECK(encoded.size() == 4 + n);
    auto decoded = payload_halves(codec_decode(Codec::quant8(), encoded, payload.size()));
    auto oracle = requantize_oracle(values);
    double max_err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      // fp16 storage perturbs the oracle value by at most one half ulp.
      CHECK(std::abs(decoded[i] - oracle[i]) <= 2e-3);
      max_err = std::max(max_err, std::abs(decoded[i] - static_cast<double>(values[i])));
    }
    CHECK(max_err <= 2.0 / 255.0);  // uniform [-1,1] error bound
  }
}

TEST_CASE("quant8 reconstructs constant payloads exactly") {
  std::vector<float> values(512, 0.3125f);  // exactly representable in fp16
  auto payload = halves_payload(values);
  auto decoded = payload_halves(
      codec_decode(Codec::quant8(), codec_encode(Codec::quant8(), payload), payload.size()));
  for (float v : decoded) CHECK(v == 0.3125f);
}

TEST_CASE("quant8 rejects odd-length payloads") {
  std::vector<std::byte> odd(1023);
  CHECK_THROWS_AS(codec_encode(Codec::quant8(), odd), std::invalid_argument);
}

TEST_CASE("factor restores length only") {
  std::mt19937_64 rng(9);
  std::vector<std::byte> payload(100000);
  for (auto& b : payload) b = static_cast<std::byte>(rng() & 0xFF);
  Codec codec = Codec::factor(8.6);
  auto encoded = codec_encode(codec, payload);
  CHECK(encoded.size() == codec.encoded_size(payload.size()));
  auto decoded = codec_decode(codec, encoded, payload.size());
  CHECK(decoded.size() == payload.size());
  std::vector<std::byte> wrong(encoded.size() + 1);
  CHECK_THROWS_AS(codec_decode(codec, wrong, payload.size()), std::invalid_argument);
}

TEST_CASE("size law holds for payloads of 1 KiB and up") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 40; ++i) {
    std::uint64_t n = 2 * (512 + rng() % 2000000);  // even, >= 1 KiB
    std::vector<std::byte> payload(static_cast<std::size_t>(n));
    for (auto& codec : {Codec::identity(), Codec::quant8(), Codec::factor(2.0), Codec::factor(8.6)}) {
      auto encoded = codec_encode(codec, payload);
      CHECK(encoded.size() == codec.encoded_size(n));
    }
  }
}

TEST_CASE("fp16 round trips through float exactly for finite values") {
  int checked = 0;
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    auto half = static_cast<std::uint16_t>(h);
    if (((half >> 10) & 0x1F) == 0x1F) continue;  // skip inf/nan
    float f = fp16_to_float(half);
    CHECK(fp16_from_float(f) == half);
    ++checked;
  }
  CHECK(checked == 0x10000 - 2048);
}
