#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cake/time.hpp"

namespace cake {

// Per-model constants that fix the KV-cache footprint of one token.
// Without an override, a token costs kv_multiplier * n_layers * hidden_size *
// precision_bytes bytes (two planes, K and V, by default).
struct ModelProfile {
  std::string name;
  std::uint32_t n_layers = 0;
  std::uint32_t hidden_size = 0;
  std::uint32_t precision_bytes = 0;  // one of 1, 2, 4
  std::uint32_t kv_multiplier = 2;
  std::optional<std::uint64_t> per_token_bytes_override;

  void validate() const;
};

struct RequestSpec {
  std::uint64_t total_tokens = 0;
  std::uint32_t chunk_size = 0;
  std::uint32_t batch_size = 1;
  double power_fraction = 1.0;  // share of GPU available to this request, (0, 1]

  void validate() const;
};

// A contiguous token range. Chunks of a request tile [0, total_tokens)
// in order; only the last chunk may be short.
struct ChunkSpec {
  std::uint32_t index = 0;
  std::uint64_t token_start = 0;
  std::uint32_t token_count = 0;
};

// Affine per-chunk prefill latency: alpha covers the fixed step overhead,
// beta the attention-over-prefix slope. Latency of chunk i grows linearly
// with its token_start, so whole-sequence prefill grows quadratically.
struct CostModel {
  double alpha_ms = 0.0;
  double beta_ms_per_token = 0.0;
  std::uint32_t reference_chunk_size = 512;

  void validate() const;
};

// Piecewise-constant I/O bandwidth in megabits per second. A constant trace
// is a single breakpoint at t=0; the last segment extends forever.
// Numerically, 1 mbps == 1 bit per microsecond, which keeps trace
// integration exact in integer arithmetic for whole-number rates.
class BandwidthTrace {
 public:
  struct Breakpoint {
    Micros at_us = 0;
    double mbps = 0.0;
  };

  explicit BandwidthTrace(std::vector<Breakpoint> points);
  static BandwidthTrace constant(double mbps);

  const std::vector<Breakpoint>& breakpoints() const { return points_; }
  double mbps_at(Micros t) const;
  bool is_constant() const { return points_.size() == 1; }

  // Same shape with every rate multiplied by `factor`.
  BandwidthTrace scaled(double factor) const;

 private:
  std::vector<Breakpoint> points_;
};

std::uint64_t kv_bytes_per_token(const ModelProfile& profile);

std::uint64_t chunk_bytes(const ModelProfile& profile, const ChunkSpec& chunk);

std::vector<ChunkSpec> split_into_chunks(std::uint64_t total_tokens, std::uint32_t chunk_size);

// (alpha + beta * token_start) scaled by chunk length relative to the
// reference size and inversely by the power fraction. Rounded to the
// nearest microsecond.
Micros compute_latency(const CostModel& model, const ChunkSpec& chunk, double power_fraction);

// Smallest whole-microsecond duration d such that the trace delivers at
// least nbytes*8 bits over [start_time, start_time + d]. Exact across
// breakpoints; position within the trace matters only for dynamic traces.
Micros fetch_latency(const BandwidthTrace& trace, std::uint64_t nbytes, Micros start_time);

// Bit-level core of fetch_latency; also drives the live throttle.
Micros time_to_transfer_bits(const BandwidthTrace& trace, std::uint64_t bits, Micros start_time);

}  // namespace cake
