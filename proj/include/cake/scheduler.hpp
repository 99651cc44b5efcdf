#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cake/claim.hpp"
#include "cake/codec.hpp"
#include "cake/model.hpp"
#include "cake/report.hpp"
#include "cake/store.hpp"

namespace cake {

// sim: deterministic discrete-event run on a virtual clock.
// live: real workers, real sleeps, real disk reads under the throttle.
enum class ClockMode { sim, live };

const char* to_string(ClockMode mode);
ClockMode parse_clock_mode(std::string_view s);

struct RunOptions {
  // Side switches apply to RunMode::cake only; baselines are their own
  // serial paths so the special-case collapse is a real check.
  bool compute_enabled = true;
  bool io_enabled = true;
  std::uint32_t token_budget = 512;
  std::uint64_t throttle_quantum_bytes = 1 << 20;
  double decode_us_per_byte = 0.0;  // charged per uncompressed byte after each fetch (sim)
  std::uint32_t jitter_max_us = 0;  // live-mode test instrumentation
  std::uint64_t jitter_seed = 0;
  bool record_slices = false;
};

// The chunk sequence of a request with its store-resolved identities and
// sizes. Building the plan verifies the store holds every chunk (full
// prefix hit) under the requested codec. keys may stay empty for purely
// simulated plans; only live runs touch payloads.
struct RunPlan {
  std::vector<ChunkSpec> chunks;
  std::vector<ChunkKey> keys;
  std::vector<std::uint64_t> encoded_bytes;
  std::vector<std::uint64_t> uncompressed_bytes;
};

RunPlan plan_run(const RequestSpec& request, const ModelProfile& profile, const Codec& codec,
                 const ChunkStore& store, std::uint64_t seed);

std::vector<Micros> per_chunk_compute_us(const CostModel& model, std::span<const ChunkSpec> chunks,
                                         double power_fraction);

// Static-trace per-chunk fetch durations (position-independent by
// construction), including any modeled decode charge.
std::vector<Micros> per_chunk_fetch_us(const BandwidthTrace& trace,
                                       std::span<const std::uint64_t> encoded_bytes,
                                       std::span<const std::uint64_t> uncompressed_bytes,
                                       double decode_us_per_byte);

struct SplitChoice {
  std::uint32_t k_star = 0;   // chunks [0, k) computed, [k, N) fetched
  Micros ttft_star = 0;
};

// Exhaustive sweep of every split point: TTFT(k) = max(sum of the first k
// compute durations, sum of the last N-k fetch durations). Ties break
// toward smaller k.
SplitChoice oracle_best_split(std::span<const Micros> per_chunk_compute,
                              std::span<const Micros> per_chunk_fetch);

// One full acquisition run over a populated store. cake launches the
// forward compute worker and the reverse fetch worker concurrently and
// ends when the pointers cross; the baselines cover the sequence with a
// single side. Every mode claims each chunk exactly once.
RunReport run(const RequestSpec& request, const ModelProfile& profile, const CostModel& cost_model,
              const BandwidthTrace& trace, const Codec& codec, RunMode mode, ClockMode clock,
              const ChunkStore& store, std::uint64_t seed, const RunOptions& options = {});

// Virtual-clock run over a prebuilt plan; no store involved. This is the
// entry the oracle and property suites drive.
RunReport run_sim_planned(const RunPlan& plan, const CostModel& cost_model,
                          const BandwidthTrace& trace, RunMode mode, double power_fraction,
                          const RunOptions& options = {});

}  // namespace cake
