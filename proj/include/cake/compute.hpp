#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cake/claim.hpp"
#include "cake/model.hpp"
#include "cake/report.hpp"
#include "cake/store.hpp"
#include "cake/transfer.hpp"

namespace cake {

// vLLM-style token budget: the per-step cap bounds chunk size, and the
// share granted to this request is its effective power fraction.
struct TokenBudget {
  std::uint32_t budget_per_step = 512;
  double share_for_request = 1.0;
};

struct PrefillStep {
  ChunkSpec chunk;
  double power_fraction = 1.0;
  Micros started_at_us = 0;
  Micros finished_at_us = 0;
};

// The forward-order chunk-prefill loop. Chunks must be processed in
// ascending index order (each step depends on the whole prefix); feeding a
// chunk out of order is a hard fault.
class ComputeEngine {
 public:
  ComputeEngine(CostModel model, TokenBudget budget);

  // Step law for the next chunk in sequence: duration is exactly
  // compute_latency(model, chunk, share). Virtual-clock path.
  PrefillStep prefill_chunk(const ChunkSpec& chunk, Micros start_us);

  void reset() { next_index_ = 0; }

  const CostModel& model() const { return model_; }
  const TokenBudget& budget() const { return budget_; }

  struct ForwardHooks {
    ClaimTable* table = nullptr;            // required
    const ResidentSet* probe = nullptr;     // optional residency check before each claim
    std::function<void()> signal_stop;      // tells the fetch side to wind down
    const RunTimer* timer = nullptr;        // required
    std::uint32_t jitter_max_us = 0;
    std::uint64_t jitter_seed = 0;
  };

  // Live loop: walks chunks from index 0, checking residency then claiming
  // before each one, and realizes each step by sleeping its modeled
  // latency. Stops at the first chunk the fetch side owns.
  std::vector<ChunkRecord> run_forward(std::span<const ChunkSpec> chunks,
                                       std::span<const ChunkKey> keys, const ForwardHooks& hooks);

 private:
  CostModel model_;
  TokenBudget budget_;
  std::uint32_t next_index_ = 0;
};

}  // namespace cake
