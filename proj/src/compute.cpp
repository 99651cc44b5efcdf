#include "cake/compute.hpp"

#include <random>
#include <stdexcept>

namespace cake {

ComputeEngine::ComputeEngine(CostModel model, TokenBudget budget)
    : model_(model), budget_(budget) {
  model_.validate();
  if (budget_.budget_per_step < 1)
    throw std::invalid_argument("compute engine: token budget must be >= 1");
  if (!(budget_.share_for_request > 0.0) || budget_.share_for_request > 1.0)
    throw std::invalid_argument("compute engine: share_for_request must be in (0, 1]");
}

PrefillStep ComputeEngine::prefill_chunk(const ChunkSpec& chunk, Micros start_us) {
  if (chunk.index != next_index_)
    throw std::logic_error("prefill_chunk: prefix dependency violated (chunk fed out of order)");
  if (chunk.token_count > budget_.budget_per_step)
    throw std::invalid_argument("prefill_chunk: chunk exceeds token budget");
  ++next_index_;
  Micros dur = compute_latency(model_, chunk, budget_.share_for_request);
  return {chunk, budget_.share_for_request, start_us, start_us + dur};
}

std::vector<ChunkRecord> ComputeEngine::run_forward(std::span<const ChunkSpec> chunks,
                                                    std::span<const ChunkKey> keys,
                                                    const ForwardHooks& hooks) {
  if (!hooks.table || !hooks.timer) throw std::invalid_argument("run_forward: missing table/timer");
  if (!keys.empty() && keys.size() != chunks.size())
    throw std::invalid_argument("run_forward: keys/chunks length mismatch");
  std::mt19937_64 jitter_rng(hooks.jitter_seed ^ 0xA24BAED4963EE407ULL);
  std::vector<ChunkRecord> records;
  for (const auto& chunk : chunks) {
    if (hooks.jitter_max_us > 0)
      hooks.timer->sleep_for_us(static_cast<Micros>(jitter_rng() % (hooks.jitter_max_us + 1)));
    // Residency first, then the claim, once per chunk boundary.
    if (hooks.probe && !keys.empty() && hooks.probe->is_resident(keys[chunk.index])) {
      if (hooks.signal_stop) hooks.signal_stop();
      break;
    }
    if (!hooks.table->claim(Side::compute, chunk.index, hooks.timer->now_us())) {
      if (hooks.signal_stop) hooks.signal_stop();
      break;
    }
    Micros start = hooks.timer->now_us();
    Micros dur = compute_latency(model_, chunk, budget_.share_for_request);
    hooks.timer->sleep_for_us(dur);
    records.push_back({chunk.index, Side::compute, start, hooks.timer->now_us(), 0});
    ++next_index_;
  }
  if (hooks.signal_stop) hooks.signal_stop();  // idempotent; covers the claimed-everything path
  return records;
}

}  // namespace cake
