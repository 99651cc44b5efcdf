#include "cake/scheduler.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>

#include "cake/compute.hpp"
#include "cake/transfer.hpp"

namespace cake {

const char* to_string(ClockMode mode) { return mode == ClockMode::sim ? "sim" : "live"; }

ClockMode parse_clock_mode(std::string_view s) {
  if (s == "sim") return ClockMode::sim;
  if (s == "live") return ClockMode::live;
  throw std::invalid_argument("unknown clock mode '" + std::string(s) + "'");
}

RunPlan plan_run(const RequestSpec& request, const ModelProfile& profile, const Codec& codec,
                 const ChunkStore& store, std::uint64_t seed) {
  request.validate();
  profile.validate();
  RunPlan plan;
  plan.chunks = split_into_chunks(request.total_tokens, request.chunk_size);
  auto tokens = token_stream(seed, request.total_tokens);
  std::optional<ChunkKey> prev;
  for (const auto& chunk : plan.chunks) {
    std::span<const std::uint32_t> span(tokens.data() + chunk.token_start, chunk.token_count);
    ChunkKey key = chain_hash(prev, span);
    prev = key;
    auto meta = store.meta_of(key);
    if (!meta)
      throw MissingKeyError("run: store is not populated for chunk " +
                            std::to_string(chunk.index) + " (key " + key.hex() + ")");
    if (meta->codec_id != codec.id())
      throw StoreError("run: store entry for chunk " + std::to_string(chunk.index) +
                       " was populated with codec '" + meta->codec_id + "', requested '" +
                       codec.id() + "'");
    plan.keys.push_back(key);
    plan.encoded_bytes.push_back(meta->encoded_bytes);
    plan.uncompressed_bytes.push_back(meta->uncompressed_bytes);
  }
  return plan;
}

std::vector<Micros> per_chunk_compute_us(const CostModel& model, std::span<const ChunkSpec> chunks,
                                         double power_fraction) {
  std::vector<Micros> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) out.push_back(compute_latency(model, c, power_fraction));
  return out;
}

std::vector<Micros> per_chunk_fetch_us(const BandwidthTrace& trace,
                                       std::span<const std::uint64_t> encoded_bytes,
                                       std::span<const std::uint64_t> uncompressed_bytes,
                                       double decode_us_per_byte) {
  if (!trace.is_constant())
    throw std::invalid_argument("per_chunk_fetch_us: defined for static traces only");
  std::vector<Micros> out;
  out.reserve(encoded_bytes.size());
  for (std::size_t i = 0; i < encoded_bytes.size(); ++i) {
    Micros dur = fetch_latency(trace, encoded_bytes[i], 0);
    dur += ms_to_us(decode_us_per_byte * static_cast<double>(uncompressed_bytes[i]) / 1000.0);
    out.push_back(dur);
  }
  return out;
}

SplitChoice oracle_best_split(std::span<const Micros> per_chunk_compute,
                              std::span<const Micros> per_chunk_fetch) {
  if (per_chunk_compute.size() != per_chunk_fetch.size())
    throw std::invalid_argument("oracle_best_split: list lengths differ");
  const std::size_t n = per_chunk_compute.size();
  // Suffix fetch sums, then sweep k upward carrying the prefix compute sum.
  std::vector<Micros> suffix(n + 1, 0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + per_chunk_fetch[i];
  SplitChoice best{0, suffix[0]};
  Micros prefix = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    prefix += per_chunk_compute[k - 1];
    Micros t = std::max(prefix, suffix[k]);
    if (t < best.ttft_star) best = {static_cast<std::uint32_t>(k), t};
  }
  return best;
}

namespace {

struct SimDurations {
  std::vector<Micros> compute_us;
  const BandwidthTrace* trace;
  const RunPlan* plan;
  double decode_us_per_byte;

  Micros fetch_duration(std::uint32_t index, Micros start) const {
    Micros dur = fetch_latency(*trace, plan->encoded_bytes[index], start);
    dur += ms_to_us(decode_us_per_byte * static_cast<double>(plan->uncompressed_bytes[index]) /
                    1000.0);
    return dur;
  }
};

void finalize(RunReport& report, const ClaimTable& table) {
  std::sort(report.chunks.begin(), report.chunks.end(),
            [](const ChunkRecord& a, const ChunkRecord& b) { return a.index < b.index; });
  if (report.chunks.size() != report.n_chunks)
    throw std::logic_error("run: chunk coverage is incomplete");
  for (std::uint32_t i = 0; i < report.n_chunks; ++i) {
    if (report.chunks[i].index != i) throw std::logic_error("run: duplicate or missing chunk claim");
  }
  report.ttft_us = 0;
  report.compute_busy_us = 0;
  report.io_busy_us = 0;
  for (const auto& rec : report.chunks) {
    report.ttft_us = std::max(report.ttft_us, rec.finish_us);
    (rec.side == Side::compute ? report.compute_busy_us : report.io_busy_us) +=
        rec.finish_us - rec.start_us;
  }
  report.merge_point = table.merge_point();
  report.computed_fraction =
      static_cast<double>(report.merge_point) / static_cast<double>(report.n_chunks);
}

RunReport sim_compute_serial(const RunPlan& plan, ComputeEngine& engine) {
  const auto n = static_cast<std::uint32_t>(plan.chunks.size());
  ClaimTable table(n);
  RunReport report;
  report.mode = RunMode::compute_only;
  report.n_chunks = n;
  Micros t = 0;
  for (const auto& chunk : plan.chunks) {
    table.claim(Side::compute, chunk.index, t);
    PrefillStep step = engine.prefill_chunk(chunk, t);
    report.chunks.push_back({chunk.index, Side::compute, step.started_at_us, step.finished_at_us, 0});
    t = step.finished_at_us;
  }
  finalize(report, table);
  return report;
}

RunReport sim_io_serial(const RunPlan& plan, const SimDurations& durations) {
  const auto n = static_cast<std::uint32_t>(plan.chunks.size());
  ClaimTable table(n);
  RunReport report;
  report.mode = RunMode::io_only;
  report.n_chunks = n;
  Micros t = 0;
  for (std::uint32_t i = n; i-- > 0;) {
    table.claim(Side::io, i, t);
    Micros dur = durations.fetch_duration(i, t);
    report.chunks.push_back({i, Side::io, t, t + dur, plan.encoded_bytes[i]});
    t += dur;
  }
  finalize(report, table);
  return report;
}

// The bidirectional event loop: both sides claim greedily at the instant
// they come free; simultaneous readiness resolves toward the compute side,
// which holds the prefix dependency. The loop ends when every chunk is
// claimed; in-flight work finishes and the later side sets the TTFT.
RunReport sim_bidirectional(const RunPlan& plan, ComputeEngine& engine,
                            const SimDurations& durations, const RunOptions& options) {
  const auto n = static_cast<std::uint32_t>(plan.chunks.size());
  if (!options.compute_enabled && !options.io_enabled)
    throw std::invalid_argument("run: cake mode needs at least one side enabled");
  ClaimTable table(n);
  RunReport report;
  report.mode = RunMode::cake;
  report.n_chunks = n;
  Micros compute_free = 0;
  Micros io_free = 0;
  while (!table.all_claimed()) {
    bool pick_compute;
    if (options.compute_enabled && options.io_enabled)
      pick_compute = compute_free <= io_free;
    else
      pick_compute = options.compute_enabled;
    if (pick_compute) {
      std::uint32_t idx = *table.next_index(Side::compute);
      table.claim(Side::compute, idx, compute_free);
      PrefillStep step = engine.prefill_chunk(plan.chunks[idx], compute_free);
      report.chunks.push_back({idx, Side::compute, step.started_at_us, step.finished_at_us, 0});
      report.events.push_back("t=" + std::to_string(compute_free) + "us compute claimed chunk " +
                              std::to_string(idx));
      compute_free = step.finished_at_us;
    } else {
      std::uint32_t idx = *table.next_index(Side::io);
      table.claim(Side::io, idx, io_free);
      Micros dur = durations.fetch_duration(idx, io_free);
      report.chunks.push_back({idx, Side::io, io_free, io_free + dur, plan.encoded_bytes[idx]});
      report.events.push_back("t=" + std::to_string(io_free) + "us io claimed chunk " +
                              std::to_string(idx));
      io_free += dur;
    }
  }
  report.events.push_back("pointers crossed; stop signaled");
  finalize(report, table);
  return report;
}

}  // namespace

RunReport run_sim_planned(const RunPlan& plan, const CostModel& cost_model,
                          const BandwidthTrace& trace, RunMode mode, double power_fraction,
                          const RunOptions& options) {
  if (plan.chunks.empty()) throw std::invalid_argument("run: empty plan");
  if (plan.encoded_bytes.size() != plan.chunks.size() ||
      plan.uncompressed_bytes.size() != plan.chunks.size())
    throw std::invalid_argument("run: plan size arrays disagree with chunks");
  ComputeEngine engine(cost_model, TokenBudget{options.token_budget, power_fraction});
  SimDurations durations{per_chunk_compute_us(cost_model, plan.chunks, power_fraction), &trace,
                         &plan, options.decode_us_per_byte};
  switch (mode) {
    case RunMode::compute_only:
      return sim_compute_serial(plan, engine);
    case RunMode::io_only:
      return sim_io_serial(plan, durations);
    case RunMode::cake:
      return sim_bidirectional(plan, engine, durations, options);
  }
  throw std::logic_error("run: bad mode");
}

namespace {

RunReport run_live(const RunPlan& plan, const CostModel& cost_model, const BandwidthTrace& trace,
                   const Codec& codec, const ChunkStore& store, RunMode mode, double power,
                   const RunOptions& options) {
  const auto n = static_cast<std::uint32_t>(plan.chunks.size());
  bool io_on = mode == RunMode::io_only || (mode == RunMode::cake && options.io_enabled);
  bool compute_on = mode == RunMode::compute_only || (mode == RunMode::cake && options.compute_enabled);
  if (!io_on && !compute_on) throw std::invalid_argument("run: no side enabled");

  RunTimer timer;
  ClaimTable table(n);
  std::unique_ptr<TransferEngine> engine;
  if (io_on) {
    TransferOptions topts;
    topts.throttle_quantum_bytes = options.throttle_quantum_bytes;
    topts.jitter_max_us = options.jitter_max_us;
    topts.jitter_seed = options.jitter_seed;
    topts.record_slices = options.record_slices;
    engine = std::make_unique<TransferEngine>(store, trace, codec, &table, timer, topts);
    std::vector<FetchTask> tasks;
    tasks.reserve(n);
    for (std::uint32_t i = n; i-- > 0;)
      tasks.push_back({plan.keys[i], plan.chunks[i], plan.encoded_bytes[i]});
    engine->push_seq(std::move(tasks));
  }

  RunReport report;
  report.mode = mode;
  report.n_chunks = n;
  if (compute_on) {
    ComputeEngine compute(cost_model, TokenBudget{options.token_budget, power});
    ComputeEngine::ForwardHooks hooks;
    hooks.table = &table;
    hooks.timer = &timer;
    hooks.jitter_max_us = options.jitter_max_us;
    hooks.jitter_seed = options.jitter_seed + 1;
    if (engine) {
      hooks.probe = &engine->resident_set();
      hooks.signal_stop = [&engine] { engine->stop(); };
    }
    auto recs = compute.run_forward(plan.chunks, plan.keys, hooks);
    report.chunks.insert(report.chunks.end(), recs.begin(), recs.end());
  }
  if (engine) {
    engine->wait();
    const auto& io_recs = engine->records();
    report.chunks.insert(report.chunks.end(), io_recs.begin(), io_recs.end());
  }
  finalize(report, table);
  return report;
}

}  // namespace

RunReport run(const RequestSpec& request, const ModelProfile& profile, const CostModel& cost_model,
              const BandwidthTrace& trace, const Codec& codec, RunMode mode, ClockMode clock,
              const ChunkStore& store, std::uint64_t seed, const RunOptions& options) {
  request.validate();
  profile.validate();
  cost_model.validate();
  if (request.chunk_size > options.token_budget)
    throw std::invalid_argument("run: chunk_size exceeds the per-step token budget");
  RunPlan plan = plan_run(request, profile, codec, store, seed);
  if (clock == ClockMode::sim)
    return run_sim_planned(plan, cost_model, trace, mode, request.power_fraction, options);
  return run_live(plan, cost_model, trace, codec, store, mode, request.power_fraction, options);
}

}  // namespace cake
