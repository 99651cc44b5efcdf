// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Sim criteria run on the virtual clock; throttle and
// overhead criteria use real threads, sleeps and disk reads.

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "cake/bench.hpp"
#include "cake/claim.hpp"
#include "cake/codec.hpp"
#include "cake/config.hpp"
#include "cake/model.hpp"
#include "cake/scheduler.hpp"
#include "cake/store.hpp"
#include "cake/transfer.hpp"

using namespace cake;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::duration<double>>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

struct FuzzInstance {
  RunPlan plan;
  CostModel cost;
  BandwidthTrace trace = BandwidthTrace::constant(1000);
  double power = 1.0;
};

FuzzInstance random_instance(std::mt19937_64& rng) {
  FuzzInstance inst;
  std::uint32_t n = 1 + static_cast<std::uint32_t>(rng() % 64);
  std::uint32_t chunk_size = 1 + static_cast<std::uint32_t>(rng() % 1024);
  std::uint64_t per_token = 1000 + rng() % 1000000;
  std::uint64_t start = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t count = (i + 1 == n && rng() % 3 == 0)
                              ? 1 + static_cast<std::uint32_t>(rng() % chunk_size)
                              : chunk_size;
    inst.plan.chunks.push_back({i, start, count});
    inst.plan.encoded_bytes.push_back(per_token * count);
    inst.plan.uncompressed_bytes.push_back(per_token * count);
    start += count;
  }
  inst.cost = {0.1 + static_cast<double>(rng() % 500) / 10.0,
               static_cast<double>(rng() % 50) / 1000.0, chunk_size};
  inst.trace = BandwidthTrace::constant(static_cast<double>(100 + rng() % 39900));
  const double powers[] = {0.1, 0.25, 0.5, 0.75, 0.9, 1.0};
  inst.power = powers[rng() % 6];
  return inst;
}

RunOptions options_for(const FuzzInstance& inst) {
  RunOptions opts;
  opts.token_budget = std::max<std::uint32_t>(512, inst.cost.reference_chunk_size);
  return opts;
}

// The shipped A100-like calibration with real 7B per-token KV sizes.
const CostModel kA100Like{30.0, 0.010, 512};
const ModelProfile k7B{"longalpaca-7b", 32, 4096, 2, 2, std::nullopt};

RunPlan plan_for_tokens(std::uint64_t tokens, const Codec& codec = Codec::identity()) {
  RunPlan plan;
  plan.chunks = split_into_chunks(tokens, 512);
  for (const auto& c : plan.chunks) {
    std::uint64_t raw = chunk_bytes(k7B, c);
    plan.encoded_bytes.push_back(codec.encoded_size(raw));
    plan.uncompressed_bytes.push_back(raw);
  }
  return plan;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / (tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// --- criterion 1: oracle near-optimality over >=1000 fuzzed sim instances ---
bool criterion_oracle_near_optimality(std::ostream& out) {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(0xCAFE0001);
  const int kInstances = 1000;
  int within = 0;
  for (int i = 0; i < kInstances; ++i) {
    FuzzInstance inst = random_instance(rng);
    RunReport cake =
        run_sim_planned(inst.plan, inst.cost, inst.trace, RunMode::cake, inst.power, options_for(inst));
    auto compute_us = per_chunk_compute_us(inst.cost, inst.plan.chunks, inst.power);
    auto fetch_us =
        per_chunk_fetch_us(inst.trace, inst.plan.encoded_bytes, inst.plan.uncompressed_bytes, 0.0);
    SplitChoice best = oracle_best_split(compute_us, fetch_us);
    // One-chunk greediness slack: the compute duration of the last chunk on
    // the computed side of the merge point, or one fetch, whichever is larger.
    Micros boundary_compute = cake.merge_point >= 1 ? compute_us[cake.merge_point - 1] : 0;
    Micros slack =
        std::max(boundary_compute, *std::max_element(fetch_us.begin(), fetch_us.end()));
    if (cake.ttft_us <= best.ttft_star + slack) ++within;
  }
  double elapsed = seconds_since(t0);
  out << within << "/" << kInstances << " within one-chunk slack, " << elapsed << "s";
  return within == kInstances && elapsed < 60.0;
}

// --- criterion 2: exactly-once + convergence, sim corpus + jittered live runs ---
bool criterion_exactly_once(std::ostream& out) {
  std::mt19937_64 rng(0xCAFE0001);  // same corpus as criterion 1
  int sim_ok = 0;
  const int kInstances = 1000;
  for (int i = 0; i < kInstances; ++i) {
    FuzzInstance inst = random_instance(rng);
    bool ok = true;
    for (RunMode mode : {RunMode::cake, RunMode::compute_only, RunMode::io_only}) {
      RunReport report =
          run_sim_planned(inst.plan, inst.cost, inst.trace, mode, inst.power, options_for(inst));
      if (report.chunks.size() != inst.plan.chunks.size()) ok = false;
      for (std::size_t j = 0; ok && j < report.chunks.size(); ++j)
        if (report.chunks[j].index != j) ok = false;
    }
    if (ok) ++sim_ok;
  }

  TempDir dir("cake_acceptance_live");
  ModelProfile profile{"live", 1, 1, 1, 1, 8192};  // 8 KiB per token
  RequestSpec request{768, 64, 1, 1.0};            // 12 chunks of 512 KiB
  ChunkStore store = ChunkStore::create(dir.path / "store");
  populate(store, request, profile, Codec::identity(), 5);
  CostModel cost{1.5, 0.002, 64};  // ~1.5-3.5 ms per chunk
  BandwidthTrace trace = BandwidthTrace::constant(1600);  // ~2.6 ms per chunk
  int live_ok = 0;
  const int kLiveRuns = 100;
  for (int i = 0; i < kLiveRuns; ++i) {
    RunOptions opts;
    opts.token_budget = 64;
    opts.jitter_max_us = 400;
    opts.jitter_seed = 1000 + i;
    RunReport report = run(request, profile, cost, trace, Codec::identity(), RunMode::cake,
                           ClockMode::live, store, 5, opts);
    bool ok = report.chunks.size() == 12;
    for (std::size_t j = 0; ok && j < report.chunks.size(); ++j) {
      if (report.chunks[j].index != j) ok = false;
      if ((report.chunks[j].side == Side::io) != (j >= report.merge_point)) ok = false;
    }
    if (ok) ++live_ok;
  }
  out << sim_ok << "/" << kInstances << " sim runs, " << live_ok << "/" << kLiveRuns
      << " jittered live runs clean";
  return sim_ok == kInstances && live_ok == kLiveRuns;
}

// --- criterion 3: dominance across the A100-like matrix + reduction band ---
bool criterion_dominance(std::ostream& out) {
  int cells = 0, ok_cells = 0;
  for (double mbps : {2000.0, 5000.0, 10000.0}) {
    for (double power : {0.1, 0.5, 0.9, 1.0}) {
      for (std::uint64_t tokens : {5000ull, 9000ull, 14000ull, 32768ull}) {
        RunPlan plan = plan_for_tokens(tokens);
        BandwidthTrace trace = BandwidthTrace::constant(mbps);
        RunReport cake = run_sim_planned(plan, kA100Like, trace, RunMode::cake, power);
        RunReport co = run_sim_planned(plan, kA100Like, trace, RunMode::compute_only, power);
        RunReport io = run_sim_planned(plan, kA100Like, trace, RunMode::io_only, power);
        auto compute_us = per_chunk_compute_us(kA100Like, plan.chunks, power);
        auto fetch_us =
            per_chunk_fetch_us(trace, plan.encoded_bytes, plan.uncompressed_bytes, 0.0);
        Micros losing_chunk = co.ttft_us <= io.ttft_us
                                  ? *std::max_element(fetch_us.begin(), fetch_us.end())
                                  : *std::max_element(compute_us.begin(), compute_us.end());
        ++cells;
        if (cake.ttft_us <= std::min(co.ttft_us, io.ttft_us) + losing_chunk) ++ok_cells;
      }
    }
  }
  // Structural reduction band at full power, 2000 mbps, 32k tokens.
  RunPlan plan = plan_for_tokens(32768);
  BandwidthTrace hdd = BandwidthTrace::constant(2000);
  RunReport cake = run_sim_planned(plan, kA100Like, hdd, RunMode::cake, 1.0);
  RunReport io = run_sim_planned(plan, kA100Like, hdd, RunMode::io_only, 1.0);
  double reduction = 1.0 - static_cast<double>(cake.ttft_us) / static_cast<double>(io.ttft_us);
  out << ok_cells << "/" << cells << " cells dominated; reduction vs io_only at 2000mbps/32k = "
      << reduction;
  return ok_cells == cells && reduction >= 0.70 && reduction <= 0.95;
}

// --- criterion 4: merge-point trend over context length at 10000 mbps ---
bool criterion_merge_trend(std::ostream& out) {
  BandwidthTrace ssd = BandwidthTrace::constant(10000);
  std::vector<double> fractions;
  for (std::uint64_t tokens : {2048ull, 4096ull, 8192ull, 16384ull, 32768ull}) {
    RunPlan plan = plan_for_tokens(tokens);
    fractions.push_back(
        run_sim_planned(plan, kA100Like, ssd, RunMode::cake, 1.0).computed_fraction);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < fractions.size(); ++i)
    if (fractions[i] > fractions[i - 1] + 1e-12) monotone = false;
  double drop_pp = (fractions.front() - fractions.back()) * 100.0;
  out << "computed fraction ";
  for (double f : fractions) out << f << " ";
  out << "drop=" << drop_pp << "pp";
  return monotone && drop_pp >= 5.0 && drop_pp <= 20.0;
}

// --- criterion 5: special-case collapse, event-log identity ---
bool criterion_collapse(std::ostream& out) {
  std::mt19937_64 rng(0xCAFE0005);
  int ok = 0;
  const int kConfigs = 20;
  for (int i = 0; i < kConfigs; ++i) {
    FuzzInstance inst = random_instance(rng);
    auto opts = options_for(inst);
    RunOptions no_io = opts;
    no_io.io_enabled = false;
    RunOptions no_compute = opts;
    no_compute.compute_enabled = false;
    std::string collapsed_c = event_csv(
        run_sim_planned(inst.plan, inst.cost, inst.trace, RunMode::cake, inst.power, no_io));
    std::string compute_only = event_csv(
        run_sim_planned(inst.plan, inst.cost, inst.trace, RunMode::compute_only, inst.power, opts));
    std::string collapsed_io = event_csv(
        run_sim_planned(inst.plan, inst.cost, inst.trace, RunMode::cake, inst.power, no_compute));
    std::string io_only = event_csv(
        run_sim_planned(inst.plan, inst.cost, inst.trace, RunMode::io_only, inst.power, opts));
    if (collapsed_c == compute_only && collapsed_io == io_only) ++ok;
  }
  out << ok << "/" << kConfigs << " event logs identical";
  return ok == kConfigs;
}

// --- criterion 6: live throttle fidelity over any 100 ms window ---
bool criterion_throttle(std::ostream& out) {
  TempDir dir("cake_acceptance_throttle");
  ModelProfile profile{"throttle", 1, 1, 1, 1, 65536};  // 64 KiB per token
  RequestSpec request{8192, 8192, 1, 1.0};              // one 512 MiB chunk
  ChunkStore store = ChunkStore::create(dir.path / "store");
  populate(store, request, profile, Codec::identity(), 900);
  RunPlan plan = plan_run(request, profile, Codec::identity(), store, 900);

  std::uint64_t total_bytes = 0;
  bool all_ok = true;
  std::ostringstream detail;
  for (double mbps : {2000.0, 5000.0, 10000.0}) {
    // Shared-sandbox CPUs stall threads for ~10 ms at random; one retry per
    // rate keeps an unlucky deschedule from failing a correct throttle.
    bool rate_ok = false;
    double worst_low = 1.0, worst_high = 1.0;
    for (int attempt = 0; attempt < 2 && !rate_ok; ++attempt) {
      // Warm the page cache so storage sustains the trace; the throttle is
      // what is under test, not the sandbox filesystem.
      for (const auto& key : plan.keys) (void)store.get(key);
      BandwidthTrace trace = BandwidthTrace::constant(mbps);
      RunTimer timer;
      TransferOptions topts;
      topts.record_slices = true;
      // Keep slice spacing well above OS wakeup noise at every rate while
      // staying under 5% of a 100 ms window's bits, and give the reader
      // enough lead to ride out sandbox I/O stalls.
      topts.throttle_quantum_bytes = mbps >= 8000   ? (4u << 20)
                                     : mbps >= 4000 ? (2u << 20)
                                                    : (1u << 20);
      topts.read_ahead_bytes = 64u << 20;
      TransferEngine engine(store, trace, Codec::identity(), nullptr, timer, topts);
      std::vector<FetchTask> tasks;
      for (std::size_t i = plan.chunks.size(); i-- > 0;)
        tasks.push_back({plan.keys[i], plan.chunks[i], plan.encoded_bytes[i]});
      engine.push_seq(std::move(tasks));
      engine.wait();
      const auto& slices = engine.slices();
      for (std::size_t i = 0; i < plan.encoded_bytes.size(); ++i)
        total_bytes += plan.encoded_bytes[i];

      // Delivered bits inside every 100 ms window on a 5 ms grid vs the
      // trace. The grid covers the transfer phase: it starts at the first
      // release (run startup is buffer preallocation, not throttling) and a
      // window must start at or after its own bits were first deliverable.
      const Micros window = 100000;
      Micros begin = slices.front().at_us - fetch_latency(trace, topts.throttle_quantum_bytes, 0);
      Micros end = slices.back().at_us;
      worst_low = 1.0;
      worst_high = 1.0;
      auto cum_at = [&](Micros t) -> std::uint64_t {
        std::uint64_t cum = 0;
        for (const auto& s : slices) {
          if (s.at_us > t) break;
          cum = s.cumulative_bits;
        }
        return cum;
      };
      rate_ok = true;
      for (Micros t = std::max<Micros>(begin, 0); t + window <= end; t += 5000) {
        double delivered = static_cast<double>(cum_at(t + window) - cum_at(t));
        double expected = mbps * static_cast<double>(window);
        double ratio = delivered / expected;
        worst_low = std::min(worst_low, ratio);
        worst_high = std::max(worst_high, ratio);
        if (ratio < 0.9 || ratio > 1.1) rate_ok = false;
      }
    }
    if (!rate_ok) all_ok = false;
    detail << mbps << "mbps[" << worst_low << "," << worst_high << "] ";
  }
  out << detail.str() << "total=" << total_bytes / (1024.0 * 1024.0 * 1024.0) << "GiB";
  return all_ok && total_bytes >= (1ull << 30);
}

// --- criterion 7: scheduler decision overhead ---
bool criterion_overhead(std::ostream& out) {
  OverheadStats stats = measure_overhead(8192, 8);
  out << "p50=" << stats.p50_ns / 1000.0 << "us p99=" << stats.p99_ns / 1000.0 << "us over "
      << stats.samples << " samples";
  return stats.p99_ns < 100'000;
}

// --- criterion 8: compression equivalence ---
bool criterion_compression(std::ostream& out) {
  // factor(8.6) on the trace vs the bandwidth scaled by 8.6.
  RunPlan factored = plan_for_tokens(32768, Codec::factor(8.6));
  RunPlan raw = plan_for_tokens(32768, Codec::identity());
  BandwidthTrace base = BandwidthTrace::constant(2000);
  Micros with_codec =
      run_sim_planned(factored, kA100Like, base, RunMode::io_only, 1.0).ttft_us;
  Micros with_bandwidth =
      run_sim_planned(raw, kA100Like, base.scaled(8.6), RunMode::io_only, 1.0).ttft_us;
  const std::uint64_t quantum_bytes = 1 << 20;
  Micros quantum_time = fetch_latency(base.scaled(8.6), quantum_bytes, 0);
  Micros delta = std::abs(with_codec - with_bandwidth);

  // quant8 halves bytes within 0.01% and honors the error bound.
  std::mt19937_64 rng(0xCAFE0008);
  std::vector<std::byte> payload(1 << 20);
  auto* halves = reinterpret_cast<std::uint16_t*>(payload.data());
  for (std::size_t i = 0; i < payload.size() / 2; ++i) {
    double u = static_cast<double>(rng() >> 11) * (2.0 / 9007199254740992.0) - 1.0;
    halves[i] = fp16_from_float(static_cast<float>(u));
  }
  auto encoded = codec_encode(Codec::quant8(), payload);
  double overhead_frac = (static_cast<double>(encoded.size()) - payload.size() / 2.0) /
                         static_cast<double>(payload.size());
  auto decoded = codec_decode(Codec::quant8(), encoded, payload.size());
  const auto* in = reinterpret_cast<const std::uint16_t*>(payload.data());
  const auto* back = reinterpret_cast<const std::uint16_t*>(decoded.data());
  float lo = fp16_to_float(in[0]), hi = fp16_to_float(in[0]);
  for (std::size_t i = 0; i < payload.size() / 2; ++i) {
    lo = std::min(lo, fp16_to_float(in[i]));
    hi = std::max(hi, fp16_to_float(in[i]));
  }
  double level = (hi - lo) / 255.0;
  double max_err = 0.0;
  for (std::size_t i = 0; i < payload.size() / 2; ++i)
    max_err = std::max(max_err,
                       std::abs(static_cast<double>(fp16_to_float(back[i])) - fp16_to_float(in[i])));
  out << "factor(8.6) vs trace x8.6 delta=" << delta << "us (quantum=" << quantum_time
      << "us); quant8 overhead=" << overhead_frac << " max_err=" << max_err
      << " bound=" << 2.0 * level;
  return delta <= quantum_time && overhead_frac <= 0.0001 && max_err <= 2.0 * level;
}

// --- criterion 9: store integrity at 10,000 chunks ---
bool criterion_store_integrity(std::ostream& out) {
  TempDir dir("cake_acceptance_store");
  ModelProfile profile{"integrity", 1, 1, 1, 1, 64};  // 64 B per token
  RequestSpec request{80000, 8, 1, 1.0};              // 10,000 chunks of 512 B
  fs::path root = dir.path / "store";
  std::vector<ChunkKey> keys;
  {
    ChunkStore store = ChunkStore::create(root);
    auto result = populate(store, request, profile, Codec::identity(), 77);
    keys = std::move(result.keys);
  }
  ChunkStore reopened = ChunkStore::open(root);
  if (reopened.entry_count() != 10000 || keys.size() != 10000) {
    out << "expected 10000 chunks, saw " << reopened.entry_count();
    return false;
  }
  auto chunks = split_into_chunks(request.total_tokens, request.chunk_size);
  int exact = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto got = reopened.get(keys[i]);
    auto expected = synth_payload(77, chunks[i].index, chunk_bytes(profile, chunks[i]));
    if (got.size() == expected.size() &&
        std::memcmp(got.data(), expected.data(), got.size()) == 0)
      ++exact;
  }

  // Prefix-chained key sharing over randomized token sequences.
  std::mt19937_64 rng(0xCAFE0009);
  int prefix_ok = 0;
  const int kRounds = 100;
  for (int round = 0; round < kRounds; ++round) {
    std::uint64_t seed = rng();
    std::uint32_t chunk_size = 4 + static_cast<std::uint32_t>(rng() % 60);
    std::uint64_t shared = chunk_size * (1 + rng() % 8);
    auto tokens_a = token_stream(seed, shared + 1 + rng() % 200);
    auto tokens_b = token_stream(seed, shared + 1 + rng() % 200);
    tokens_b.resize(std::max<std::size_t>(tokens_b.size(), shared + 1));
    tokens_b[shared] ^= 1;  // diverge right after the shared prefix
    auto keys_of = [&](const std::vector<std::uint32_t>& ts) {
      std::vector<ChunkKey> ks;
      std::optional<ChunkKey> prev;
      for (const auto& c : split_into_chunks(ts.size(), chunk_size)) {
        ks.push_back(chain_hash(prev, std::span<const std::uint32_t>(ts.data() + c.token_start,
                                                                     c.token_count)));
        prev = ks.back();
      }
      return ks;
    };
    auto ka = keys_of(tokens_a);
    auto kb = keys_of(tokens_b);
    std::size_t shared_chunks = shared / chunk_size;
    bool ok = true;
    for (std::size_t i = 0; i < shared_chunks; ++i)
      if (!(ka[i] == kb[i])) ok = false;
    if (ka.size() > shared_chunks && kb.size() > shared_chunks &&
        ka[shared_chunks] == kb[shared_chunks])
      ok = false;  // first diverging chunk must differ
    if (ok) ++prefix_ok;
  }
  out << exact << "/10000 byte-exact after reopen; " << prefix_ok << "/" << kRounds
      << " prefix-sharing rounds";
  return exact == 10000 && prefix_ok == kRounds;
}

// --- criterion 10: byte-identical CSV for identical config and seed ---
bool criterion_reproducibility(std::ostream& out) {
  TempDir dir("cake_acceptance_repro");
  std::string config_text = R"([profile midi]
n_layers = 2
hidden_size = 32
precision_bytes = 2
per_token_bytes = 8192

[cost_model desk]
alpha_ms = 4
beta_ms_per_token = 0.002

[trace hdd2000]
mbps = 2000
[trace ssd10000]
mbps = 10000

[experiment]
profiles = midi
cost_model = desk
context_lengths = 5000, 14000, 32768
chunk_size = 512
traces = hdd2000, ssd10000
power_fractions = 0.5, 1.0
codecs = identity, factor:8.6
modes = cake, compute_only, io_only
clock = sim
seed = 1234
payloads = sparse
store_root = )" + (dir.path / "stores").string() +
                            "\n";
  ExperimentConfig cfg = ExperimentConfig::from_config(ConfigFile::parse(config_text));
  std::ostringstream sink;
  if (cmd_populate(cfg, sink) != 0) {
    out << "populate failed";
    return false;
  }
  auto rows_a = run_matrix(cfg, false);
  auto rows_b = run_matrix(cfg, true);
  std::ostringstream a, b;
  write_results_csv(rows_a, a);
  write_results_csv(rows_b, b);
  bool ok = !a.str().empty() && a.str() == b.str();
  out << rows_a.size() << " rows, " << (ok ? "byte-identical" : "MISMATCH");
  return ok;
}

struct Criterion {
  int id;
  const char* name;
  std::function<bool(std::ostream&)> fn;
};

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {1, "oracle near-optimality", criterion_oracle_near_optimality},
      {2, "exactly-once + convergence", criterion_exactly_once},
      {3, "dominance over baselines", criterion_dominance},
      {4, "merge-point trend", criterion_merge_trend},
      {5, "special-case collapse", criterion_collapse},
      {6, "throttle fidelity", criterion_throttle},
      {7, "scheduler overhead", criterion_overhead},
      {8, "compression equivalence", criterion_compression},
      {9, "store integrity", criterion_store_integrity},
      {10, "reproducibility", criterion_reproducibility},
  };
  int failures = 0;
  for (const auto& criterion : criteria) {
    std::ostringstream detail;
    bool pass = false;
    try {
      pass = criterion.fn(detail);
    } catch (const std::exception& e) {
      detail << "exception: " << e.what();
    }
    if (!pass) ++failures;
    std::cout << "criterion " << criterion.id << " (" << criterion.name << "): "
              << (pass ? "PASS" : "FAIL") << " [" << detail.str() << "]\n";
  }
  std::cout << (failures == 0 ? "acceptance: all criteria passed\n"
                              : "acceptance: " + std::to_string(failures) + " criteria failed\n");
  return failures;
}
