#include "cake/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <thread>

#include "cake/claim.hpp"
#include "cake/transfer.hpp"

namespace cake {

namespace fs = std::filesystem;

const char kResultsCsvVersion[] = "# cake-bench csv v1";

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& cfg) {
  const ConfigSection& exp = cfg.require("experiment", "");
  ExperimentConfig out;
  for (const auto& name : exp.get_list("profiles"))
    out.profiles.push_back(profile_from_section(cfg.require("profile", name)));
  out.cost_model_name = exp.get("cost_model");
  out.cost_model = cost_model_from_section(cfg.require("cost_model", out.cost_model_name));
  for (const auto& item : exp.get_list("context_lengths"))
    out.context_lengths.push_back(std::stoull(item));
  out.chunk_size = static_cast<std::uint32_t>(exp.get_u64_or("chunk_size", 512));
  for (const auto& name : exp.get_list("traces"))
    out.traces.emplace_back(name, trace_from_section(cfg.require("trace", name), cfg.dir));
  for (const auto& item : exp.get_list("power_fractions"))
    out.power_fractions.push_back(std::stod(item));
  for (const auto& item : exp.get_list("codecs")) out.codecs.push_back(Codec::parse(item));
  for (const auto& item : exp.get_list("modes")) out.modes.push_back(parse_run_mode(item));
  out.clock = parse_clock_mode(exp.get_or("clock", "sim"));
  out.seed = exp.get_u64_or("seed", 0);
  fs::path root = exp.get("store_root");
  out.store_root = root.is_relative() ? cfg.dir / root : root;
  out.payload_kind = exp.get_or("payloads", "sparse") == "random" ? PayloadKind::random
                                                                  : PayloadKind::sparse;
  out.token_budget = static_cast<std::uint32_t>(exp.get_u64_or("token_budget", 512));
  out.throttle_quantum_bytes = exp.get_u64_or("throttle_quantum_bytes", 1 << 20);
  out.decode_us_per_byte = exp.get_double_or("decode_us_per_byte", 0.0);
  if (out.profiles.empty() || out.context_lengths.empty() || out.traces.empty() ||
      out.power_fractions.empty() || out.codecs.empty() || out.modes.empty())
    throw std::invalid_argument("config: experiment axes must all be non-empty");
  return out;
}

RunOptions ExperimentConfig::run_options() const {
  RunOptions opts;
  opts.token_budget = token_budget;
  opts.throttle_quantum_bytes = throttle_quantum_bytes;
  opts.decode_us_per_byte = decode_us_per_byte;
  return opts;
}

std::filesystem::path store_dir_for(const fs::path& root, const ModelProfile& profile,
                                    const Codec& codec) {
  std::string codec_tag = codec.id();
  std::replace(codec_tag.begin(), codec_tag.end(), ':', '_');
  return root / (profile.name + "__" + codec_tag);
}

namespace {

std::string format_power(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", p);
  return buf;
}

std::string sanitize_error(std::string msg) {
  for (auto& c : msg)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return msg;
}

struct Cell {
  const ModelProfile* profile;
  std::uint64_t context;
  const std::string* trace_name;
  const BandwidthTrace* trace;
  double power;
  const Codec* codec;
  RunMode mode;
};

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const auto& profile : cfg.profiles)
    for (auto context : cfg.context_lengths)
      for (const auto& [tname, trace] : cfg.traces)
        for (double power : cfg.power_fractions)
          for (const auto& codec : cfg.codecs)
            for (RunMode mode : cfg.modes)
              cells.push_back({&profile, context, &tname, &trace, power, &codec, mode});
  return cells;
}

ResultRow run_cell(const ExperimentConfig& cfg, const Cell& cell, const ChunkStore& store) {
  ResultRow row;
  row.profile = cell.profile->name;
  row.context_tokens = cell.context;
  row.chunk_size = cfg.chunk_size;
  row.trace_name = *cell.trace_name;
  row.power = cell.power;
  row.codec_id = cell.codec->id();
  row.mode = cell.mode;
  row.clock = cfg.clock;
  row.seed = cfg.seed;
  try {
    RequestSpec request{cell.context, cfg.chunk_size, 1, cell.power};
    row.report = run(request, *cell.profile, cfg.cost_model, *cell.trace, *cell.codec, cell.mode,
                     cfg.clock, store, cfg.seed, cfg.run_options());
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.error = sanitize_error(e.what());
  }
  return row;
}

}  // namespace

std::vector<ResultRow> run_matrix(const ExperimentConfig& cfg, bool parallel) {
  auto cells = enumerate_cells(cfg);
  std::vector<ResultRow> rows(cells.size());

  // One open store per (profile, codec) pair. A store that fails to open
  // error-tags its cells; the rest of the matrix still runs.
  std::map<std::string, ChunkStore> stores;
  std::map<std::string, std::string> store_errors;
  for (const auto& profile : cfg.profiles) {
    for (const auto& codec : cfg.codecs) {
      fs::path dir = store_dir_for(cfg.store_root, profile, codec);
      try {
        stores.emplace(dir.string(), ChunkStore::open(dir));
      } catch (const std::exception& e) {
        store_errors.emplace(dir.string(), sanitize_error(e.what()));
      }
    }
  }
  auto eval_cell = [&](std::size_t i) {
    const Cell& cell = cells[i];
    std::string dir = store_dir_for(cfg.store_root, *cell.profile, *cell.codec).string();
    auto it = stores.find(dir);
    if (it != stores.end()) {
      rows[i] = run_cell(cfg, cell, it->second);
    } else {
      ResultRow& row = rows[i];
      row.profile = cell.profile->name;
      row.context_tokens = cell.context;
      row.chunk_size = cfg.chunk_size;
      row.trace_name = *cell.trace_name;
      row.power = cell.power;
      row.codec_id = cell.codec->id();
      row.mode = cell.mode;
      row.clock = cfg.clock;
      row.seed = cfg.seed;
      row.ok = false;
      row.error = store_errors.at(dir);
    }
  };

  if (!parallel || cfg.clock == ClockMode::live || cells.size() < 2) {
    // Live runs stay sequential for timing fidelity.
    for (std::size_t i = 0; i < cells.size(); ++i) eval_cell(i);
    return rows;
  }
  unsigned workers = std::min<unsigned>(std::thread::hardware_concurrency(),
                                        static_cast<unsigned>(cells.size()));
  workers = std::max(workers, 1u);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        eval_cell(i);
      }
    });
  }
  for (auto& t : pool) t.join();
  return rows;
}

void write_results_csv(std::span<const ResultRow> rows, std::ostream& out) {
  out << kResultsCsvVersion << '\n';
  out << "profile,context_tokens,chunk_size,trace,power,codec,mode,clock,seed,status,"
         "ttft_us,merge_point,computed_fraction,compute_busy_us,io_busy_us,error\n";
  for (const auto& row : rows) {
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%.6f", row.report.computed_fraction);
    out << row.profile << ',' << row.context_tokens << ',' << row.chunk_size << ','
        << row.trace_name << ',' << format_power(row.power) << ',' << row.codec_id << ','
        << to_string(row.mode) << ',' << to_string(row.clock) << ',' << row.seed << ','
        << (row.ok ? "ok" : "error") << ',';
    if (row.ok) {
      out << row.report.ttft_us << ',' << row.report.merge_point << ',' << frac << ','
          << row.report.compute_busy_us << ',' << row.report.io_busy_us << ',';
    } else {
      out << ",,,,," << row.error;
    }
    out << '\n';
  }
}

int cmd_populate(const ExperimentConfig& cfg, std::ostream& log) {
  std::uint64_t total_bytes = 0;
  std::uint64_t total_chunks = 0;
  for (const auto& profile : cfg.profiles) {
    for (const auto& codec : cfg.codecs) {
      fs::path dir = store_dir_for(cfg.store_root, profile, codec);
      ChunkStore store = ChunkStore::open_or_create(dir);
      for (auto context : cfg.context_lengths) {
        RequestSpec request{context, cfg.chunk_size, 1, 1.0};
        try {
          auto result = populate(store, request, profile, codec, cfg.seed, cfg.payload_kind);
          total_bytes += result.bytes_written;
          total_chunks += result.chunks_written;
        } catch (const std::exception& e) {
          log << "populate failed for " << profile.name << "/" << codec.id() << " at " << context
              << " tokens after " << total_chunks << " chunks, " << total_bytes
              << " bytes: " << e.what() << '\n';
          return 1;
        }
      }
      log << "store " << dir.string() << ": " << store.entry_count() << " chunks\n";
    }
  }
  log << "populate wrote " << total_chunks << " chunks, " << total_bytes << " bytes total"
      << (cfg.payload_kind == PayloadKind::sparse ? " (sparse)" : "") << '\n';
  return 0;
}

int cmd_bench(const ExperimentConfig& cfg, const fs::path& out_csv, bool verbose, bool parallel,
              std::ostream& log) {
  auto rows = run_matrix(cfg, parallel);
  {
    std::ofstream out(out_csv, std::ios::binary);
    if (!out) {
      log << "bench: cannot write " << out_csv.string() << '\n';
      return 1;
    }
    write_results_csv(rows, out);
  }
  int failures = 0;
  for (const auto& row : rows)
    if (!row.ok) ++failures;
  if (verbose) {
    fs::path events_dir = out_csv;
    events_dir += "_events";
    fs::create_directories(events_dir);
    for (const auto& row : rows) {
      if (!row.ok) continue;
      std::string name = row.profile + "_" + std::to_string(row.context_tokens) + "_" +
                         row.trace_name + "_p" + format_power(row.power) + "_" + row.codec_id +
                         "_" + to_string(row.mode) + ".csv";
      std::replace(name.begin(), name.end(), ':', '_');
      std::ofstream out(events_dir / name, std::ios::binary);
      out << "# " << summary_line(row.report) << '\n';
      write_event_csv(row.report, out);
    }
    log << "event logs under " << events_dir.string() << '\n';
  }
  log << "bench: " << rows.size() << " rows, " << failures << " failed -> " << out_csv.string()
      << '\n';
  return failures == 0 ? 0 : 1;
}

int cmd_oracle(const ExperimentConfig& cfg, std::ostream& out) {
  if (cfg.clock != ClockMode::sim) {
    out << "oracle: requires sim clock\n";
    return 1;
  }
  int violations = 0;
  std::map<std::string, ChunkStore> stores;
  for (const auto& profile : cfg.profiles) {
    for (const auto& codec : cfg.codecs) {
      fs::path dir = store_dir_for(cfg.store_root, profile, codec);
      ChunkStore store = ChunkStore::open(dir);
      for (auto context : cfg.context_lengths) {
        for (const auto& [tname, trace] : cfg.traces) {
          for (double power : cfg.power_fractions) {
            RequestSpec request{context, cfg.chunk_size, 1, power};
            RunPlan plan = plan_run(request, profile, codec, store, cfg.seed);
            RunReport report = run(request, profile, cfg.cost_model, trace, codec, RunMode::cake,
                                   ClockMode::sim, store, cfg.seed, cfg.run_options());
            auto compute_us = per_chunk_compute_us(cfg.cost_model, plan.chunks, power);
            if (!trace.is_constant()) {
              out << profile.name << " ctx=" << context << " trace=" << tname << " power="
                  << format_power(power) << " codec=" << codec.id() << " ttft=" << report.ttft_us
                  << "us (dynamic trace: informational only)\n";
              continue;
            }
            auto fetch_us = per_chunk_fetch_us(trace, plan.encoded_bytes, plan.uncompressed_bytes,
                                               cfg.decode_us_per_byte);
            SplitChoice best = oracle_best_split(compute_us, fetch_us);
            // One-chunk greediness slack: the compute cost of the last
            // computed chunk at the merge boundary, or one fetch, whichever
            // is larger.
            Micros boundary_compute =
                report.merge_point >= 1 ? compute_us[report.merge_point - 1] : 0;
            Micros slack =
                std::max(boundary_compute, *std::max_element(fetch_us.begin(), fetch_us.end()));
            Micros delta = report.ttft_us - best.ttft_star;
            bool ok = report.ttft_us <= best.ttft_star + slack;
            out << profile.name << " ctx=" << context << " trace=" << tname << " power="
                << format_power(power) << " codec=" << codec.id() << " ttft=" << report.ttft_us
                << "us oracle=" << best.ttft_star << "us (k*=" << best.k_star
                << ") delta=" << delta << "us slack=" << slack << "us "
                << (ok ? "OK" : "VIOLATION") << '\n';
            if (!ok) ++violations;
          }
        }
      }
    }
  }
  out << "oracle: " << violations << " violations\n";
  return violations == 0 ? 0 : 1;
}

OverheadStats measure_overhead(std::uint32_t n_chunks, std::uint32_t rounds) {
  std::vector<ChunkKey> keys(n_chunks);
  std::uint32_t token = 7;
  std::optional<ChunkKey> prev;
  for (std::uint32_t i = 0; i < n_chunks; ++i) {
    keys[i] = chain_hash(prev, std::span<const std::uint32_t>(&token, 1));
    prev = keys[i];
  }
  std::vector<std::int64_t> samples;
  samples.reserve(static_cast<std::size_t>(n_chunks) * rounds / 2);
  for (std::uint32_t r = 0; r < rounds; ++r) {
    ClaimTable table(n_chunks);
    ResidentSet resident;
    // Half the keys resident, as in a mid-run state.
    for (std::uint32_t i = n_chunks / 2; i < n_chunks; ++i) resident.mark_resident(keys[i], 0);
    for (std::uint32_t i = 0; i < n_chunks / 2; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      bool res = resident.is_resident(keys[i]);
      bool won = table.claim(Side::compute, i, 0);
      auto t1 = std::chrono::steady_clock::now();
      if (res || !won) throw std::logic_error("overhead: unexpected scheduler state");
      samples.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
    }
  }
  std::sort(samples.begin(), samples.end());
  OverheadStats stats;
  stats.samples = samples.size();
  stats.p50_ns = samples[samples.size() / 2];
  stats.p99_ns = samples[static_cast<std::size_t>(samples.size() * 0.99)];
  stats.max_ns = samples.back();
  return stats;
}

int cmd_overhead(std::ostream& out) {
  OverheadStats stats = measure_overhead(4096, 16);
  char line[160];
  std::snprintf(line, sizeof(line),
                "per-chunk claim+residency decision over %llu samples: p50=%.3fus p99=%.3fus max=%.3fus\n",
                static_cast<unsigned long long>(stats.samples), stats.p50_ns / 1000.0,
                stats.p99_ns / 1000.0, stats.max_ns / 1000.0);
  out << line;
  bool ok = stats.p99_ns < 100'000;
  out << (ok ? "overhead: OK (p99 < 100us)\n" : "overhead: FAIL (p99 >= 100us)\n");
  return ok ? 0 : 1;
}

}  // namespace cake
