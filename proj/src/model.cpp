#include "cake/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cake {

void ModelProfile::validate() const {
  if (n_layers < 1) throw std::invalid_argument("profile '" + name + "': n_layers must be >= 1");
  if (hidden_size < 1) throw std::invalid_argument("profile '" + name + "': hidden_size must be >= 1");
  if (precision_bytes != 1 && precision_bytes != 2 && precision_bytes != 4)
    throw std::invalid_argument("profile '" + name + "': precision_bytes must be 1, 2 or 4");
  if (kv_multiplier < 1) throw std::invalid_argument("profile '" + name + "': kv_multiplier must be >= 1");
  if (per_token_bytes_override && *per_token_bytes_override == 0)
    throw std::invalid_argument("profile '" + name + "': per_token_bytes_override must be positive");
}

void RequestSpec::validate() const {
  if (total_tokens < 1) throw std::invalid_argument("request: total_tokens must be >= 1");
  if (chunk_size < 1 || chunk_size > total_tokens)
    throw std::invalid_argument("request: chunk_size must be in [1, total_tokens]");
  if (batch_size < 1) throw std::invalid_argument("request: batch_size must be >= 1");
  if (!(power_fraction > 0.0) || power_fraction > 1.0)
    throw std::invalid_argument("request: power_fraction must be in (0, 1]");
}

void CostModel::validate() const {
  if (alpha_ms < 0.0) throw std::invalid_argument("cost model: alpha_ms must be >= 0");
  if (beta_ms_per_token < 0.0) throw std::invalid_argument("cost model: beta_ms_per_token must be >= 0");
  if (reference_chunk_size < 1) throw std::invalid_argument("cost model: reference_chunk_size must be >= 1");
}

BandwidthTrace::BandwidthTrace(std::vector<Breakpoint> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("trace: needs at least one breakpoint");
  if (points_.front().at_us != 0) throw std::invalid_argument("trace: first breakpoint must be at t=0");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!(points_[i].mbps > 0.0)) throw std::invalid_argument("trace: all rates must be positive");
    if (i > 0 && points_[i].at_us <= points_[i - 1].at_us)
      throw std::invalid_argument("trace: breakpoint times must be strictly increasing");
  }
}

BandwidthTrace BandwidthTrace::constant(double mbps) {
  return BandwidthTrace({{0, mbps}});
}

double BandwidthTrace::mbps_at(Micros t) const {
  double rate = points_.front().mbps;
  for (const auto& p : points_) {
    if (p.at_us > t) break;
    rate = p.mbps;
  }
  return rate;
}

BandwidthTrace BandwidthTrace::scaled(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("trace: scale factor must be positive");
  std::vector<Breakpoint> pts = points_;
  for (auto& p : pts) p.mbps *= factor;
  return BandwidthTrace(std::move(pts));
}

std::uint64_t kv_bytes_per_token(const ModelProfile& profile) {
  profile.validate();
  if (profile.per_token_bytes_override) return *profile.per_token_bytes_override;
  return std::uint64_t{profile.kv_multiplier} * profile.n_layers * profile.hidden_size *
         profile.precision_bytes;
}

std::uint64_t chunk_bytes(const ModelProfile& profile, const ChunkSpec& chunk) {
  return kv_bytes_per_token(profile) * chunk.token_count;
}

std::vector<ChunkSpec> split_into_chunks(std::uint64_t total_tokens, std::uint32_t chunk_size) {
  if (total_tokens < 1) throw std::invalid_argument("split_into_chunks: total_tokens must be >= 1");
  if (chunk_size < 1) throw std::invalid_argument("split_into_chunks: chunk_size must be >= 1");
  std::vector<ChunkSpec> chunks;
  chunks.reserve(static_cast<std::size_t>((total_tokens + chunk_size - 1) / chunk_size));
  std::uint64_t start = 0;
  std::uint32_t index = 0;
  while (start < total_tokens) {
    std::uint64_t count = std::min<std::uint64_t>(chunk_size, total_tokens - start);
    chunks.push_back({index, start, static_cast<std::uint32_t>(count)});
    start += count;
    ++index;
  }
  return chunks;
}

Micros compute_latency(const CostModel& model, const ChunkSpec& chunk, double power_fraction) {
  model.validate();
  if (!(power_fraction > 0.0) || power_fraction > 1.0)
    throw std::invalid_argument("compute_latency: power_fraction must be in (0, 1]");
  double ms = (model.alpha_ms + model.beta_ms_per_token * static_cast<double>(chunk.token_start)) *
              (static_cast<double>(chunk.token_count) / static_cast<double>(model.reference_chunk_size)) /
              power_fraction;
  return ms_to_us(ms);
}

namespace {

bool whole_number(double x) { return x == std::floor(x) && x > 0.0 && x < 9.0e15; }

// Exact path: every rate is a whole number of bits per microsecond.
Micros transfer_exact(const std::vector<BandwidthTrace::Breakpoint>& pts, std::uint64_t bits,
                      Micros start) {
  std::size_t i = pts.size() - 1;
  while (i > 0 && pts[i].at_us > start) --i;
  std::uint64_t rem = bits;
  Micros cursor = start;
  Micros elapsed = 0;
  for (;;) {
    auto rate = static_cast<std::uint64_t>(pts[i].mbps);
    if (i + 1 < pts.size()) {
      Micros seg_end = pts[i + 1].at_us;
      auto len = static_cast<unsigned __int128>(seg_end - cursor);
      unsigned __int128 cap = len * rate;
      if (cap < rem) {
        rem -= static_cast<std::uint64_t>(cap);
        elapsed += seg_end - cursor;
        cursor = seg_end;
        ++i;
        continue;
      }
    }
    return elapsed + static_cast<Micros>((rem + rate - 1) / rate);
  }
}

Micros transfer_real(const std::vector<BandwidthTrace::Breakpoint>& pts, std::uint64_t bits,
                     Micros start) {
  std::size_t i = pts.size() - 1;
  while (i > 0 && pts[i].at_us > start) --i;
  long double rem = static_cast<long double>(bits);
  Micros cursor = start;
  Micros elapsed = 0;
  for (;;) {
    long double rate = pts[i].mbps;
    if (i + 1 < pts.size()) {
      Micros seg_end = pts[i + 1].at_us;
      long double cap = rate * static_cast<long double>(seg_end - cursor);
      if (cap < rem) {
        rem -= cap;
        elapsed += seg_end - cursor;
        cursor = seg_end;
        ++i;
        continue;
      }
    }
    // Sub-microsecond boundary resolved to FP precision; the 1e-7 us guard
    // keeps exact divisions from spilling into the next microsecond.
    long double need = rem / rate;
    auto d = static_cast<Micros>(std::ceil(static_cast<double>(need - 1e-7L)));
    return elapsed + std::max<Micros>(d, 0);
  }
}

}  // namespace

Micros time_to_transfer_bits(const BandwidthTrace& trace, std::uint64_t bits, Micros start_time) {
  if (start_time < 0) throw std::invalid_argument("time_to_transfer_bits: start_time must be >= 0");
  if (bits == 0) return 0;
  const auto& pts = trace.breakpoints();
  bool exact = true;
  for (const auto& p : pts) exact = exact && whole_number(p.mbps);
  return exact ? transfer_exact(pts, bits, start_time) : transfer_real(pts, bits, start_time);
}

Micros fetch_latency(const BandwidthTrace& trace, std::uint64_t nbytes, Micros start_time) {
  return time_to_transfer_bits(trace, nbytes * 8, start_time);
}

}  // namespace cake
