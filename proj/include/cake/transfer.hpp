#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <unordered_map>
#include <vector>

#include "cake/claim.hpp"
#include "cake/codec.hpp"
#include "cake/model.hpp"
#include "cake/report.hpp"
#include "cake/store.hpp"

namespace cake {

// Wall-clock microsecond frame for one run; request arrival is t=0.
class RunTimer {
 public:
  RunTimer() : epoch_(std::chrono::steady_clock::now()) {}

  Micros now_us() const {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() -
                                                                 epoch_)
        .count();
  }

  void sleep_until_us(Micros t) const {
    std::this_thread::sleep_until(epoch_ + std::chrono::microseconds(t));
  }

  // Two-phase deadline wait: coarse sleep, then a short spin. OS wakeups
  // overshoot by ~0.5 ms or more in virtualized environments, which is the
  // same magnitude as the throttle's slice spacing at high rates. The spin
  // stays in userspace; yielding would hand the core back to a scheduler
  // whose wakeup latency is the problem being worked around.
  void sleep_until_us_precise(Micros t) const {
    constexpr Micros kSpinWindow = 2000;
    if (t - now_us() > kSpinWindow) sleep_until_us(t - kSpinWindow);
    while (now_us() < t) {
#if defined(__x86_64__) || defined(__i386__)
      __builtin_ia32_pause();
#endif
    }
  }

  void sleep_for_us(Micros d) const {
    if (d > 0) std::this_thread::sleep_for(std::chrono::microseconds(d));
  }

 private:
  std::chrono::steady_clock::time_point epoch_;
};

struct FetchTask {
  ChunkKey key;
  ChunkSpec chunk;
  std::uint64_t encoded_bytes = 0;
};

// Heap buffer without value-initialization: preallocating a whole queue of
// chunk buffers must not cost a zero-fill pass over gigabytes.
struct OwnedBytes {
  std::unique_ptr<std::byte[]> data;
  std::size_t size = 0;

  static OwnedBytes uninitialized(std::size_t n) {
    return {std::make_unique_for_overwrite<std::byte[]>(n), n};
  }
  static OwnedBytes copy_of(std::span<const std::byte> src) {
    OwnedBytes out = uninitialized(src.size());
    std::memcpy(out.data.get(), src.data(), src.size());
    return out;
  }
  std::span<const std::byte> view() const { return {data.get(), size}; }
  std::span<std::byte> mutable_view() { return {data.get(), size}; }
};

// Chunks a fetched payload has fully landed for. Keys only ever go
// absent -> resident; the mutex hands the payload write a happens-before
// edge to any thread that observes residency.
class ResidentSet {
 public:
  void mark_resident(const ChunkKey& key, Micros at_us);
  bool is_resident(const ChunkKey& key) const;
  std::optional<Micros> resident_since(const ChunkKey& key) const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<ChunkKey, Micros, ChunkKeyHash> done_;
};

struct SliceEvent {
  Micros at_us = 0;
  std::uint64_t cumulative_bits = 0;
};

struct TransferOptions {
  std::uint64_t throttle_quantum_bytes = 1 << 20;
  // How far (within one chunk) the disk reader may run ahead of the paced
  // releases; absorbs storage stalls without disturbing the trace schedule.
  std::uint64_t read_ahead_bytes = 8ull << 20;
  std::uint32_t jitter_max_us = 0;  // test instrumentation: random delay before claims
  std::uint64_t jitter_seed = 0;
  bool record_slices = false;
};

// The reverse-order fetch side. Tasks arrive back-to-front via push_seq,
// which preallocates and faults in their buffers so arriving bytes never
// wait on memory. Two workers run per engine:
//   reader — claims each chunk right before fetching it, then streams the
//            payload from the store into the buffer, up to read_ahead_bytes
//            in front of the releases;
//   pacer  — releases the buffered bytes in throttle-quantum slices exactly
//            on the bandwidth-trace schedule, and publishes residency when
//            a chunk's last slice lands.
// A failed claim means the compute side owns everything below, so the
// engine stops. stop() lets the in-flight chunk finish and abandons the
// rest of the queue.
class TransferEngine {
 public:
  TransferEngine(const ChunkStore& store, const BandwidthTrace& trace, const Codec& codec,
                 ClaimTable* table, const RunTimer& timer, TransferOptions options = {});
  ~TransferEngine();

  TransferEngine(const TransferEngine&) = delete;
  TransferEngine& operator=(const TransferEngine&) = delete;

  // Tasks must be ordered back-to-front (highest chunk index first).
  void push_seq(std::vector<FetchTask> tasks);

  bool is_resident(const ChunkKey& key) const { return resident_.is_resident(key); }
  const ResidentSet& resident_set() const { return resident_; }

  void stop();

  // Joins the workers; rethrows any error they hit (store faults abort the run).
  void wait();

  // Decoded payload of a resident chunk; empty span if not resident.
  std::span<const std::byte> resident_payload(const ChunkKey& key) const;

  // Valid after wait().
  const std::vector<ChunkRecord>& records() const { return records_; }
  const std::vector<SliceEvent>& slices() const { return slices_; }

 private:
  struct Pending {
    FetchTask task;
    OwnedBytes buffer;  // preallocated and faulted in at push_seq time
  };

  // The single chunk currently in flight between reader and pacer.
  struct ActiveChunk {
    FetchTask task;
    OwnedBytes buffer;
    Micros claimed_at_us = 0;
    std::uint64_t read_bytes = 0;      // reader writes, pacer reads (under mu_)
    std::uint64_t released_bytes = 0;  // pacer writes, reader reads (under mu_)
  };

  void reader_loop();
  void pacer_loop();

  const ChunkStore& store_;
  BandwidthTrace trace_;
  Codec codec_;
  ClaimTable* table_;
  const RunTimer& timer_;
  TransferOptions options_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Pending> queue_;
  std::shared_ptr<ActiveChunk> active_;
  bool stopped_ = false;
  bool pushed_ = false;
  bool reader_done_ = false;
  std::uint64_t consumed_bits_ = 0;

  ResidentSet resident_;
  std::unordered_map<ChunkKey, OwnedBytes, ChunkKeyHash> payloads_;
  std::vector<ChunkRecord> records_;
  std::vector<SliceEvent> slices_;
  std::exception_ptr error_;
  std::thread reader_;
  std::thread pacer_;
};

}  // namespace cake
