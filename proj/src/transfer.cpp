#include "cake/transfer.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace cake {

void ResidentSet::mark_resident(const ChunkKey& key, Micros at_us) {
  std::lock_guard lock(mu_);
  done_.emplace(key, at_us);  // first completion wins; keys never leave
}

bool ResidentSet::is_resident(const ChunkKey& key) const {
  std::lock_guard lock(mu_);
  return done_.count(key) > 0;
}

std::optional<Micros> ResidentSet::resident_since(const ChunkKey& key) const {
  std::lock_guard lock(mu_);
  auto it = done_.find(key);
  if (it == done_.end()) return std::nullopt;
  return it->second;
}

TransferEngine::TransferEngine(const ChunkStore& store, const BandwidthTrace& trace,
                               const Codec& codec, ClaimTable* table, const RunTimer& timer,
                               TransferOptions options)
    : store_(store), trace_(trace), codec_(codec), table_(table), timer_(timer), options_(options) {
  auto guarded = [this](void (TransferEngine::*loop)()) {
    return [this, loop] {
      try {
        (this->*loop)();
      } catch (...) {
        std::lock_guard lock(mu_);
        if (!error_) error_ = std::current_exception();
        stopped_ = true;
        reader_done_ = true;
        queue_.clear();
        cv_.notify_all();
      }
    };
  };
  reader_ = std::thread(guarded(&TransferEngine::reader_loop));
  pacer_ = std::thread(guarded(&TransferEngine::pacer_loop));
}

TransferEngine::~TransferEngine() {
  stop();
  if (reader_.joinable()) reader_.join();
  if (pacer_.joinable()) pacer_.join();
}

void TransferEngine::push_seq(std::vector<FetchTask> tasks) {
  for (std::size_t i = 1; i < tasks.size(); ++i) {
    if (tasks[i].chunk.index >= tasks[i - 1].chunk.index)
      throw std::logic_error("push_seq: tasks must arrive back-to-front");
  }
  std::deque<Pending> staged;
  for (auto& t : tasks) {
    if (t.encoded_bytes == 0) throw std::invalid_argument("push_seq: encoded_bytes must be > 0");
    Pending p;
    p.task = std::move(t);
    // Eager preallocation; bad_alloc fails the call here, not mid-run.
    // Faulting the pages in now is the point of preallocating: the reader
    // must be able to land arriving bytes without stalling on the VM.
    p.buffer = OwnedBytes::uninitialized(static_cast<std::size_t>(p.task.encoded_bytes));
    auto view = p.buffer.mutable_view();
    for (std::size_t page = 0; page < view.size(); page += 4096) view[page] = std::byte{0};
    staged.push_back(std::move(p));
  }
  {
    std::lock_guard lock(mu_);
    if (stopped_) throw std::logic_error("push_seq: engine already stopped");
    for (auto& p : staged) queue_.push_back(std::move(p));
    pushed_ = true;
  }
  cv_.notify_all();
}

void TransferEngine::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopped_) return;
    stopped_ = true;
    queue_.clear();  // abandon pending tasks, release their buffers
  }
  cv_.notify_all();
}

void TransferEngine::wait() {
  if (reader_.joinable()) reader_.join();
  if (pacer_.joinable()) pacer_.join();
  if (error_) {
    auto e = error_;
    error_ = nullptr;
    std::rethrow_exception(e);
  }
}

std::span<const std::byte> TransferEngine::resident_payload(const ChunkKey& key) const {
  if (!resident_.is_resident(key)) return {};
  std::lock_guard lock(mu_);
  auto it = payloads_.find(key);
  if (it == payloads_.end()) return {};
  return it->second.view();
}

void TransferEngine::reader_loop() {
  std::mt19937_64 jitter_rng(options_.jitter_seed ^ 0xD1B54A32D192ED03ULL);
  const std::uint64_t quantum = std::max<std::uint64_t>(options_.throttle_quantum_bytes, 1);
  const std::uint64_t ring = std::max<std::uint64_t>(options_.read_ahead_bytes, quantum);
  for (;;) {
    Pending pending;
    {
      std::unique_lock lock(mu_);
      // One chunk in flight at a time: the next claim waits until the pacer
      // has fully released the previous chunk.
      cv_.wait(lock, [this] { return stopped_ || (pushed_ && !active_); });
      if (stopped_ || queue_.empty()) {
        reader_done_ = true;
        cv_.notify_all();
        return;
      }
      pending = std::move(queue_.front());
      queue_.pop_front();
    }
    if (options_.jitter_max_us > 0)
      timer_.sleep_for_us(static_cast<Micros>(jitter_rng() % (options_.jitter_max_us + 1)));
    Micros claim_at = timer_.now_us();
    if (table_ && !table_->claim(Side::io, pending.task.chunk.index, claim_at)) {
      // Compute owns this chunk and everything below it.
      stop();
      std::lock_guard lock(mu_);
      reader_done_ = true;
      cv_.notify_all();
      return;
    }
    auto chunk = std::make_shared<ActiveChunk>();
    chunk->task = std::move(pending.task);
    chunk->buffer = std::move(pending.buffer);
    chunk->claimed_at_us = timer_.now_us();
    {
      std::lock_guard lock(mu_);
      active_ = chunk;
    }
    cv_.notify_all();

    auto reader = store_.open_reader(chunk->task.key);
    auto dest = chunk->buffer.mutable_view();
    std::uint64_t offset = 0;
    while (offset < chunk->task.encoded_bytes) {
      std::uint64_t slice = std::min(quantum, chunk->task.encoded_bytes - offset);
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return offset + slice - chunk->released_bytes <= ring || error_; });
        if (error_) return;
      }
      std::size_t got = reader.read(
          dest.subspan(static_cast<std::size_t>(offset), static_cast<std::size_t>(slice)));
      if (got != slice)
        throw CorruptChunkError("transfer: short read for chunk " +
                                std::to_string(chunk->task.chunk.index));
      offset += slice;
      {
        std::lock_guard lock(mu_);
        chunk->read_bytes = offset;
      }
      cv_.notify_all();
    }
  }
}

void TransferEngine::pacer_loop() {
  const std::uint64_t quantum = std::max<std::uint64_t>(options_.throttle_quantum_bytes, 1);
  Micros budget_from = 0;  // trace time up to which release budget is spent
  for (;;) {
    std::shared_ptr<ActiveChunk> chunk;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return active_ || error_ || (reader_done_ && !active_); });
      if (error_ || !active_) return;
      chunk = active_;
    }
    std::uint64_t offset = 0;
    while (offset < chunk->task.encoded_bytes) {
      std::uint64_t slice = std::min(quantum, chunk->task.encoded_bytes - offset);
      // Zero-burst pacing: every slice is released exactly when the trace
      // has granted its bits beyond the budget already spent.
      Micros gate = budget_from + time_to_transfer_bits(trace_, slice * 8, budget_from);
      timer_.sleep_until_us_precise(gate);
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return chunk->read_bytes >= offset + slice || error_; });
        if (error_) return;
        consumed_bits_ += slice * 8;
        if (options_.record_slices) slices_.push_back({timer_.now_us(), consumed_bits_});
        chunk->released_bytes = offset + slice;
      }
      cv_.notify_all();
      offset += slice;
      budget_from = gate;
      // Bank at most one quantum of unspent budget while running behind
      // (the ring ran dry), so a storage stall is never repaid as a burst.
      Micros now = timer_.now_us();
      Micros quantum_span = time_to_transfer_bits(trace_, quantum * 8, budget_from);
      if (budget_from + quantum_span < now) budget_from = now - quantum_span;
    }
    OwnedBytes payload;
    if (codec_.kind == Codec::Kind::identity) {
      payload = std::move(chunk->buffer);
    } else {
      auto meta = store_.meta_of(chunk->task.key);
      payload = OwnedBytes::copy_of(codec_decode(codec_, chunk->buffer.view(),
                                                 meta->uncompressed_bytes));
    }
    Micros finish = timer_.now_us();
    {
      std::lock_guard lock(mu_);
      payloads_[chunk->task.key] = std::move(payload);
      records_.push_back({chunk->task.chunk.index, Side::io, chunk->claimed_at_us, finish,
                          chunk->task.encoded_bytes});
      active_.reset();
    }
    resident_.mark_resident(chunk->task.key, finish);
    cv_.notify_all();
  }
}

}  // namespace cake
