#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cake/codec.hpp"
#include "cake/model.hpp"

namespace cake {

// Content address of a token chunk: SHA-256 over the previous chunk's key
// (32 zero bytes for the first chunk) followed by each token id as a
// little-endian u32. Chaining makes prefix identity checkable without
// touching payloads: requests sharing an n-chunk token prefix share
// exactly their first n keys.
struct ChunkKey {
  std::array<std::uint8_t, 32> digest{};

  std::string hex() const;
  static ChunkKey from_hex(std::string_view hex);

  bool operator==(const ChunkKey&) const = default;
};

struct ChunkKeyHash {
  std::size_t operator()(const ChunkKey& k) const {
    std::size_t h;
    std::memcpy(&h, k.digest.data(), sizeof(h));
    return h;
  }
};

ChunkKey chain_hash(const std::optional<ChunkKey>& prev_key, std::span<const std::uint32_t> tokens);

struct ChunkMeta {
  std::uint32_t token_count = 0;
  std::string codec_id = "identity";
  std::uint64_t encoded_bytes = 0;
  std::uint64_t uncompressed_bytes = 0;
};

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingKeyError : public StoreError {
 public:
  using StoreError::StoreError;
};

class CorruptChunkError : public StoreError {
 public:
  using StoreError::StoreError;
};

// Sequential reader over one chunk file, for slice-paced (throttled) reads.
class ChunkReader {
 public:
  std::size_t read(std::span<std::byte> dest);
  std::uint64_t size() const { return size_; }

 private:
  friend class ChunkStore;
  std::ifstream in_;
  std::uint64_t size_ = 0;
};

// Content-addressed persistent chunk store.
//
// On-disk layout (format "cake-store v1"):
//   <root>/<hh>/<digest>.kv      one file per chunk, hh = first two hex chars
//   <root>/manifest.v1           header line "cake-store v1", then one
//                                tab-separated line per committed chunk:
//                                digest, relative path, token_count,
//                                codec id, encoded bytes, uncompressed bytes
//
// Payload files are written to a temp name and renamed into place before
// their manifest line is appended, so a reopened store only ever sees
// fully committed entries; a torn trailing manifest line is ignored on
// load. Concurrent readers are safe; writers serialize.
class ChunkStore {
 public:
  static ChunkStore create(const std::filesystem::path& root);
  static ChunkStore open(const std::filesystem::path& root);
  static ChunkStore open_or_create(const std::filesystem::path& root);

  ChunkStore(ChunkStore&&) noexcept;
  ChunkStore& operator=(ChunkStore&&) noexcept;
  ~ChunkStore();

  void put(const ChunkKey& key, std::span<const std::byte> payload, const ChunkMeta& meta);

  // Size-true sparse entry (file is a hole, content reads as zeros). Lets
  // desk-scale fixtures carry multi-GiB apparent sizes; the scheduler and
  // cost models only consume sizes.
  void put_sparse(const ChunkKey& key, const ChunkMeta& meta);

  std::vector<std::byte> get(const ChunkKey& key, ChunkMeta* meta_out = nullptr) const;
  ChunkReader open_reader(const ChunkKey& key) const;
  bool contains(const ChunkKey& key) const;
  std::optional<ChunkMeta> meta_of(const ChunkKey& key) const;

  std::size_t entry_count() const;
  const std::filesystem::path& root() const { return root_; }

 private:
  ChunkStore() = default;

  std::filesystem::path chunk_path(const ChunkKey& key) const;
  void append_manifest_line(const ChunkKey& key, const ChunkMeta& meta);
  void load_manifest();

  std::filesystem::path root_;
  std::unique_ptr<std::shared_mutex> mu_;
  std::unordered_map<ChunkKey, ChunkMeta, ChunkKeyHash> entries_;
  std::ofstream manifest_out_;
};

// Deterministic synthetic token ids (vocab-style range [0, 32000)).
std::vector<std::uint32_t> token_stream(std::uint64_t seed, std::uint64_t count);

enum class PayloadKind { random, sparse };

struct PopulateResult {
  std::vector<ChunkKey> keys;
  std::uint64_t bytes_written = 0;
  std::uint64_t chunks_written = 0;
  std::uint64_t chunks_existing = 0;
};

// Splits the seeded token stream into chunks, synthesizes each chunk's
// payload (pseudorandom 16-bit floats in [-1, 1], or a sparse hole of the
// same encoded size), encodes it with the codec and puts it. Returns keys
// in sequence order. Deterministic for a given seed.
PopulateResult populate(ChunkStore& store, const RequestSpec& request, const ModelProfile& profile,
                        const Codec& codec, std::uint64_t seed,
                        PayloadKind kind = PayloadKind::random);

// The pseudorandom fp16 payload for one chunk, before encoding.
std::vector<std::byte> synth_payload(std::uint64_t seed, std::uint32_t chunk_index,
                                     std::uint64_t nbytes);

}  // namespace cake
