#include "cake/store.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <mutex>
#include <random>
#include <sstream>
#include <system_error>

namespace cake {

namespace fs = std::filesystem;

namespace {

constexpr char kManifestName[] = "manifest.v1";
constexpr char kManifestHeader[] = "cake-store v1";

char hex_digit(unsigned v) { return v < 10 ? static_cast<char>('0' + v) : static_cast<char>('a' + v - 10); }

unsigned from_hex_digit(char c) {
  if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
  if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
  if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
  throw std::invalid_argument("bad hex digit");
}

}  // namespace

std::string ChunkKey::hex() const {
  std::string out(64, '0');
  for (std::size_t i = 0; i < digest.size(); ++i) {
    out[2 * i] = hex_digit(digest[i] >> 4);
    out[2 * i + 1] = hex_digit(digest[i] & 0xF);
  }
  return out;
}

ChunkKey ChunkKey::from_hex(std::string_view hex) {
  if (hex.size() != 64) throw std::invalid_argument("chunk key hex must be 64 chars");
  ChunkKey k;
  for (std::size_t i = 0; i < 32; ++i)
    k.digest[i] = static_cast<std::uint8_t>(from_hex_digit(hex[2 * i]) << 4 | from_hex_digit(hex[2 * i + 1]));
  return k;
}

ChunkKey chain_hash(const std::optional<ChunkKey>& prev_key, std::span<const std::uint32_t> tokens) {
  if (tokens.empty()) throw std::invalid_argument("chain_hash: token list must be non-empty");
  std::vector<std::uint8_t> buf(32 + tokens.size() * 4);
  if (prev_key) std::memcpy(buf.data(), prev_key->digest.data(), 32);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::uint32_t t = tokens[i];
    buf[32 + 4 * i + 0] = static_cast<std::uint8_t>(t);
    buf[32 + 4 * i + 1] = static_cast<std::uint8_t>(t >> 8);
    buf[32 + 4 * i + 2] = static_cast<std::uint8_t>(t >> 16);
    buf[32 + 4 * i + 3] = static_cast<std::uint8_t>(t >> 24);
  }
  ChunkKey key;
  unsigned len = 0;
  if (EVP_Digest(buf.data(), buf.size(), key.digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
    throw std::runtime_error("chain_hash: SHA-256 failed");
  return key;
}

ChunkStore::ChunkStore(ChunkStore&&) noexcept = default;
ChunkStore& ChunkStore::operator=(ChunkStore&&) noexcept = default;
ChunkStore::~ChunkStore() = default;

ChunkStore ChunkStore::create(const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw StoreError("store: cannot create root " + root.string() + ": " + ec.message());
  if (fs::exists(root / kManifestName))
    throw StoreError("store: already exists at " + root.string());
  ChunkStore s;
  s.root_ = root;
  s.mu_ = std::make_unique<std::shared_mutex>();
  {
    std::ofstream out(root / kManifestName, std::ios::binary);
    out << kManifestHeader << '\n';
    if (!out) throw StoreError("store: cannot write manifest at " + root.string());
  }
  s.manifest_out_.open(root / kManifestName, std::ios::binary | std::ios::app);
  if (!s.manifest_out_) throw StoreError("store: cannot open manifest for append");
  return s;
}

ChunkStore ChunkStore::open(const fs::path& root) {
  if (!fs::exists(root / kManifestName))
    throw StoreError("store: no manifest at " + root.string());
  ChunkStore s;
  s.root_ = root;
  s.mu_ = std::make_unique<std::shared_mutex>();
  s.load_manifest();
  s.manifest_out_.open(root / kManifestName, std::ios::binary | std::ios::app);
  if (!s.manifest_out_) throw StoreError("store: cannot open manifest for append");
  return s;
}

ChunkStore ChunkStore::open_or_create(const fs::path& root) {
  if (fs::exists(root / kManifestName)) return open(root);
  return create(root);
}

void ChunkStore::load_manifest() {
  std::ifstream in(root_ / kManifestName, std::ios::binary);
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < all.size()) {
    std::size_t nl = all.find('\n', pos);
    if (nl == std::string::npos) break;  // torn trailing line: not committed
    std::string_view line(all.data() + pos, nl - pos);
    pos = nl + 1;
    if (!header_seen) {
      if (line != kManifestHeader)
        throw CorruptChunkError("store: unrecognized manifest header '" + std::string(line) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    std::array<std::string, 6> fields;
    std::size_t f = 0, start = 0;
    for (std::size_t i = 0; i <= line.size() && f < 6; ++i) {
      if (i == line.size() || line[i] == '\t') {
        fields[f++] = std::string(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f != 6) throw CorruptChunkError("store: malformed manifest line");
    ChunkKey key = ChunkKey::from_hex(fields[0]);
    ChunkMeta meta;
    meta.token_count = static_cast<std::uint32_t>(std::stoul(fields[2]));
    meta.codec_id = fields[3];
    meta.encoded_bytes = std::stoull(fields[4]);
    meta.uncompressed_bytes = std::stoull(fields[5]);
    fs::path file = root_ / fields[1];
    std::error_code ec;
    auto size = fs::file_size(file, ec);
    if (ec)
      throw CorruptChunkError("store: manifest entry " + fields[0] + " has no file " + file.string());
    if (size != meta.encoded_bytes)
      throw CorruptChunkError("store: size mismatch for " + fields[0] + ": file " +
                              std::to_string(size) + " vs manifest " +
                              std::to_string(meta.encoded_bytes));
    entries_[key] = std::move(meta);
  }
  if (!header_seen) throw CorruptChunkError("store: empty manifest");
}

fs::path ChunkStore::chunk_path(const ChunkKey& key) const {
  std::string hx = key.hex();
  return root_ / hx.substr(0, 2) / (hx + ".kv");
}

void ChunkStore::append_manifest_line(const ChunkKey& key, const ChunkMeta& meta) {
  std::string hx = key.hex();
  manifest_out_ << hx << '\t' << hx.substr(0, 2) << '/' << hx << ".kv" << '\t' << meta.token_count
                << '\t' << meta.codec_id << '\t' << meta.encoded_bytes << '\t'
                << meta.uncompressed_bytes << '\n';
  manifest_out_.flush();
  if (!manifest_out_) throw StoreError("store: manifest append failed (disk full?)");
}

void ChunkStore::put(const ChunkKey& key, std::span<const std::byte> payload, const ChunkMeta& meta) {
  if (payload.size() != meta.encoded_bytes)
    throw StoreError("store: payload length disagrees with meta");
  std::unique_lock lock(*mu_);
  if (auto it = entries_.find(key); it != entries_.end()) {
    // Idempotent only for identical payloads: content addressing must stay consistent.
    if (it->second.encoded_bytes != payload.size())
      throw StoreError("store: differing payload for existing key " + key.hex());
    std::ifstream in(chunk_path(key), std::ios::binary);
    std::vector<std::byte> existing(payload.size());
    in.read(reinterpret_cast<char*>(existing.data()), static_cast<std::streamsize>(existing.size()));
    if (!in || std::memcmp(existing.data(), payload.data(), payload.size()) != 0)
      throw StoreError("store: differing payload for existing key " + key.hex());
    return;
  }
  fs::path final_path = chunk_path(key);
  std::error_code ec;
  fs::create_directories(final_path.parent_path(), ec);
  if (ec) throw StoreError("store: cannot create fan-out dir: " + ec.message());
  fs::path tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw StoreError("store: write failed for " + key.hex() + " (disk full or permissions?)");
    }
  }
  fs::rename(tmp, final_path, ec);
  if (ec) throw StoreError("store: rename failed: " + ec.message());
  append_manifest_line(key, meta);
  entries_[key] = meta;
}

void ChunkStore::put_sparse(const ChunkKey& key, const ChunkMeta& meta) {
  std::unique_lock lock(*mu_);
  if (auto it = entries_.find(key); it != entries_.end()) {
    if (it->second.encoded_bytes != meta.encoded_bytes)
      throw StoreError("store: differing payload for existing key " + key.hex());
    return;
  }
  fs::path final_path = chunk_path(key);
  std::error_code ec;
  fs::create_directories(final_path.parent_path(), ec);
  if (ec) throw StoreError("store: cannot create fan-out dir: " + ec.message());
  fs::path tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("store: cannot create " + tmp.string());
  }
  fs::resize_file(tmp, meta.encoded_bytes, ec);
  if (ec) throw StoreError("store: resize failed: " + ec.message());
  fs::rename(tmp, final_path, ec);
  if (ec) throw StoreError("store: rename failed: " + ec.message());
  append_manifest_line(key, meta);
  entries_[key] = meta;
}

std::vector<std::byte> ChunkStore::get(const ChunkKey& key, ChunkMeta* meta_out) const {
  std::shared_lock lock(*mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) throw MissingKeyError("store: no entry for key " + key.hex());
  fs::path file = chunk_path(key);
  std::error_code ec;
  auto size = fs::file_size(file, ec);
  if (ec || size != it->second.encoded_bytes)
    throw CorruptChunkError("store: file size disagrees with manifest for " + key.hex());
  std::vector<std::byte> payload(static_cast<std::size_t>(size));
  std::ifstream in(file, std::ios::binary);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!in) throw CorruptChunkError("store: short read for " + key.hex());
  if (meta_out) *meta_out = it->second;
  return payload;
}

std::size_t ChunkReader::read(std::span<std::byte> dest) {
  in_.read(reinterpret_cast<char*>(dest.data()), static_cast<std::streamsize>(dest.size()));
  return static_cast<std::size_t>(in_.gcount());
}

ChunkReader ChunkStore::open_reader(const ChunkKey& key) const {
  std::shared_lock lock(*mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) throw MissingKeyError("store: no entry for key " + key.hex());
  fs::path file = chunk_path(key);
  std::error_code ec;
  auto size = fs::file_size(file, ec);
  if (ec || size != it->second.encoded_bytes)
    throw CorruptChunkError("store: file size disagrees with manifest for " + key.hex());
  ChunkReader reader;
  reader.size_ = size;
  reader.in_.open(file, std::ios::binary);
  if (!reader.in_) throw StoreError("store: cannot open " + file.string());
  return reader;
}

bool ChunkStore::contains(const ChunkKey& key) const {
  std::shared_lock lock(*mu_);
  return entries_.count(key) > 0;
}

std::optional<ChunkMeta> ChunkStore::meta_of(const ChunkKey& key) const {
  std::shared_lock lock(*mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t ChunkStore::entry_count() const {
  std::shared_lock lock(*mu_);
  return entries_.size();
}

std::vector<std::uint32_t> token_stream(std::uint64_t seed, std::uint64_t count) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> tokens(static_cast<std::size_t>(count));
  // Raw-draw modulo keeps the stream identical across standard libraries.
  for (auto& t : tokens) t = static_cast<std::uint32_t>(rng() % 32000);
  return tokens;
}

std::vector<std::byte> synth_payload(std::uint64_t seed, std::uint32_t chunk_index, std::uint64_t nbytes) {
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (chunk_index + 1)));
  std::vector<std::byte> payload(static_cast<std::size_t>(nbytes));
  std::size_t halves = payload.size() / 2;
  auto* out = reinterpret_cast<std::uint16_t*>(payload.data());
  for (std::size_t i = 0; i < halves; ++i) {
    double u = static_cast<double>(rng() >> 11) * (2.0 / 9007199254740992.0) - 1.0;  // [-1, 1)
    out[i] = fp16_from_float(static_cast<float>(u));
  }
  if (payload.size() % 2 != 0) payload.back() = static_cast<std::byte>(rng() & 0xFF);
  return payload;
}

PopulateResult populate(ChunkStore& store, const RequestSpec& request, const ModelProfile& profile,
                        const Codec& codec, std::uint64_t seed, PayloadKind kind) {
  request.validate();
  profile.validate();
  auto tokens = token_stream(seed, request.total_tokens);
  auto chunks = split_into_chunks(request.total_tokens, request.chunk_size);
  PopulateResult result;
  result.keys.reserve(chunks.size());
  std::optional<ChunkKey> prev;
  for (const auto& chunk : chunks) {
    std::span<const std::uint32_t> span(tokens.data() + chunk.token_start, chunk.token_count);
    ChunkKey key = chain_hash(prev, span);
    prev = key;
    result.keys.push_back(key);
    std::uint64_t raw = chunk_bytes(profile, chunk);
    ChunkMeta meta{chunk.token_count, codec.id(), codec.encoded_size(raw), raw};
    if (store.contains(key)) {
      ++result.chunks_existing;
      continue;
    }
    if (kind == PayloadKind::sparse) {
      store.put_sparse(key, meta);
    } else {
      auto payload = synth_payload(seed, chunk.index, raw);
      auto encoded = codec_encode(codec, payload);
      store.put(key, encoded, meta);
    }
    result.bytes_written += meta.encoded_bytes;
    ++result.chunks_written;
  }
  return result;
}

}  // namespace cake
