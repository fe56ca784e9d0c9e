#pragma once

// Id-addressed matrix of float32 embeddings and its on-disk format.
//
// File layout (all integers little-endian):
//   "CLNK" | version u32 | dim u32 | count u64
//   | provider_tag (u32 byte length + UTF-8)
//   | count ids (u32 byte length + UTF-8 each)
//   | count*dim float32 payload | CRC-32 of the payload (u32)

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <zlib.h>

#include "error.hpp"
#include "records.hpp"

namespace claimlink {

inline constexpr char kStoreMagic[4] = {'C', 'L', 'N', 'K'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr double kUnitNormTolerance = 1e-4;

// Accumulates in double over float32 inputs, index order.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

inline double l2_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

inline double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ValidationError("cosine: dimension mismatch " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine: zero-norm vector");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

// In place. Throws on a zero or non-finite vector.
inline void normalize(std::span<float> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("cannot normalize zero or non-finite vector");
  for (auto& x : v) x = static_cast<float>(static_cast<double>(x) / n);
}

class EmbeddingStore {
public:
  EmbeddingStore() = default;
  EmbeddingStore(std::uint32_t dim, std::string provider_tag)
      : dim_(dim), provider_tag_(std::move(provider_tag)) {}

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::string& provider_tag() const { return provider_tag_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> matrix() const { return matrix_; }

  // True when every row is unit-norm (vacuously true for an empty store).
  bool normalized() const { return normalized_; }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(matrix_).subspan(i * dim_, dim_);
  }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view id) const { return find(id).has_value(); }

  std::span<const float> row(std::string_view id) const {
    auto i = find(id);
    if (!i) throw ValidationError("id '" + std::string(id) + "' not in store");
    return row(*i);
  }

  // Appends one row. With `normalize_row` the row is L2-normalized first.
  void add(std::string id, std::span<const float> values, bool normalize_row = true) {
    if (values.size() != dim_) {
      throw ValidationError("row '" + id + "' has dim " + std::to_string(values.size()) +
                            ", store dim is " + std::to_string(dim_));
    }
    if (index_.count(id)) throw ValidationError("duplicate id '" + id + "' in store");
    const std::size_t offset = matrix_.size();
    matrix_.insert(matrix_.end(), values.begin(), values.end());
    auto r = std::span<float>(matrix_).subspan(offset, dim_);
    if (normalize_row) normalize(r);
    if (std::abs(l2_norm(r) - 1.0) > kUnitNormTolerance) normalized_ = false;
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
  }

  void set_provider_tag(std::string tag) { provider_tag_ = std::move(tag); }

private:
  std::uint32_t dim_ = 0;
  std::string provider_tag_;
  std::vector<std::string> ids_;
  std::vector<float> matrix_;
  std::unordered_map<std::string, std::size_t> index_;
  bool normalized_ = true;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_string(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class ByteReader {
public:
  ByteReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  std::string_view take(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw FormatError(source_ + ": truncated " + what + ": expected " + std::to_string(n) +
                        " bytes, found " + std::to_string(remaining()));
    }
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32(const char* what) {
    auto b = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }

  std::uint64_t u64(const char* what) {
    auto b = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }

  std::string str(const char* what) {
    const auto n = u32(what);
    return std::string(take(n, what));
  }

private:
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), n);
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::string encode_store(const EmbeddingStore& store) {
  std::string out(kStoreMagic, 4);
  detail::put_u32(out, kStoreVersion);
  detail::put_u32(out, store.dim());
  detail::put_u64(out, store.size());
  detail::put_string(out, store.provider_tag());
  for (const auto& id : store.ids()) detail::put_string(out, id);
  const std::size_t payload_start = out.size();
  out.reserve(out.size() + store.matrix().size() * 4 + 4);
  for (float f : store.matrix()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  const auto crc = detail::crc32_of(std::string_view(out).substr(payload_start));
  detail::put_u32(out, crc);
  return out;
}

inline EmbeddingStore decode_store(std::string_view bytes, const std::string& source = "store") {
  detail::ByteReader r(bytes, source);
  if (r.take(4, "magic") != std::string_view(kStoreMagic, 4)) {
    throw FormatError(source + ": bad magic, not a CLNK store");
  }
  const auto version = r.u32("version");
  if (version != kStoreVersion) {
    throw FormatError(source + ": unsupported store version " + std::to_string(version));
  }
  const auto dim = r.u32("dim");
  const auto count = r.u64("count");
  EmbeddingStore store(dim, r.str("provider tag"));
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, r.remaining())));
  for (std::uint64_t i = 0; i < count; ++i) ids.push_back(r.str("id block"));

  if (dim != 0 && count > r.remaining() / 4 / dim) {
    throw FormatError(source + ": truncated payload: header declares " + std::to_string(count) + " x " +
                      std::to_string(dim) + " floats, expected " + std::to_string(count * dim * 4 + 4) +
                      " bytes (payload + CRC), found " + std::to_string(r.remaining()));
  }
  const std::uint64_t payload_bytes = count * dim * 4;
  if (r.remaining() != payload_bytes + 4) {
    throw FormatError(source + ": payload size mismatch: header declares " + std::to_string(count) +
                      " x " + std::to_string(dim) + " floats, expected " +
                      std::to_string(payload_bytes + 4) + " bytes (payload + CRC), found " +
                      std::to_string(r.remaining()));
  }
  const auto payload = r.take(static_cast<std::size_t>(payload_bytes), "payload");
  const auto stored_crc = r.u32("checksum");
  if (detail::crc32_of(payload) != stored_crc) throw FormatError(source + ": payload checksum mismatch");

  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    for (std::uint32_t d = 0; d < dim; ++d) {
      const auto off = static_cast<std::size_t>((i * dim + d) * 4);
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(payload[off + static_cast<std::size_t>(b)]);
      row[d] = std::bit_cast<float>(bits);
    }
    store.add(std::move(ids[static_cast<std::size_t>(i)]), row, /*normalize_row=*/false);
  }
  return store;
}

inline void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file(path, encode_store(store));
}

inline EmbeddingStore load_store(const std::filesystem::path& path) {
  return decode_store(read_file(path), path.string());
}

}  // namespace claimlink
