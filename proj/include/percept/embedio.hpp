//
// Copyright 2026 The Percept Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

// Embedding corpora on disk.
//
// EMB1 layout (all little-endian):
//   bytes 0..3   magic "EMB1"
//   bytes 4..7   u32 dim
//   bytes 8..15  u64 count
//   then count*dim f32 values, row-major.
//
// Pair manifests are JSON:
//   {"attribute": "hat", "base_ref": "base.emb", "variant_ref": "hat.emb",
//    "pair_count": 1427}
// Relative refs resolve against the manifest's directory.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "percept/error.hpp"

namespace percept {

namespace fs = std::filesystem;

namespace detail {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(v >> (8 * i))));
  }
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

inline void put_f32(std::string& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }
inline void put_f64(std::string& out, double f) { put_le(out, std::bit_cast<std::uint64_t>(f)); }
inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_le<std::uint32_t>(p)); }
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }

inline void write_file(const fs::path& dest, const std::string& bytes) {
  std::ofstream out(dest, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + dest.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw DataError("write failed: " + dest.string());
}

inline std::ifstream open_binary(const fs::path& src) {
  std::ifstream in(src, std::ios::binary);
  if (!in) throw DataError("cannot open: " + src.string());
  return in;
}

inline void read_exact(std::ifstream& in, void* dst, std::size_t n, const fs::path& src) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw DataError("short read: " + src.string());
}

}  // namespace detail

// N x D matrix of finite f32 feature vectors for one image set.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  // Throws DataError when dim is zero, the data size is not count*dim, or any
  // value is non-finite.
  EmbeddingSet(std::uint32_t dim, std::uint64_t count, std::vector<float> data,
               std::string source_tag = {})
      : dim_(dim), count_(count), data_(std::move(data)), source_tag_(std::move(source_tag)) {
    if (dim_ == 0) throw DataError("embedding dim must be positive");
    if (count_ > std::numeric_limits<std::size_t>::max() / dim_ ||
        data_.size() != static_cast<std::size_t>(count_) * dim_) {
      throw DataError("data length " + std::to_string(data_.size()) + " != count*dim (" +
                      std::to_string(count_) + "*" + std::to_string(dim_) + ")");
    }
    check_finite();
  }

  static EmbeddingSet from_rows(const std::vector<std::vector<float>>& rows,
                                std::string source_tag = {}) {
    if (rows.empty()) throw DataError("from_rows needs at least one row to fix dim");
    const std::size_t dim = rows.front().size();
    std::vector<float> data;
    data.reserve(rows.size() * dim);
    for (const auto& r : rows) {
      if (r.size() != dim) throw DataError("ragged rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return EmbeddingSet(static_cast<std::uint32_t>(dim), rows.size(), std::move(data),
                        std::move(source_tag));
  }

  std::uint32_t dim() const { return dim_; }
  std::uint64_t count() const { return count_; }
  std::size_t rows() const { return static_cast<std::size_t>(count_); }
  std::span<const float> data() const { return data_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }
  const std::string& source_tag() const { return source_tag_; }
  void set_source_tag(std::string tag) { source_tag_ = std::move(tag); }

  // New set holding the given rows, in the given order.
  EmbeddingSet select(std::span<const std::size_t> indices) const {
    std::vector<float> out;
    out.reserve(indices.size() * dim_);
    for (std::size_t i : indices) {
      if (i >= rows()) throw DataError("row index out of range");
      auto r = row(i);
      out.insert(out.end(), r.begin(), r.end());
    }
    EmbeddingSet s;
    s.dim_ = dim_;
    s.count_ = indices.size();
    s.data_ = std::move(out);
    s.source_tag_ = source_tag_;
    return s;
  }

  // Bitwise equality on (dim, count, data); the tag is metadata.
  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
    return a.dim_ == b.dim_ && a.count_ == b.count_ &&
           (a.data_.empty() ||
            std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0);
  }

 private:
  void check_finite() const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        throw DataError("non-finite value at row " + std::to_string(i / dim_) + ", col " +
                        std::to_string(i % dim_));
      }
    }
  }

  std::uint32_t dim_ = 1;
  std::uint64_t count_ = 0;
  std::vector<float> data_;
  std::string source_tag_;
};

inline constexpr std::array<char, 4> kEmbMagic{'E', 'M', 'B', '1'};
inline constexpr std::size_t kEmbHeaderBytes = 16;

struct EmbeddingHeader {
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
};

inline void write_embeddings(const EmbeddingSet& set, const fs::path& destination) {
  for (std::size_t i = 0; i < set.data().size(); ++i) {
    if (!std::isfinite(set.data()[i])) {
      throw DataError("non-finite value at row " + std::to_string(i / set.dim()) + ", col " +
                      std::to_string(i % set.dim()));
    }
  }
  std::string bytes;
  bytes.reserve(kEmbHeaderBytes + set.data().size() * 4);
  bytes.append(kEmbMagic.data(), kEmbMagic.size());
  detail::put_le<std::uint32_t>(bytes, set.dim());
  detail::put_le<std::uint64_t>(bytes, set.count());
  for (float f : set.data()) detail::put_f32(bytes, f);
  detail::write_file(destination, bytes);
}

// Validates magic, dim, and that the file holds exactly count*dim values.
// Never touches the payload.
inline EmbeddingHeader read_embedding_header(const fs::path& source) {
  auto in = detail::open_binary(source);
  std::array<unsigned char, kEmbHeaderBytes> hdr{};
  in.read(reinterpret_cast<char*>(hdr.data()), hdr.size());
  if (in.gcount() < 4 || std::memcmp(hdr.data(), kEmbMagic.data(), 4) != 0) {
    throw DataError("unrecognized format: " + source.string());
  }
  if (static_cast<std::size_t>(in.gcount()) != hdr.size()) {
    throw DataError("truncated: header incomplete in " + source.string());
  }
  EmbeddingHeader h;
  h.dim = detail::get_le<std::uint32_t>(hdr.data() + 4);
  h.count = detail::get_le<std::uint64_t>(hdr.data() + 8);
  if (h.dim == 0) throw DataError("invalid dim 0 in " + source.string());
  const std::uint64_t file_bytes = fs::file_size(source);
  const std::uint64_t payload = file_bytes - kEmbHeaderBytes;
  const bool overflow = h.count > std::numeric_limits<std::uint64_t>::max() / 4 / h.dim;
  const std::uint64_t expected_values = overflow ? 0 : h.count * h.dim;
  if (overflow || payload != expected_values * 4) {
    throw DataError("truncated: expected N·D values (" + std::to_string(h.count) + "x" +
                    std::to_string(h.dim) + " = " + std::to_string(expected_values) +
                    "), file holds " + std::to_string(payload / 4) + " in " + source.string());
  }
  return h;
}

inline EmbeddingSet read_embeddings(const fs::path& source) {
  const EmbeddingHeader h = read_embedding_header(source);
  auto in = detail::open_binary(source);
  in.seekg(static_cast<std::streamoff>(kEmbHeaderBytes));
  const std::size_t n = static_cast<std::size_t>(h.count) * h.dim;
  std::vector<float> data(n);
  detail::read_exact(in, data.data(), n * sizeof(float), source);
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : data) {
      f = detail::get_f32(reinterpret_cast<const unsigned char*>(&f));
    }
  }
  return EmbeddingSet(h.dim, h.count, std::move(data), source.stem().string());
}

// Row-aligned counterfactual pairs for one binary attribute.
struct PairManifest {
  std::string attribute;
  fs::path base_ref;     // resolved path
  fs::path variant_ref;  // resolved path
  std::uint64_t pair_count = 0;
  std::uint32_t dim = 0;
};

inline PairManifest manifest_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  PairManifest m;
  try {
    m.attribute = j.at("attribute").get<std::string>();
    m.base_ref = j.at("base_ref").get<std::string>();
    m.variant_ref = j.at("variant_ref").get<std::string>();
    m.pair_count = j.at("pair_count").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid manifest: ") + e.what());
  }
  if (m.base_ref.is_relative()) m.base_ref = base_dir / m.base_ref;
  if (m.variant_ref.is_relative()) m.variant_ref = base_dir / m.variant_ref;
  for (const auto& p : {m.base_ref, m.variant_ref}) {
    if (!fs::exists(p)) throw DataError("missing file: " + p.string());
  }
  const EmbeddingHeader base = read_embedding_header(m.base_ref);
  const EmbeddingHeader variant = read_embedding_header(m.variant_ref);
  if (base.dim != variant.dim) {
    throw DataError("dimension mismatch: base dim " + std::to_string(base.dim) +
                    ", variant dim " + std::to_string(variant.dim));
  }
  if (base.count != m.pair_count || variant.count != m.pair_count) {
    throw DataError("pair count mismatch: manifest says " + std::to_string(m.pair_count) +
                    ", base has " + std::to_string(base.count) + ", variant has " +
                    std::to_string(variant.count));
  }
  m.dim = base.dim;
  return m;
}

inline PairManifest read_manifest(const fs::path& source) {
  std::ifstream in(source);
  if (!in) throw DataError("cannot open manifest: " + source.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest is not valid JSON: " + std::string(e.what()));
  }
  return manifest_from_json(j, source.parent_path());
}

inline void write_manifest(const PairManifest& m, const fs::path& destination) {
  nlohmann::json j{{"attribute", m.attribute},
                   {"base_ref", m.base_ref.string()},
                   {"variant_ref", m.variant_ref.string()},
                   {"pair_count", m.pair_count}};
  detail::write_file(destination, j.dump(2) + "\n");
}

// Loads (base, variant) and re-checks the pairing invariants on the payload.
inline std::pair<EmbeddingSet, EmbeddingSet> load_pairs(const PairManifest& m) {
  EmbeddingSet base = read_embeddings(m.base_ref);
  EmbeddingSet variant = read_embeddings(m.variant_ref);
  if (base.dim() != variant.dim()) throw DataError("dimension mismatch");
  if (base.count() != m.pair_count || variant.count() != m.pair_count) {
    throw DataError("pair count mismatch");
  }
  return {std::move(base), std::move(variant)};
}

}  // namespace percept
