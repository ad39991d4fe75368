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

// Single-pass, mergeable mean/covariance estimation and the GSS1 summary
// format (little-endian):
//   "GSS1", u32 dim, u64 count, dim f64 (mean), dim*dim f64 (cov, row-major).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "percept/detail/parallel.hpp"
#include "percept/embedio.hpp"
#include "percept/error.hpp"

namespace percept {

// (count, mean, covariance) of one embedding set, in 64-bit.
struct GaussianSummary {
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Running count, mean, and co-moment (sum of outer products of deviations).
// The co-moment is kept exactly symmetric: only the upper triangle is
// updated and then mirrored.
class StatAccumulator {
 public:
  explicit StatAccumulator(std::size_t dim)
      : mean_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim))),
        comoment_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                        static_cast<Eigen::Index>(dim))) {
    if (dim == 0) throw DataError("accumulator dim must be positive");
  }

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  std::uint64_t count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& comoment() const { return comoment_; }

  // Welford update: mean first, then co-moment from the pre- and post-update
  // deviations.
  template <typename T>
  void accumulate(std::span<const T> row) {
    const auto d = static_cast<Eigen::Index>(dim());
    if (row.size() != dim()) {
      throw DataError("row length " + std::to_string(row.size()) + " != dim " +
                      std::to_string(dim()));
    }
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      x(i) = static_cast<double>(row[static_cast<std::size_t>(i)]);
      if (!std::isfinite(x(i))) {
        throw DataError("non-finite value at col " + std::to_string(i));
      }
    }
    ++count_;
    const Eigen::VectorXd pre = x - mean_;
    mean_ += pre / static_cast<double>(count_);
    const Eigen::VectorXd post = x - mean_;
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i <= j; ++i) comoment_(i, j) += pre(i) * post(j);
    }
    mirror_upper();
  }

  void accumulate(const std::vector<double>& row) { accumulate(std::span<const double>(row)); }
  void accumulate(const std::vector<float>& row) { accumulate(std::span<const float>(row)); }

  // Adds a contiguous block of rows (row-major, rows*dim floats) by forming
  // the block's own centered co-moment and merging it in.
  void accumulate_block(std::span<const float> block) {
    const std::size_t d = dim();
    if (block.size() % d != 0) throw DataError("block length is not a multiple of dim");
    const std::size_t m = block.size() / d;
    if (m == 0) return;
    using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> view(block.data(), static_cast<Eigen::Index>(m),
                                  static_cast<Eigen::Index>(d));
    Eigen::MatrixXd x = view.cast<double>();
    if (!x.allFinite()) throw DataError("non-finite value in block");
    StatAccumulator part(d);
    part.count_ = m;
    part.mean_ = x.colwise().mean().transpose();
    x.rowwise() -= part.mean_.transpose();
    part.comoment_.selfadjointView<Eigen::Upper>().rankUpdate(x.transpose());
    part.mirror_upper();
    merge(part);
  }

  // Chan et al. pairwise combination.
  void merge(const StatAccumulator& other) {
    if (other.dim() != dim()) {
      throw DataError("dimension mismatch: " + std::to_string(dim()) + " vs " +
                      std::to_string(other.dim()));
    }
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    const Eigen::VectorXd delta = other.mean_ - mean_;
    const double f = na * nb / n;
    const auto d = static_cast<Eigen::Index>(dim());
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i <= j; ++i) {
        comoment_(i, j) += other.comoment_(i, j) + (delta(i) * delta(j)) * f;
      }
    }
    mirror_upper();
    mean_ += delta * (nb / n);
    count_ += other.count_;
  }

 private:
  void mirror_upper() {
    const Eigen::Index d = comoment_.rows();
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = j + 1; i < d; ++i) comoment_(i, j) = comoment_(j, i);
    }
  }

  std::uint64_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd comoment_;
};

inline GaussianSummary finalize(const StatAccumulator& acc) {
  if (acc.count() < 2) {
    throw DataError("insufficient samples: need at least 2 rows, have " +
                    std::to_string(acc.count()));
  }
  GaussianSummary g;
  g.dim = static_cast<std::uint32_t>(acc.dim());
  g.count = acc.count();
  g.mean = acc.mean();
  const Eigen::MatrixXd c = acc.comoment() / static_cast<double>(acc.count() - 1);
  g.cov = (c + c.transpose()) * 0.5;
  return g;
}

// Rows per block fed to accumulate_block.
inline constexpr std::size_t kStatChunkRows = 1024;
// Fixed shard count: the merge tree depends only on the row count, never on
// the number of worker threads.
inline constexpr std::size_t kStatShards = 8;

// Accumulates the selected rows (all rows when `indices` is empty) across
// contiguous shards, then merges shards in order.
inline StatAccumulator accumulate_rows(const EmbeddingSet& set,
                                       std::span<const std::size_t> indices,
                                       std::size_t threads = 1) {
  const std::size_t d = set.dim();
  const bool all = indices.empty();
  const std::size_t n = all ? set.rows() : indices.size();
  const std::size_t chunks = (n + kStatChunkRows - 1) / kStatChunkRows;
  const std::size_t shards = std::max<std::size_t>(1, std::min(kStatShards, chunks));
  std::vector<StatAccumulator> parts(shards, StatAccumulator(d));
  detail::parallel_for(shards, threads, [&](std::size_t s) {
    const std::size_t begin = n * s / shards;
    const std::size_t end = n * (s + 1) / shards;
    std::vector<float> buf;
    for (std::size_t r = begin; r < end; r += kStatChunkRows) {
      const std::size_t stop = std::min(end, r + kStatChunkRows);
      if (all) {
        parts[s].accumulate_block(set.data().subspan(r * d, (stop - r) * d));
      } else {
        buf.clear();
        for (std::size_t i = r; i < stop; ++i) {
          auto row = set.row(indices[i]);
          buf.insert(buf.end(), row.begin(), row.end());
        }
        parts[s].accumulate_block(buf);
      }
    }
  });
  StatAccumulator acc(d);
  for (const auto& p : parts) acc.merge(p);
  return acc;
}

inline GaussianSummary summarize(const EmbeddingSet& set, std::size_t threads = 1) {
  if (set.count() < 2) {
    throw DataError("insufficient samples: need at least 2 rows, have " +
                    std::to_string(set.count()));
  }
  return finalize(accumulate_rows(set, {}, threads));
}

inline GaussianSummary summarize(const EmbeddingSet& set, std::span<const std::size_t> indices,
                                 std::size_t threads = 1) {
  if (indices.size() < 2) {
    throw DataError("insufficient samples: need at least 2 rows, have " +
                    std::to_string(indices.size()));
  }
  return finalize(accumulate_rows(set, indices, threads));
}

// Finite entries and symmetry within 1e-9 relative.
inline void validate_summary(const GaussianSummary& g) {
  const auto d = static_cast<Eigen::Index>(g.dim);
  if (g.dim == 0 || g.mean.size() != d || g.cov.rows() != d || g.cov.cols() != d) {
    throw DataError("summary shape inconsistent with dim " + std::to_string(g.dim));
  }
  if (!g.mean.allFinite() || !g.cov.allFinite()) throw DataError("summary has non-finite values");
  const double scale = std::max(g.cov.cwiseAbs().maxCoeff(), 1e-300);
  if ((g.cov - g.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw DataError("summary covariance is not symmetric");
  }
}

inline constexpr std::array<char, 4> kGssMagic{'G', 'S', 'S', '1'};

inline void write_summary(const GaussianSummary& g, const fs::path& destination) {
  validate_summary(g);
  std::string bytes;
  bytes.reserve(16 + 8 * (g.dim + static_cast<std::size_t>(g.dim) * g.dim));
  bytes.append(kGssMagic.data(), kGssMagic.size());
  detail::put_le<std::uint32_t>(bytes, g.dim);
  detail::put_le<std::uint64_t>(bytes, g.count);
  for (Eigen::Index i = 0; i < g.mean.size(); ++i) detail::put_f64(bytes, g.mean(i));
  for (Eigen::Index r = 0; r < g.cov.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.cov.cols(); ++c) detail::put_f64(bytes, g.cov(r, c));
  }
  detail::write_file(destination, bytes);
}

inline GaussianSummary read_summary(const fs::path& source) {
  auto in = detail::open_binary(source);
  std::array<unsigned char, 16> hdr{};
  in.read(reinterpret_cast<char*>(hdr.data()), hdr.size());
  if (in.gcount() < 4 || std::memcmp(hdr.data(), kGssMagic.data(), 4) != 0) {
    throw DataError("unrecognized format: " + source.string());
  }
  if (in.gcount() != 16) throw DataError("truncated: header incomplete in " + source.string());
  GaussianSummary g;
  g.dim = detail::get_le<std::uint32_t>(hdr.data() + 4);
  g.count = detail::get_le<std::uint64_t>(hdr.data() + 8);
  if (g.dim == 0 || g.dim > (1u << 16)) throw DataError("invalid summary dim");
  const std::size_t d = g.dim;
  const std::uint64_t expected = 16 + 8 * (d + d * d);
  if (fs::file_size(source) != expected) {
    throw DataError("truncated: expected " + std::to_string(expected) + " bytes in " +
                    source.string());
  }
  std::vector<unsigned char> payload(8 * (d + d * d));
  detail::read_exact(in, payload.data(), payload.size(), source);
  const auto di = static_cast<Eigen::Index>(d);
  g.mean.resize(di);
  g.cov.resize(di, di);
  const unsigned char* p = payload.data();
  for (Eigen::Index i = 0; i < di; ++i, p += 8) g.mean(i) = detail::get_f64(p);
  for (Eigen::Index r = 0; r < di; ++r) {
    for (Eigen::Index c = 0; c < di; ++c, p += 8) g.cov(r, c) = detail::get_f64(p);
  }
  validate_summary(g);
  return g;
}

// Reads the first four bytes of a file.
inline std::string sniff_magic(const fs::path& source) {
  auto in = detail::open_binary(source);
  std::string m(4, '\0');
  in.read(m.data(), 4);
  m.resize(static_cast<std::size_t>(in.gcount()));
  return m;
}

}  // namespace percept
