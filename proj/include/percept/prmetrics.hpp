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

// k-NN manifold precision and recall.
//
// Each set's manifold is the union of balls centred on its rows, with radius
// equal to the distance to the row's k-th nearest neighbour in the same set.
// precision = share of generated rows inside the real manifold,
// recall    = share of real rows inside the generated manifold.
//
// All decisions are taken on the direct squared distance
//   sum_d (double(a_d) - double(b_d))^2   (sequential, no contraction),
// so blocking and threading never change a result. Blocks of the expanded
// form |a|^2 + |b|^2 - 2 a.b (64-bit GEMM) only narrow down which pairs
// need the direct form: a pair is re-checked whenever the expanded value
// lies within a rigorous round-off bound (or 1e-4 relative) of a threshold.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "percept/detail/parallel.hpp"
#include "percept/embedio.hpp"
#include "percept/error.hpp"

namespace percept {

struct PrResult {
  double precision = 0.0;
  double recall = 0.0;
  int k = 3;
};

struct PrOptions {
  std::size_t threads = 1;
  // Upper bound on working buffers (distance blocks, converted rows,
  // candidate lists, flags). Input sets are not counted.
  std::size_t block_budget_bytes = std::size_t{4} << 30;
  std::size_t max_block_rows = 2048;
};

// Filled in when a caller wants to see how the work was laid out.
struct PrDiagnostics {
  std::size_t block_rows = 0;
  std::size_t workers = 0;
  std::size_t working_bytes = 0;  // planned peak of working buffers
  std::uint64_t direct_checks = 0;
};

inline double direct_sq_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double t = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    s += t * t;
  }
  return s;
}

namespace detail {

using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::vector<double> row_sq_norms(const EmbeddingSet& s) {
  std::vector<double> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double acc = 0.0;
    for (float v : s.row(i)) acc += static_cast<double>(v) * static_cast<double>(v);
    out[i] = acc;
  }
  return out;
}

// Round-off bound factor: |expanded - direct| <= c * (|a|^2 + |b|^2).
inline double expansion_error_factor(std::size_t dim) {
  return 8.0 * (static_cast<double>(dim) + 4.0) * std::numeric_limits<double>::epsilon();
}

inline void load_rows(const EmbeddingSet& s, std::size_t begin, std::size_t end, RowMatD& out) {
  const auto d = static_cast<Eigen::Index>(s.dim());
  out.resize(static_cast<Eigen::Index>(end - begin), d);
  using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMatF> src(s.data().data() + begin * s.dim(),
                                static_cast<Eigen::Index>(end - begin), d);
  out = src.cast<double>();
}

inline constexpr std::size_t candidate_cap(int k) { return 4 * static_cast<std::size_t>(k) + 64; }

struct BlockPlan {
  std::size_t rows = 0;
  std::size_t workers = 0;
  std::size_t bytes = 0;
};

// Largest block (halving from max_block_rows) whose buffers fit the budget.
inline BlockPlan plan_blocks(std::size_t dim, std::size_t n_query, std::size_t n_ref, int k,
                             const PrOptions& opt) {
  const std::size_t fixed = (n_query + n_ref) * (2 * sizeof(double) + 1) +
                            (n_query + n_ref) * candidate_cap(k) *
                                sizeof(std::pair<double, std::uint32_t>);
  BlockPlan p;
  p.workers = resolve_threads(opt.threads);
  for (std::size_t b = std::max<std::size_t>(opt.max_block_rows, 8); b >= 8; b /= 2) {
    const std::size_t per_worker = sizeof(double) * (2 * b * dim + b * b);
    const std::size_t total = fixed + p.workers * per_worker;
    if (total <= opt.block_budget_bytes) {
      p.rows = b;
      p.bytes = total;
      return p;
    }
  }
  throw UsageError("block budget of " + std::to_string(opt.block_budget_bytes) +
                   " bytes is too small for dim " + std::to_string(dim));
}

// Candidate neighbours of one row under the expanded distance. Everything
// with expanded value <= (current k-th smallest) + 2*margin is retained, which
// always includes every row whose direct distance is <= the true k-th.
class RowCandidates {
 public:
  void offer(double approx, std::uint32_t idx, int k, double margin) {
    if (approx > threshold_) return;
    items_.emplace_back(approx, idx);
    if (items_.size() >= candidate_cap(k)) prune(k, margin);
  }

  void prune(int k, double margin) {
    const auto kk = static_cast<std::size_t>(k);
    if (items_.size() < kk) return;
    std::nth_element(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(kk - 1),
                     items_.end());
    threshold_ = std::min(threshold_, items_[kk - 1].first + 2.0 * margin);
    std::erase_if(items_, [&](const auto& it) { return it.first > threshold_; });
  }

  const std::vector<std::pair<double, std::uint32_t>>& items() const { return items_; }

 private:
  std::vector<std::pair<double, std::uint32_t>> items_;
  double threshold_ = std::numeric_limits<double>::infinity();
};

// Squared k-NN radii (self excluded by index) under the direct distance.
inline std::vector<double> knn_radii_sq(const EmbeddingSet& set, int k,
                                        const std::vector<double>& norms, const BlockPlan& plan,
                                        std::size_t threads, std::atomic<std::uint64_t>& checks) {
  const std::size_t n = set.rows();
  const std::size_t b = plan.rows;
  const std::size_t nb = (n + b - 1) / b;
  const double c = expansion_error_factor(set.dim());
  const double max_norm = norms.empty() ? 0.0 : *std::max_element(norms.begin(), norms.end());
  std::vector<double> margin(n);
  for (std::size_t i = 0; i < n; ++i) margin[i] = c * (norms[i] + max_norm);

  std::vector<RowCandidates> cands(n);
  std::vector<std::unique_ptr<std::mutex>> locks(nb);
  for (auto& l : locks) l = std::make_unique<std::mutex>();

  // Task I covers block pairs (I, J) for J >= I; the distance block is used
  // for rows of I and, transposed, for rows of J.
  parallel_for(nb, threads, [&](std::size_t bi) {
    RowMatD q, r;
    RowMatD g;
    const std::size_t i0 = bi * b, i1 = std::min(n, i0 + b);
    load_rows(set, i0, i1, q);
    for (std::size_t bj = bi; bj < nb; ++bj) {
      const std::size_t j0 = bj * b, j1 = std::min(n, j0 + b);
      if (bj == bi) {
        g.noalias() = q * q.transpose();
      } else {
        load_rows(set, j0, j1, r);
        g.noalias() = q * r.transpose();
      }
      {
        std::lock_guard lock(*locks[bi]);
        for (std::size_t i = i0; i < i1; ++i) {
          const auto gi = static_cast<Eigen::Index>(i - i0);
          for (std::size_t j = j0; j < j1; ++j) {
            if (i == j) continue;
            const double approx =
                norms[i] + norms[j] - 2.0 * g(gi, static_cast<Eigen::Index>(j - j0));
            cands[i].offer(approx, static_cast<std::uint32_t>(j), k, margin[i]);
          }
        }
      }
      if (bj != bi) {
        std::lock_guard lock(*locks[bj]);
        for (std::size_t j = j0; j < j1; ++j) {
          const auto gj = static_cast<Eigen::Index>(j - j0);
          for (std::size_t i = i0; i < i1; ++i) {
            const double approx =
                norms[i] + norms[j] - 2.0 * g(static_cast<Eigen::Index>(i - i0), gj);
            cands[j].offer(approx, static_cast<std::uint32_t>(i), k, margin[j]);
          }
        }
      }
    }
  });

  std::vector<double> r2(n);
  std::uint64_t local_checks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cands[i].prune(k, margin[i]);
    std::vector<std::pair<double, std::uint32_t>> exact;
    exact.reserve(cands[i].items().size());
    for (const auto& [approx, j] : cands[i].items()) {
      exact.emplace_back(direct_sq_distance(set.row(i), set.row(j)), j);
    }
    local_checks += exact.size();
    // (distance, index) ordering breaks ties toward the smaller row index.
    std::nth_element(exact.begin(), exact.begin() + (k - 1), exact.end());
    r2[i] = exact[static_cast<std::size_t>(k - 1)].first;
  }
  checks += local_checks;
  return r2;
}

inline void check_k(const EmbeddingSet& s, int k, const char* which) {
  if (k < 1) throw UsageError("k must be >= 1");
  if (s.count() <= static_cast<std::uint64_t>(k)) {
    throw DataError(std::string(which) + " set has " + std::to_string(s.count()) +
                    " rows; need more than k = " + std::to_string(k));
  }
}

}  // namespace detail

// Distance from each row to its k-th nearest neighbour in the same set,
// excluding the row itself.
inline std::vector<double> manifold_radii(const EmbeddingSet& set, int k,
                                          const PrOptions& opt = {},
                                          PrDiagnostics* diag = nullptr) {
  detail::check_k(set, k, "input");
  const auto plan = detail::plan_blocks(set.dim(), set.rows(), 0, k, opt);
  std::atomic<std::uint64_t> checks{0};
  const auto norms = detail::row_sq_norms(set);
  auto r2 = detail::knn_radii_sq(set, k, norms, plan, opt.threads, checks);
  for (double& v : r2) v = std::sqrt(v);
  if (diag) *diag = {plan.rows, plan.workers, plan.bytes, checks.load()};
  return r2;
}

inline PrResult precision_recall(const EmbeddingSet& real, const EmbeddingSet& gen, int k,
                                 const PrOptions& opt = {}, PrDiagnostics* diag = nullptr) {
  if (real.dim() != gen.dim()) {
    throw DataError("dimension mismatch: " + std::to_string(real.dim()) + " vs " +
                    std::to_string(gen.dim()));
  }
  detail::check_k(real, k, "real");
  detail::check_k(gen, k, "generated");
  const auto plan = detail::plan_blocks(real.dim(), real.rows(), gen.rows(), k, opt);
  std::atomic<std::uint64_t> checks{0};

  const auto real_norms = detail::row_sq_norms(real);
  const auto gen_norms = detail::row_sq_norms(gen);
  const auto real_r2 = detail::knn_radii_sq(real, k, real_norms, plan, opt.threads, checks);
  const auto gen_r2 = detail::knn_radii_sq(gen, k, gen_norms, plan, opt.threads, checks);

  const std::size_t nr = real.rows(), ng = gen.rows();
  std::vector<std::atomic<std::uint8_t>> gen_in(ng);   // inside the real manifold
  std::vector<std::atomic<std::uint8_t>> real_in(nr);  // inside the generated manifold
  const double c = detail::expansion_error_factor(real.dim());
  const std::size_t b = plan.rows;
  const std::size_t nbr = (nr + b - 1) / b, nbg = (ng + b - 1) / b;

  // Membership of `q` in the ball of `centre` with squared radius r2.
  auto decide = [&](double approx, double r2, double bound, std::span<const float> q,
                    std::span<const float> centre, std::uint64_t& local_checks) {
    const double band = std::max(bound, 1e-4 * r2);
    if (approx <= r2 - band) return true;
    if (approx > r2 + band) return false;
    ++local_checks;
    return direct_sq_distance(q, centre) <= r2;
  };

  detail::parallel_for(nbr, opt.threads, [&](std::size_t bi) {
    detail::RowMatD q, r, g;
    std::uint64_t local_checks = 0;
    const std::size_t i0 = bi * b, i1 = std::min(nr, i0 + b);
    detail::load_rows(real, i0, i1, q);
    for (std::size_t bj = 0; bj < nbg; ++bj) {
      const std::size_t j0 = bj * b, j1 = std::min(ng, j0 + b);
      detail::load_rows(gen, j0, j1, r);
      g.noalias() = q * r.transpose();
      for (std::size_t i = i0; i < i1; ++i) {
        const auto gi = static_cast<Eigen::Index>(i - i0);
        bool real_done = real_in[i].load(std::memory_order_relaxed) != 0;
        for (std::size_t j = j0; j < j1; ++j) {
          const double approx =
              real_norms[i] + gen_norms[j] - 2.0 * g(gi, static_cast<Eigen::Index>(j - j0));
          const double bound = c * (real_norms[i] + gen_norms[j]);
          if (gen_in[j].load(std::memory_order_relaxed) == 0 &&
              decide(approx, real_r2[i], bound, gen.row(j), real.row(i), local_checks)) {
            gen_in[j].store(1, std::memory_order_relaxed);
          }
          if (!real_done &&
              decide(approx, gen_r2[j], bound, real.row(i), gen.row(j), local_checks)) {
            real_in[i].store(1, std::memory_order_relaxed);
            real_done = true;
          }
        }
      }
    }
    checks += local_checks;
  });

  std::size_t gen_hits = 0, real_hits = 0;
  for (const auto& f : gen_in) gen_hits += f.load();
  for (const auto& f : real_in) real_hits += f.load();
  if (diag) *diag = {plan.rows, plan.workers, plan.bytes, checks.load()};
  return {static_cast<double>(gen_hits) / static_cast<double>(ng),
          static_cast<double>(real_hits) / static_cast<double>(nr), k};
}

}  // namespace percept
