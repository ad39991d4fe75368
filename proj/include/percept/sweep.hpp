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

// Attribute-proportion sweep over counterfactual pairs.
//
// For a proportion difference d, set A takes the variant (attribute-positive)
// embedding for a share p_A = (1 + d) / 2 of its identities and set B for
// p_B = (1 - d) / 2; both use the same sampled identities. FD between A and
// B, traced over d, is the attribute's effect curve.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "percept/detail/parallel.hpp"
#include "percept/detail/rng.hpp"
#include "percept/embedio.hpp"
#include "percept/error.hpp"
#include "percept/frechet.hpp"

namespace percept {

struct SweepConfig {
  std::size_t set_size = 1000;
  std::size_t draws = 10;
  std::vector<double> diff_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct SweepPoint {
  double d = 0.0;
  double fd_mean = 0.0;
  double fd_std = 0.0;  // population std over draws
  double mean_term_mean = 0.0;
  double trace_term_mean = 0.0;
};

struct SweepCurve {
  std::string attribute;
  std::vector<SweepPoint> points;
  std::size_t set_size = 0;
  std::size_t draws = 0;
  std::uint64_t seed = 0;
};

// Evenly spaced grid 0, step, ..., 1 (the last point is exactly 1).
inline std::vector<double> make_diff_grid(double step) {
  if (!(step > 0.0) || step > 1.0) throw UsageError("grid step must be in (0, 1]");
  const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
  std::vector<double> g;
  for (std::size_t i = 0; i <= n; ++i) g.push_back(std::min(1.0, static_cast<double>(i) / n));
  return g;
}

// round(n * (1 +- d) / 2) with ties to even. Values within 1e-9 of a half
// are treated as exact ties so representation noise in d cannot decide them.
inline std::size_t positive_count(std::size_t n, double d, bool set_a) {
  const double x = static_cast<double>(n) * (set_a ? 1.0 + d : 1.0 - d) * 0.5;
  const double fl = std::floor(x);
  const double frac = x - fl;
  double r;
  if (std::abs(frac - 0.5) <= 1e-9) {
    r = std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
  } else {
    r = std::round(x);
  }
  r = std::clamp(r, 0.0, static_cast<double>(n));
  return static_cast<std::size_t>(r);
}

namespace detail {

inline void validate_sweep(const SweepConfig& cfg, std::uint64_t pair_count) {
  if (cfg.set_size < 2) throw UsageError("set_size must be >= 2");
  if (cfg.set_size > pair_count) {
    throw DataError("set_size " + std::to_string(cfg.set_size) + " exceeds pair_count " +
                    std::to_string(pair_count));
  }
  if (cfg.draws == 0) throw UsageError("draws must be positive");
  if (cfg.diff_grid.empty()) throw UsageError("diff_grid is empty");
  for (std::size_t i = 0; i < cfg.diff_grid.size(); ++i) {
    const double d = cfg.diff_grid[i];
    if (!(d >= 0.0 && d <= 1.0)) throw UsageError("diff_grid values must lie in [0, 1]");
    if (i > 0 && d <= cfg.diff_grid[i - 1]) throw UsageError("diff_grid must be strictly increasing");
  }
}

inline EmbeddingSet assemble(const EmbeddingSet& base, const EmbeddingSet& variant,
                             const std::vector<std::size_t>& ids,
                             const std::vector<std::uint8_t>& positive) {
  const std::size_t dim = base.dim();
  std::vector<float> data;
  data.reserve(ids.size() * dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto r = positive[i] ? variant.row(ids[i]) : base.row(ids[i]);
    data.insert(data.end(), r.begin(), r.end());
  }
  return EmbeddingSet(static_cast<std::uint32_t>(dim), ids.size(), std::move(data));
}

}  // namespace detail

// Mixed sets (A, B) for one draw. All randomness comes from draw_seed.
inline std::pair<EmbeddingSet, EmbeddingSet> build_mixed_sets(const EmbeddingSet& base,
                                                               const EmbeddingSet& variant,
                                                               double d, std::size_t set_size,
                                                               std::uint64_t draw_seed) {
  if (base.dim() != variant.dim()) throw DataError("dimension mismatch");
  if (base.count() != variant.count()) throw DataError("pair count mismatch");
  if (!(d >= 0.0 && d <= 1.0)) throw UsageError("d must lie in [0, 1]");
  if (set_size > base.rows()) {
    throw DataError("set_size " + std::to_string(set_size) + " exceeds pair_count " +
                    std::to_string(base.count()));
  }
  detail::CounterRng id_rng(detail::stream_key(draw_seed, {0}));
  const auto ids = detail::sample_without_replacement(base.rows(), set_size, id_rng);

  auto flags = [&](bool set_a) {
    detail::CounterRng rng(detail::stream_key(draw_seed, {set_a ? 1u : 2u}));
    const std::size_t k = positive_count(set_size, d, set_a);
    std::vector<std::uint8_t> pos(set_size, 0);
    for (std::size_t slot : detail::sample_without_replacement(set_size, k, rng)) pos[slot] = 1;
    return pos;
  };
  return {detail::assemble(base, variant, ids, flags(true)),
          detail::assemble(base, variant, ids, flags(false))};
}

inline SweepCurve run_sweep(const EmbeddingSet& base, const EmbeddingSet& variant,
                            const std::string& attribute, const SweepConfig& cfg) {
  if (base.dim() != variant.dim()) throw DataError("dimension mismatch");
  if (base.count() != variant.count()) throw DataError("pair count mismatch");
  detail::validate_sweep(cfg, base.count());

  const std::size_t g = cfg.diff_grid.size();
  const std::size_t r = cfg.draws;
  std::vector<FdResult> results(g * r);
  detail::parallel_for(g * r, cfg.threads, [&](std::size_t task) {
    const std::size_t gi = task / r, di = task % r;
    const std::uint64_t draw_seed = detail::stream_key(cfg.seed, {gi, di});
    auto [a, b] = build_mixed_sets(base, variant, cfg.diff_grid[gi], cfg.set_size, draw_seed);
    results[task] = fd_between_sets(a, b);
  });

  SweepCurve curve{attribute, {}, cfg.set_size, cfg.draws, cfg.seed};
  for (std::size_t gi = 0; gi < g; ++gi) {
    SweepPoint p;
    p.d = cfg.diff_grid[gi];
    for (std::size_t di = 0; di < r; ++di) {
      const auto& fr = results[gi * r + di];
      p.fd_mean += fr.total;
      p.mean_term_mean += fr.mean_term;
      p.trace_term_mean += fr.trace_term;
    }
    const double rd = static_cast<double>(r);
    p.fd_mean /= rd;
    p.mean_term_mean /= rd;
    p.trace_term_mean /= rd;
    double ss = 0.0;
    for (std::size_t di = 0; di < r; ++di) {
      const double e = results[gi * r + di].total - p.fd_mean;
      ss += e * e;
    }
    p.fd_std = std::sqrt(ss / rd);
    curve.points.push_back(p);
  }
  return curve;
}

inline SweepCurve run_sweep(const PairManifest& manifest, const SweepConfig& cfg) {
  detail::validate_sweep(cfg, manifest.pair_count);
  auto [base, variant] = load_pairs(manifest);
  return run_sweep(base, variant, manifest.attribute, cfg);
}

// Shortest round-trip decimal for a double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw DataError("bad number: '" + s + "'");
  return v;
}

inline constexpr const char* kSweepCsvHeader =
    "attribute,d,fd_mean,fd_std,mean_term_mean,trace_term_mean";

// One row per point; several curves may share a file.
inline std::string sweep_to_csv(const std::vector<SweepCurve>& curves) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& c : curves) {
    if (c.attribute.find_first_of(",\n\"") != std::string::npos) {
      throw DataError("attribute names may not contain commas, quotes, or newlines");
    }
    for (const auto& p : c.points) {
      out += c.attribute + "," + format_double(p.d) + "," + format_double(p.fd_mean) + "," +
             format_double(p.fd_std) + "," + format_double(p.mean_term_mean) + "," +
             format_double(p.trace_term_mean) + "\n";
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

// Groups rows into curves by attribute, in order of first appearance.
inline std::vector<SweepCurve> sweep_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSweepCsvHeader) {
    throw DataError("sweep CSV header must be: " + std::string(kSweepCsvHeader));
  }
  std::vector<SweepCurve> curves;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 6) throw DataError("sweep CSV row needs 6 cells: " + line);
    SweepPoint p{parse_double(cells[1]), parse_double(cells[2]), parse_double(cells[3]),
                 parse_double(cells[4]), parse_double(cells[5])};
    auto it = std::find_if(curves.begin(), curves.end(),
                           [&](const SweepCurve& c) { return c.attribute == cells[0]; });
    if (it == curves.end()) {
      curves.push_back(SweepCurve{cells[0], {}, 0, 0, 0});
      it = std::prev(curves.end());
    }
    it->points.push_back(p);
  }
  return curves;
}

}  // namespace percept
