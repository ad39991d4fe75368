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

// Result emission: generator leaderboards (FD / precision / recall per
// feature space, with top-3 marks), and SVG plots of sweep curves and
// region reports. All text output is byte-deterministic.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "percept/blur.hpp"
#include "percept/detail/parallel.hpp"
#include "percept/embedio.hpp"
#include "percept/error.hpp"
#include "percept/frechet.hpp"
#include "percept/prmetrics.hpp"
#include "percept/sweep.hpp"

namespace percept {

struct LeaderboardEntry {
  std::string generator;
  std::string feature_space;
  fs::path real_path;
  fs::path gen_path;
};

struct LeaderboardCell {
  std::string generator;
  std::string feature_space;
  std::optional<double> fd;
  std::optional<double> precision;
  std::optional<double> recall;
  std::string error;  // set when the cell could not be computed
  // 1..3 for the top three of the column under the metric, else 0.
  int fd_rank = 0;
  int precision_rank = 0;
  int recall_rank = 0;

  bool missing() const { return !fd.has_value(); }
  friend bool operator==(const LeaderboardCell&, const LeaderboardCell&) = default;
};

struct Leaderboard {
  std::vector<std::string> generators;      // row order of first appearance
  std::vector<std::string> feature_spaces;  // column order of first appearance
  std::vector<LeaderboardCell> cells;       // in entry order

  const LeaderboardCell* find(const std::string& gen, const std::string& space) const {
    for (const auto& c : cells) {
      if (c.generator == gen && c.feature_space == space) return &c;
    }
    return nullptr;
  }
};

// Assigns top-3 marks per feature space. Lower FD is better, higher
// precision/recall is better; ties keep entry order.
inline void rank_leaderboard(Leaderboard& board) {
  for (auto& c : board.cells) c.fd_rank = c.precision_rank = c.recall_rank = 0;
  auto rank_metric = [&](const std::string& space, auto value, auto rank, bool ascending) {
    std::vector<LeaderboardCell*> col;
    for (auto& c : board.cells) {
      if (c.feature_space == space && (c.*value).has_value()) col.push_back(&c);
    }
    std::stable_sort(col.begin(), col.end(), [&](const auto* a, const auto* b) {
      return ascending ? *(a->*value) < *(b->*value) : *(a->*value) > *(b->*value);
    });
    for (std::size_t i = 0; i < col.size() && i < 3; ++i) col[i]->*rank = static_cast<int>(i + 1);
  };
  for (const auto& space : board.feature_spaces) {
    rank_metric(space, &LeaderboardCell::fd, &LeaderboardCell::fd_rank, true);
    rank_metric(space, &LeaderboardCell::precision, &LeaderboardCell::precision_rank, false);
    rank_metric(space, &LeaderboardCell::recall, &LeaderboardCell::recall_rank, false);
  }
}

// Computes FD, precision and recall for every entry. A failing entry becomes
// a missing cell carrying its error message.
inline Leaderboard build_leaderboard(const std::vector<LeaderboardEntry>& entries, int k,
                                     const PrOptions& pr_opt = {}) {
  Leaderboard board;
  for (const auto& e : entries) {
    if (std::find(board.generators.begin(), board.generators.end(), e.generator) ==
        board.generators.end()) {
      board.generators.push_back(e.generator);
    }
    if (std::find(board.feature_spaces.begin(), board.feature_spaces.end(), e.feature_space) ==
        board.feature_spaces.end()) {
      board.feature_spaces.push_back(e.feature_space);
    }
  }
  board.cells.resize(entries.size());
  const std::size_t threads = resolve_threads(pr_opt.threads);
  const std::size_t outer = std::min(threads, entries.size());
  PrOptions inner = pr_opt;
  inner.threads = std::max<std::size_t>(1, threads / std::max<std::size_t>(outer, 1));
  inner.block_budget_bytes = pr_opt.block_budget_bytes / std::max<std::size_t>(outer, 1);
  detail::parallel_for(entries.size(), outer, [&](std::size_t i) {
    const auto& e = entries[i];
    LeaderboardCell cell;
    cell.generator = e.generator;
    cell.feature_space = e.feature_space;
    try {
      const EmbeddingSet real = read_embeddings(e.real_path);
      const EmbeddingSet gen = read_embeddings(e.gen_path);
      if (real.dim() != gen.dim()) {
        throw DataError("dimension mismatch: real " + std::to_string(real.dim()) + ", gen " +
                        std::to_string(gen.dim()));
      }
      const FdResult fd = fd_between_sets(real, gen, inner.threads);
      const PrResult pr = precision_recall(real, gen, k, inner);
      cell.fd = fd.total;
      cell.precision = pr.precision;
      cell.recall = pr.recall;
    } catch (const std::exception& ex) {
      cell.error = ex.what();
    }
    board.cells[i] = std::move(cell);
  });
  rank_leaderboard(board);
  return board;
}

// {"k": 3, "entries": [{"generator": "...", "feature_space": "...",
//   "real": "real.emb", "gen": "gen.emb"}, ...]}; relative paths resolve
// against base_dir.
inline std::vector<LeaderboardEntry> leaderboard_entries_from_json(const nlohmann::json& j,
                                                                   const fs::path& base_dir) {
  std::vector<LeaderboardEntry> out;
  try {
    for (const auto& e : j.at("entries")) {
      LeaderboardEntry le{e.at("generator").get<std::string>(),
                          e.at("feature_space").get<std::string>(),
                          e.at("real").get<std::string>(), e.at("gen").get<std::string>()};
      if (le.real_path.is_relative()) le.real_path = base_dir / le.real_path;
      if (le.gen_path.is_relative()) le.gen_path = base_dir / le.gen_path;
      out.push_back(std::move(le));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw UsageError(std::string("invalid leaderboard entries: ") + ex.what());
  }
  return out;
}

inline constexpr const char* kLeaderboardCsvHeader =
    "generator,feature_space,fd,precision,recall,fd_rank,precision_rank,recall_rank,error";

namespace detail {

inline std::string opt_to_string(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

inline std::optional<double> opt_from_string(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

// Splits one CSV record honouring double-quoted cells.
inline std::vector<std::string> split_csv_quoted(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

}  // namespace detail

inline std::string leaderboard_to_csv(const Leaderboard& board) {
  std::string out = std::string(kLeaderboardCsvHeader) + "\n";
  for (const auto& c : board.cells) {
    out += detail::csv_quote(c.generator) + "," + detail::csv_quote(c.feature_space) + "," +
           detail::opt_to_string(c.fd) + "," + detail::opt_to_string(c.precision) + "," +
           detail::opt_to_string(c.recall) + "," + std::to_string(c.fd_rank) + "," +
           std::to_string(c.precision_rank) + "," + std::to_string(c.recall_rank) + "," +
           detail::csv_quote(c.error) + "\n";
  }
  return out;
}

inline Leaderboard leaderboard_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kLeaderboardCsvHeader) {
    throw DataError("leaderboard CSV header must be: " + std::string(kLeaderboardCsvHeader));
  }
  Leaderboard board;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv_quoted(line);
    if (f.size() != 9) throw DataError("leaderboard CSV row needs 9 cells: " + line);
    LeaderboardCell c{f[0], f[1], detail::opt_from_string(f[2]), detail::opt_from_string(f[3]),
                      detail::opt_from_string(f[4]), f[8], std::stoi(f[5]), std::stoi(f[6]),
                      std::stoi(f[7])};
    if (std::find(board.generators.begin(), board.generators.end(), c.generator) ==
        board.generators.end()) {
      board.generators.push_back(c.generator);
    }
    if (std::find(board.feature_spaces.begin(), board.feature_spaces.end(), c.feature_space) ==
        board.feature_spaces.end()) {
      board.feature_spaces.push_back(c.feature_space);
    }
    board.cells.push_back(std::move(c));
  }
  return board;
}

inline nlohmann::json leaderboard_to_json(const Leaderboard& board) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : board.cells) {
    nlohmann::json j{{"generator", c.generator}, {"feature_space", c.feature_space}};
    j["fd"] = c.fd ? nlohmann::json(*c.fd) : nlohmann::json(nullptr);
    j["precision"] = c.precision ? nlohmann::json(*c.precision) : nlohmann::json(nullptr);
    j["recall"] = c.recall ? nlohmann::json(*c.recall) : nlohmann::json(nullptr);
    j["fd_rank"] = c.fd_rank;
    j["precision_rank"] = c.precision_rank;
    j["recall_rank"] = c.recall_rank;
    if (!c.error.empty()) j["error"] = c.error;
    cells.push_back(std::move(j));
  }
  return {{"generators", board.generators},
          {"feature_spaces", board.feature_spaces},
          {"cells", std::move(cells)}};
}

inline Leaderboard leaderboard_from_json(const nlohmann::json& j) {
  Leaderboard board;
  try {
    board.generators = j.at("generators").get<std::vector<std::string>>();
    board.feature_spaces = j.at("feature_spaces").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells")) {
      auto opt = [&](const char* key) -> std::optional<double> {
        if (c.at(key).is_null()) return std::nullopt;
        return c.at(key).get<double>();
      };
      board.cells.push_back({c.at("generator").get<std::string>(),
                             c.at("feature_space").get<std::string>(), opt("fd"),
                             opt("precision"), opt("recall"), c.value("error", std::string()),
                             c.at("fd_rank").get<int>(), c.at("precision_rank").get<int>(),
                             c.at("recall_rank").get<int>()});
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("invalid leaderboard JSON: ") + ex.what());
  }
  return board;
}

// ---------------------------------------------------------------------------
// SVG

struct PlotStyle {
  int width = 640;
  int height = 420;
  int margin_left = 70;
  int margin_right = 140;
  int margin_top = 30;
  int margin_bottom = 50;
  double log_floor = 1e-6;  // values below are drawn at the floor, hollow
  std::string title;
};

namespace detail {

// Fixed-point formatting with `digits` decimals; "-0.00" is printed as "0.00".
inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  std::string s(buf, end);
  if (s.size() > 1 && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                           "#bcbd22", "#17becf", "#393b79", "#637939"};

inline std::string svg_open(const PlotStyle& s) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(s.width) +
         "\" height=\"" + std::to_string(s.height) + "\" viewBox=\"0 0 " +
         std::to_string(s.width) + " " + std::to_string(s.height) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(s.width) + "\" height=\"" +
         std::to_string(s.height) + "\" fill=\"white\"/>\n";
  if (!s.title.empty()) {
    out += "<text class=\"title\" x=\"" + std::to_string(s.width / 2) +
           "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" + xml_escape(s.title) +
           "</text>\n";
  }
  return out;
}

}  // namespace detail

// Sweep curves on a log10 y axis with +-fd_std error bars, one colour per
// attribute. Values below style.log_floor are drawn at the floor as hollow
// markers.
inline std::string render_sweep_svg(const std::vector<SweepCurve>& curves,
                                    const PlotStyle& style = {}) {
  std::size_t n_points = 0;
  for (const auto& c : curves) n_points += c.points.size();
  if (n_points == 0) throw DataError("nothing to render: no curve points");

  const double floor = style.log_floor;
  auto clampv = [&](double v) { return std::max(v, floor); };
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      lo = std::min(lo, clampv(p.fd_mean - p.fd_std));
      hi = std::max(hi, clampv(p.fd_mean + p.fd_std));
      xmin = std::min(xmin, p.d);
      xmax = std::max(xmax, p.d);
    }
  }
  const double dec_lo = std::floor(std::log10(lo));
  double dec_hi = std::ceil(std::log10(hi));
  if (dec_hi <= dec_lo) dec_hi = dec_lo + 1;
  if (xmax <= xmin) {
    xmin -= 0.05;
    xmax += 0.05;
  }

  const double x0 = style.margin_left, x1 = style.width - style.margin_right;
  const double y0 = style.height - style.margin_bottom, y1 = style.margin_top;
  auto px = [&](double d) { return x0 + (d - xmin) / (xmax - xmin) * (x1 - x0); };
  auto py = [&](double v) {
    return y0 - (std::log10(clampv(v)) - dec_lo) / (dec_hi - dec_lo) * (y0 - y1);
  };
  using detail::fixed;

  std::string out = detail::svg_open(style);
  out += "<g class=\"axis-x\">\n<line x1=\"" + fixed(x0) + "\" y1=\"" + fixed(y0) + "\" x2=\"" +
         fixed(x1) + "\" y2=\"" + fixed(y0) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 10; ++t) {
    const double d = xmin + (xmax - xmin) * t / 10.0;
    out += "<text x=\"" + fixed(px(d)) + "\" y=\"" + fixed(y0 + 16) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + fixed(d * 100.0, 0) + "%</text>\n";
  }
  out += "<text x=\"" + fixed((x0 + x1) / 2) + "\" y=\"" + fixed(y0 + 36) +
         "\" text-anchor=\"middle\" font-size=\"12\">difference in attribute proportion</text>\n"
         "</g>\n";
  out += "<g class=\"axis-y log\" data-scale=\"log10\">\n<line x1=\"" + fixed(x0) + "\" y1=\"" +
         fixed(y0) + "\" x2=\"" + fixed(x0) + "\" y2=\"" + fixed(y1) + "\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(dec_lo); e <= static_cast<int>(dec_hi); ++e) {
    const double y = py(std::pow(10.0, e));
    out += "<line x1=\"" + fixed(x0 - 4) + "\" y1=\"" + fixed(y) + "\" x2=\"" + fixed(x0) +
           "\" y2=\"" + fixed(y) + "\" stroke=\"black\"/>\n<text x=\"" + fixed(x0 - 6) +
           "\" y=\"" + fixed(y + 3) + "\" text-anchor=\"end\" font-size=\"10\">1e" +
           std::to_string(e) + "</text>\n";
  }
  out += "<text x=\"14\" y=\"" + fixed((y0 + y1) / 2) + "\" transform=\"rotate(-90 14 " +
         fixed((y0 + y1) / 2) +
         ")\" text-anchor=\"middle\" font-size=\"12\">FD (log scale)</text>\n</g>\n";

  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const std::string color = detail::kPalette[ci % std::size(detail::kPalette)];
    out += "<g class=\"curve\" data-attribute=\"" + detail::xml_escape(c.attribute) + "\">\n";
    if (c.points.size() > 1) {
      out += "<polyline fill=\"none\" stroke=\"" + color + "\" points=\"";
      for (std::size_t i = 0; i < c.points.size(); ++i) {
        if (i) out += " ";
        out += fixed(px(c.points[i].d)) + "," + fixed(py(c.points[i].fd_mean));
      }
      out += "\"/>\n";
    }
    for (const auto& p : c.points) {
      const double x = px(p.d);
      const double ylo = py(p.fd_mean - p.fd_std), yhi = py(p.fd_mean + p.fd_std);
      out += "<line class=\"errorbar\" x1=\"" + fixed(x) + "\" y1=\"" + fixed(ylo) + "\" x2=\"" +
             fixed(x) + "\" y2=\"" + fixed(yhi) + "\" stroke=\"" + color + "\"/>\n";
      const bool clamped = p.fd_mean < floor;
      out += "<circle class=\"marker" + std::string(clamped ? " clamped" : "") + "\" cx=\"" +
             fixed(x) + "\" cy=\"" + fixed(py(p.fd_mean)) + "\" r=\"3\" fill=\"" +
             (clamped ? std::string("white") : color) + "\" stroke=\"" + color + "\"/>\n";
    }
    const double ly = y1 + 14.0 * static_cast<double>(ci);
    out += "<text class=\"legend\" x=\"" + fixed(x1 + 10) + "\" y=\"" + fixed(ly + 4) +
           "\" font-size=\"11\" fill=\"" + color + "\">" + detail::xml_escape(c.attribute) +
           "</text>\n</g>\n";
  }
  out += "</svg>\n";
  return out;
}

// Bars of normalized FD per region, "All" first.
inline std::string render_region_svg(const RegionReport& rep, const PlotStyle& style = {}) {
  if (rep.entries.empty()) throw DataError("nothing to render: empty region report");
  double top = 1.0;
  for (const auto& e : rep.entries) top = std::max(top, e.normalized_fd);
  top = std::ceil(top * 10.0) / 10.0;

  const double x0 = style.margin_left, x1 = style.width - style.margin_right / 4;
  const double y0 = style.height - style.margin_bottom, y1 = style.margin_top;
  const double slot = (x1 - x0) / static_cast<double>(rep.entries.size());
  auto py = [&](double v) { return y0 - v / top * (y0 - y1); };
  using detail::fixed;

  std::string out = detail::svg_open(style);
  out += "<g class=\"axis-y linear\">\n<line x1=\"" + fixed(x0) + "\" y1=\"" + fixed(y0) +
         "\" x2=\"" + fixed(x0) + "\" y2=\"" + fixed(y1) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = top * t / 5.0;
    out += "<text x=\"" + fixed(x0 - 6) + "\" y=\"" + fixed(py(v) + 3) +
           "\" text-anchor=\"end\" font-size=\"10\">" + fixed(v, 2) + "</text>\n";
  }
  out += "<text x=\"14\" y=\"" + fixed((y0 + y1) / 2) + "\" transform=\"rotate(-90 14 " +
         fixed((y0 + y1) / 2) +
         ")\" text-anchor=\"middle\" font-size=\"12\">normalized FD</text>\n</g>\n";
  out += "<line x1=\"" + fixed(x0) + "\" y1=\"" + fixed(y0) + "\" x2=\"" + fixed(x1) +
         "\" y2=\"" + fixed(y0) + "\" stroke=\"black\"/>\n";

  for (std::size_t i = 0; i < rep.entries.size(); ++i) {
    const auto& e = rep.entries[i];
    const double bx = x0 + slot * (static_cast<double>(i) + 0.15);
    const double bw = slot * 0.7;
    const double v = std::max(e.normalized_fd, 0.0);
    const std::string color = detail::kPalette[i % std::size(detail::kPalette)];
    out += "<g class=\"region\" data-region=\"" + detail::xml_escape(e.name) + "\">\n";
    out += "<rect class=\"bar\" data-value=\"" + format_double(e.normalized_fd) + "\" x=\"" +
           fixed(bx) + "\" y=\"" + fixed(py(v)) + "\" width=\"" + fixed(bw) + "\" height=\"" +
           fixed(y0 - py(v)) + "\" fill=\"" + color + "\"/>\n";
    out += "<text class=\"label\" x=\"" + fixed(bx + bw / 2) + "\" y=\"" + fixed(y0 + 14) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + detail::xml_escape(e.name) +
           "</text>\n</g>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace percept
