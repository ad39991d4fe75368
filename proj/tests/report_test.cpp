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

#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "oracles/synth.hpp"
#include "percept/report.hpp"
#include "tmpdir.hpp"

using percept::Leaderboard;
using percept::LeaderboardCell;
using percept::SweepCurve;
using percept::SweepPoint;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

LeaderboardCell cell(std::string gen, std::string space, double fd, double p, double r) {
  LeaderboardCell c;
  c.generator = std::move(gen);
  c.feature_space = std::move(space);
  c.fd = fd;
  c.precision = p;
  c.recall = r;
  return c;
}

SweepCurve curve_of(std::string name, std::vector<double> fds) {
  SweepCurve c;
  c.attribute = std::move(name);
  for (std::size_t i = 0; i < fds.size(); ++i) {
    const double d = fds.size() > 1 ? static_cast<double>(i) / (fds.size() - 1) : 0.0;
    c.points.push_back(SweepPoint{d, fds[i], fds[i] * 0.1, fds[i] * 0.5, fds[i] * 0.5});
  }
  return c;
}

}  // namespace

class LeaderboardTest : public ::testing::Test {
 protected:
  testing_support::TempDir dir;

  std::string put(const std::string& name, const percept::EmbeddingSet& s) {
    percept::write_embeddings(s, dir / name);
    return (dir / name).string();
  }
};

TEST_F(LeaderboardTest, BuildsAndRanks) {
  std::mt19937_64 rng(1);
  const auto real = synth::iid(300, 8, rng);
  const auto noisy = synth::iid(300, 8, rng, 0.0, 2.0);
  std::vector<float> pert(real.data().begin(), real.data().end());
  for (float& f : pert) f += 0.05f;
  const percept::EmbeddingSet near(real.dim(), real.count(), pert);
  const auto other_dim = synth::iid(300, 4, rng);

  const std::vector<percept::LeaderboardEntry> entries{
      {"copy", "incv3", put("real.emb", real), put("real.emb", real)},
      {"noisy", "incv3", put("real.emb", real), put("noisy.emb", noisy)},
      {"near", "incv3", put("real.emb", real), put("near.emb", near)},
      {"broken", "incv3", put("real.emb", real), put("d4.emb", other_dim)},
      {"copy", "swav", put("real.emb", real), put("real.emb", real)},
  };
  const auto board = percept::build_leaderboard(entries, 3);
  EXPECT_EQ(board.generators, (std::vector<std::string>{"copy", "noisy", "near", "broken"}));
  EXPECT_EQ(board.feature_spaces, (std::vector<std::string>{"incv3", "swav"}));

  const auto* copy = board.find("copy", "incv3");
  ASSERT_NE(copy, nullptr);
  EXPECT_NEAR(*copy->fd, 0.0, 1e-9);
  EXPECT_EQ(*copy->precision, 1.0);
  EXPECT_EQ(*copy->recall, 1.0);
  EXPECT_EQ(copy->fd_rank, 1);

  const auto* noisy_cell = board.find("noisy", "incv3");
  EXPECT_GT(*noisy_cell->fd, *board.find("near", "incv3")->fd);
  EXPECT_EQ(noisy_cell->fd_rank, 3);
  EXPECT_EQ(board.find("near", "incv3")->fd_rank, 2);

  const auto* broken = board.find("broken", "incv3");
  EXPECT_TRUE(broken->missing());
  EXPECT_NE(broken->error.find("dimension mismatch"), std::string::npos);
  EXPECT_EQ(broken->fd_rank, 0);
  EXPECT_EQ(board.find("copy", "swav")->fd_rank, 1);
  EXPECT_EQ(board.find("noisy", "swav"), nullptr);
}

TEST(Leaderboard, RankingProperties) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    Leaderboard b;
    b.feature_spaces = {"a", "b"};
    const int n = 1 + trial % 7;
    for (int g = 0; g < n; ++g) {
      for (const auto& s : b.feature_spaces) {
        b.cells.push_back(cell("g" + std::to_string(g), s, u(rng) * 10, u(rng), u(rng)));
      }
    }
    percept::rank_leaderboard(b);
    for (const auto& s : b.feature_spaces) {
      std::vector<const LeaderboardCell*> col;
      for (const auto& c : b.cells) {
        if (c.feature_space == s) col.push_back(&c);
      }
      const auto marks = static_cast<std::size_t>(std::min(n, 3));
      std::size_t fd_marked = 0;
      for (const auto* c : col) {
        if (c->fd_rank == 0) continue;
        ++fd_marked;
        // A marked cell beats every unmarked one and every worse-ranked one.
        for (const auto* o : col) {
          if (o->fd_rank == 0 || o->fd_rank > c->fd_rank) EXPECT_LE(*c->fd, *o->fd);
          if (o->recall_rank == 0 && c->recall_rank != 0) EXPECT_GE(*c->recall, *o->recall);
        }
      }
      EXPECT_EQ(fd_marked, marks);
    }
  }
}

TEST(Leaderboard, TiesKeepEntryOrder) {
  Leaderboard b;
  b.feature_spaces = {"x"};
  b.cells = {cell("p", "x", 1.0, 0.5, 0.5), cell("q", "x", 1.0, 0.5, 0.5),
             cell("r", "x", 1.0, 0.5, 0.5), cell("s", "x", 1.0, 0.5, 0.5)};
  percept::rank_leaderboard(b);
  EXPECT_EQ(b.cells[0].fd_rank, 1);
  EXPECT_EQ(b.cells[1].fd_rank, 2);
  EXPECT_EQ(b.cells[2].fd_rank, 3);
  EXPECT_EQ(b.cells[3].fd_rank, 0);
}

TEST(Leaderboard, CsvAndJsonRoundTrip) {
  Leaderboard b;
  b.generators = {"StyleGAN2, tuned", "plain"};
  b.feature_spaces = {"incv3"};
  b.cells = {cell("StyleGAN2, tuned", "incv3", 1.0 / 3.0, 0.7, 0.6),
             cell("plain", "incv3", 2.5, 0.1, 0.2)};
  LeaderboardCell missing;
  missing.generator = "plain";
  missing.feature_space = "clip";
  missing.error = "dimension mismatch: \"a\", b";
  b.feature_spaces.push_back("clip");
  b.cells.push_back(missing);
  percept::rank_leaderboard(b);

  const auto csv = percept::leaderboard_to_csv(b);
  const auto from_csv = percept::leaderboard_from_csv(csv);
  EXPECT_EQ(from_csv.cells, b.cells);
  EXPECT_EQ(from_csv.generators, b.generators);
  EXPECT_EQ(percept::leaderboard_to_csv(from_csv), csv);

  const auto from_json = percept::leaderboard_from_json(
      nlohmann::json::parse(percept::leaderboard_to_json(b).dump()));
  EXPECT_EQ(from_json.cells, b.cells);
  EXPECT_EQ(from_json.feature_spaces, b.feature_spaces);
  EXPECT_THROW(percept::leaderboard_from_csv("nope\n"), percept::DataError);
}

TEST(Leaderboard, EntriesJson) {
  const auto entries = percept::leaderboard_entries_from_json(
      nlohmann::json::parse(R"({"entries": [{"generator": "g", "feature_space": "f",
                                "real": "r.emb", "gen": "/abs/g.emb"}]})"),
      "/data");
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].real_path, std::filesystem::path("/data/r.emb"));
  EXPECT_EQ(entries[0].gen_path, std::filesystem::path("/abs/g.emb"));
  EXPECT_THROW(percept::leaderboard_entries_from_json(nlohmann::json::parse("{}"), "/"),
               percept::UsageError);
}

TEST(SweepPlot, SinglePoint) {
  const auto svg = percept::render_sweep_svg({curve_of("Smiling", {3.0})});
  EXPECT_EQ(count_of(svg, "<circle class=\"marker"), 1u);
  EXPECT_EQ(count_of(svg, "class=\"errorbar\""), 1u);
  EXPECT_NE(svg.find("data-scale=\"log10\""), std::string::npos);
}

TEST(SweepPlot, ElevenPointsOnLogAxis) {
  std::vector<double> fds;
  for (int i = 0; i <= 10; ++i) fds.push_back(0.01 * std::pow(2.0, i));
  const auto svg = percept::render_sweep_svg({curve_of("Smiling", fds), curve_of("Hat", fds)});
  EXPECT_EQ(count_of(svg, "<circle class=\"marker\""), 22u);
  EXPECT_EQ(count_of(svg, "class=\"errorbar\""), 22u);
  EXPECT_NE(svg.find("class=\"axis-y log\""), std::string::npos);
  EXPECT_NE(svg.find("FD (log scale)"), std::string::npos);
  EXPECT_NE(svg.find("data-attribute=\"Hat\""), std::string::npos);
  EXPECT_EQ(svg.find("clamped"), std::string::npos);
  // Log placement: equal ratios map to equal vertical steps.
  std::regex cy("class=\"marker\" cx=\"[0-9.]+\" cy=\"([0-9.]+)\"");
  std::vector<double> ys;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), cy); it != std::sregex_iterator();
       ++it) {
    ys.push_back(std::stod((*it)[1]));
  }
  ASSERT_EQ(ys.size(), 22u);
  for (std::size_t i = 2; i < 11; ++i) {
    EXPECT_NEAR(ys[i - 1] - ys[i], ys[i - 2] - ys[i - 1], 0.02);
  }
}

TEST(SweepPlot, ValuesBelowFloorAreMarkedClamped) {
  const auto svg = percept::render_sweep_svg({curve_of("null", {0.0, 1e-9, 0.5})});
  EXPECT_EQ(count_of(svg, "marker clamped"), 2u);
  EXPECT_THROW(percept::render_sweep_svg({}), percept::DataError);
}

TEST(SweepPlot, ByteDeterministic) {
  const std::vector<SweepCurve> c{curve_of("a", {1, 2, 3}), curve_of("b<&>", {0.5, 0.25, 4})};
  percept::PlotStyle style;
  style.title = "t";
  EXPECT_EQ(percept::render_sweep_svg(c, style), percept::render_sweep_svg(c, style));
  EXPECT_NE(percept::render_sweep_svg(c).find("b&lt;&amp;&gt;"), std::string::npos);
}

TEST(RegionPlot, BarsWithAllFirst) {
  percept::RegionReport rep;
  rep.all_fd = 10.0;
  rep.entries = {{"All", 10.0, 1.0, 100}, {"eyes", 4.0, 0.4, 90}, {"hat", 0.1, 0.01, 12}};
  const auto svg = percept::render_region_svg(rep);
  EXPECT_EQ(count_of(svg, "<rect class=\"bar\""), 3u);
  EXPECT_NE(svg.find("data-value=\"1\""), std::string::npos);
  EXPECT_NE(svg.find("data-value=\"0.4\""), std::string::npos);
  EXPECT_LT(svg.find(">All</text>"), svg.find(">eyes</text>"));
  EXPECT_EQ(svg, percept::render_region_svg(rep));
}
