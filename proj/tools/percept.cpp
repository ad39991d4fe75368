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

// percept: FD / precision-recall metrics engine and sensitivity harness.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numerical failure.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "percept/percept.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::size_t threads = 0;
  bool threads_set = false;
  std::uint64_t seed = 0;
};

std::size_t thread_count(const Globals& g) {
  return percept::resolve_threads(g.threads_set ? g.threads : percept::threads_from_env(0));
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw percept::DataError("cannot open: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw percept::UsageError(p.string() + " is not valid JSON: " + e.what());
  }
}

// Writes to `out`, or stdout when `out` is empty.
std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t v = 0;
    auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || end != item.data() + item.size()) {
      throw percept::UsageError("bad size in --sizes: '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw percept::DataError("cannot open for writing: " + out);
  f << text;
  if (!f) throw percept::DataError("write failed: " + out);
}

percept::GaussianSummary load_summary(const fs::path& p, std::size_t threads) {
  const std::string magic = percept::sniff_magic(p);
  if (magic == "GSS1") return percept::read_summary(p);
  if (magic == "EMB1") return percept::summarize(percept::read_embeddings(p), threads);
  throw percept::DataError("unrecognized format: " + p.string());
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw percept::DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string fd_json(const percept::FdResult& r) {
  json j{{"total", r.total}, {"mean_term", r.mean_term}, {"trace_term", r.trace_term}};
  return j.dump() + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"percept: Frechet distance and precision/recall in deep feature spaces"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads (0 = one per core); falls back to "
                                         "PERCEPT_THREADS")
      ->each([&](const std::string&) { g.threads_set = true; });
  app.add_option("--seed", g.seed, "Seed for every randomized step");

  // stats
  auto* stats = app.add_subcommand("stats", "Summarize an EMB1 file into a GSS1 summary");
  std::string stats_in, stats_out;
  stats->add_option("--in", stats_in, "EMB1 input")->required();
  stats->add_option("--out", stats_out, "GSS1 output")->required();

  // fd
  auto* fd = app.add_subcommand("fd", "Frechet distance between two EMB1 or GSS1 files");
  std::vector<std::string> fd_inputs;
  std::string fd_out;
  bool fd_extrapolate = false;
  std::string fd_sizes;
  std::size_t fd_draws = 5;
  fd->add_option("inputs", fd_inputs, "Two EMB1 or GSS1 paths")->required()->expected(2);
  fd->add_option("--out", fd_out, "Write JSON here instead of stdout");
  fd->add_flag("--extrapolate", fd_extrapolate, "Bias-corrected FD by 1/N extrapolation (EMB1)");
  fd->add_option("--sizes", fd_sizes, "Comma-separated subsample sizes for --extrapolate");
  fd->add_option("--draws", fd_draws, "Draws per size for --extrapolate");

  // pr
  auto* pr = app.add_subcommand("pr", "k-NN precision and recall");
  std::string pr_real, pr_gen, pr_out;
  int pr_k = 3;
  std::size_t pr_budget_mb = 4096;
  pr->add_option("--real", pr_real, "Real EMB1")->required();
  pr->add_option("--gen", pr_gen, "Generated EMB1")->required();
  pr->add_option("--k", pr_k, "Neighbour rank defining the manifold radius");
  pr->add_option("--budget-mb", pr_budget_mb, "Working-buffer budget in MiB");
  pr->add_option("--out", pr_out, "Write JSON here instead of stdout");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Attribute-proportion sweep over a pair manifest");
  std::string sw_manifest, sw_out;
  std::size_t sw_size = 1000, sw_draws = 10;
  double sw_step = 0.1;
  sweep->add_option("--manifest", sw_manifest, "Pair manifest JSON")->required();
  sweep->add_option("--size", sw_size, "Identities per set");
  sweep->add_option("--draws", sw_draws, "Random draws per grid point");
  sweep->add_option("--step", sw_step, "Grid step for the proportion difference");
  sweep->add_option("--out", sw_out, "CSV output (stdout when omitted)");

  // blur
  auto* blur = app.add_subcommand("blur", "Write region-blurred counterfactual images");
  std::string bl_images, bl_masks, bl_regions, bl_out;
  blur->add_option("--images", bl_images, "Directory of RGB PNGs")->required();
  blur->add_option("--masks", bl_masks, "Directory of label-map PNGs (same filenames)")
      ->required();
  blur->add_option("--regions", bl_regions, "Region config JSON")->required();
  blur->add_option("--out", bl_out, "Output directory")->required();

  // region-report
  auto* rr = app.add_subcommand("region-report", "Normalized FD per blurred region");
  std::string rr_pairs, rr_out, rr_svg;
  rr->add_option("--pairs", rr_pairs, "JSON mapping region -> {original, blurred} EMB1 paths")
      ->required();
  rr->add_option("--out", rr_out, "CSV output (stdout when omitted)");
  rr->add_option("--svg", rr_svg, "Also render a bar chart");

  // leaderboard
  auto* lb = app.add_subcommand("leaderboard", "FD / precision / recall table with top-3 marks");
  std::string lb_entries, lb_out, lb_json;
  int lb_k = 3;
  std::size_t lb_budget_mb = 4096;
  lb->add_option("--entries", lb_entries, "Entries JSON")->required();
  lb->add_option("--k", lb_k, "k for precision/recall");
  lb->add_option("--budget-mb", lb_budget_mb, "Working-buffer budget in MiB");
  lb->add_option("--out", lb_out, "CSV output (stdout when omitted)");
  lb->add_option("--json", lb_json, "Also write JSON");

  // render
  auto* render = app.add_subcommand("render", "Render a sweep CSV or region report CSV as SVG");
  std::string rn_curve, rn_report, rn_out, rn_title;
  auto* curve_opt = render->add_option("--curve", rn_curve, "Sweep CSV");
  auto* report_opt = render->add_option("--report", rn_report, "Region report CSV");
  curve_opt->excludes(report_opt);
  render->add_option("--out", rn_out, "SVG output")->required();
  render->add_option("--title", rn_title, "Plot title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const std::size_t threads = thread_count(g);

    if (*stats) {
      const auto set = percept::read_embeddings(stats_in);
      percept::write_summary(percept::summarize(set, threads), stats_out);
    } else if (*fd) {
      if (fd_extrapolate) {
        const auto a = percept::read_embeddings(fd_inputs[0]);
        const auto b = percept::read_embeddings(fd_inputs[1]);
        percept::ExtrapolationOptions opt;
        opt.sizes = fd_sizes.empty()
                        ? percept::default_extrapolation_sizes(std::min(a.rows(), b.rows()))
                        : parse_sizes(fd_sizes);
        opt.draws_per_size = fd_draws;
        opt.seed = g.seed;
        opt.threads = threads;
        const auto r = percept::extrapolate_fd(a, b, opt);
        json j{{"fd_infinity", r.fd_infinity},   {"slope", r.slope},
               {"intercept_stderr", r.intercept_stderr}, {"sample_sizes", r.sample_sizes},
               {"fd_at_n", r.fd_at_n},           {"fd_std_at_n", r.fd_std_at_n},
               {"residuals", r.residuals}};
        emit(j.dump() + "\n", fd_out);
      } else {
        const auto r = percept::frechet_distance(load_summary(fd_inputs[0], threads),
                                                 load_summary(fd_inputs[1], threads));
        emit(fd_json(r), fd_out);
      }
    } else if (*pr) {
      percept::PrOptions opt;
      opt.threads = threads;
      opt.block_budget_bytes = pr_budget_mb << 20;
      const auto r = percept::precision_recall(percept::read_embeddings(pr_real),
                                               percept::read_embeddings(pr_gen), pr_k, opt);
      json j{{"precision", r.precision}, {"recall", r.recall}, {"k", r.k}};
      emit(j.dump() + "\n", pr_out);
    } else if (*sweep) {
      percept::SweepConfig cfg;
      cfg.set_size = sw_size;
      cfg.draws = sw_draws;
      cfg.diff_grid = percept::make_diff_grid(sw_step);
      cfg.seed = g.seed;
      cfg.threads = threads;
      const auto curve = percept::run_sweep(percept::read_manifest(sw_manifest), cfg);
      emit(percept::sweep_to_csv({curve}), sw_out);
    } else if (*blur) {
      const auto cfg = percept::read_region_config(bl_regions);
      std::vector<percept::RegionSpec> regions{percept::all_region()};
      regions.insert(regions.end(), cfg.regions.begin(), cfg.regions.end());
      const auto images = list_pngs(bl_images);
      fs::create_directories(bl_out);
      for (const auto& r : regions) fs::create_directories(fs::path(bl_out) / r.name);
      // presence[image][region]
      std::vector<std::vector<std::size_t>> counts(images.size());
      std::vector<std::vector<bool>> present(images.size());
      percept::detail::parallel_for(images.size(), threads, [&](std::size_t i) {
        const fs::path& img_path = images[i];
        const fs::path mask_path = fs::path(bl_masks) / img_path.filename();
        if (!fs::exists(mask_path)) {
          throw percept::DataError("missing label map for " + img_path.filename().string());
        }
        const auto img = percept::read_png_rgb(img_path);
        const auto labels = percept::read_png_labels(mask_path);
        if (img.width != labels.width || img.height != labels.height) {
          throw percept::DataError("image and label map dimensions differ for " +
                                   img_path.filename().string());
        }
        const auto blurred = percept::gaussian_blur(img, cfg.blur);
        for (const auto& r : regions) {
          auto spec = r;
          spec.min_pixels = percept::scaled_min_pixels(r.min_pixels, labels.width, labels.height,
                                                       cfg.blur.reference_resolution);
          const std::size_t n = percept::region_pixel_count(labels, spec);
          const bool here = n >= spec.min_pixels;
          counts[i].push_back(n);
          present[i].push_back(here);
          if (here) {
            percept::write_png_rgb(percept::composite_region(img, blurred, labels, spec),
                                   fs::path(bl_out) / r.name / img_path.filename());
          }
        }
      });
      std::string csv = "image,region,pixel_count,present\n";
      for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t r = 0; r < regions.size(); ++r) {
          csv += images[i].filename().string() + "," + regions[r].name + "," +
                 std::to_string(counts[i][r]) + "," + (present[i][r] ? "1" : "0") + "\n";
        }
      }
      emit(csv, (fs::path(bl_out) / "presence.csv").string());
    } else if (*rr) {
      const json j = read_json(rr_pairs);
      const fs::path base = fs::path(rr_pairs).parent_path();
      std::map<std::string, percept::EmbeddingSet> original, blurred;
      try {
        for (const auto& [name, v] : j.at("regions").items()) {
          fs::path o = v.at("original").get<std::string>();
          fs::path b = v.at("blurred").get<std::string>();
          if (o.is_relative()) o = base / o;
          if (b.is_relative()) b = base / b;
          original.emplace(name, percept::read_embeddings(o));
          blurred.emplace(name, percept::read_embeddings(b));
        }
      } catch (const json::exception& e) {
        throw percept::UsageError(std::string("invalid pairs file: ") + e.what());
      }
      const auto rep = percept::region_fd_report(original, blurred, threads);
      emit(percept::region_report_to_csv(rep), rr_out);
      if (!rr_svg.empty()) emit(percept::render_region_svg(rep), rr_svg);
    } else if (*lb) {
      const auto entries =
          percept::leaderboard_entries_from_json(read_json(lb_entries), fs::path(lb_entries).parent_path());
      percept::PrOptions opt;
      opt.threads = threads;
      opt.block_budget_bytes = lb_budget_mb << 20;
      const auto board = percept::build_leaderboard(entries, lb_k, opt);
      emit(percept::leaderboard_to_csv(board), lb_out);
      if (!lb_json.empty()) emit(percept::leaderboard_to_json(board).dump(2) + "\n", lb_json);
    } else if (*render) {
      percept::PlotStyle style;
      style.title = rn_title;
      if (!rn_curve.empty()) {
        emit(percept::render_sweep_svg(percept::sweep_from_csv(read_text(rn_curve)), style), rn_out);
      } else if (!rn_report.empty()) {
        emit(percept::render_region_svg(percept::region_report_from_csv(read_text(rn_report)), style),
             rn_out);
      } else {
        throw percept::UsageError("render needs --curve or --report");
      }
    }
  } catch (const percept::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const percept::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const percept::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
