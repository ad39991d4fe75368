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

// Region-localized Gaussian blur and the normalized per-region FD report.
//
// A region counterfactual keeps every pixel of the original image except
// those whose segmentation label belongs to the region, which are taken from
// a full-image Gaussian blur. Region FDs are normalized by the FD of the
// fully blurred ("All") corpus.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "percept/embedio.hpp"
#include "percept/error.hpp"
#include "percept/frechet.hpp"
#include "percept/sweep.hpp"

namespace percept {

// Interleaved 8-bit image, row-major (H x W x channels).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

// Single-channel segmentation map; the value is the label index.
struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
};

struct RegionSpec {
  std::string name;
  std::set<int> labels;
  std::size_t min_pixels = 64;
};

struct BlurParams {
  int kernel_size = 111;
  double sigma = 100.0;
  int reference_resolution = 512;
};

inline void validate(const BlurParams& p) {
  if (p.kernel_size < 3 || p.kernel_size % 2 == 0) {
    throw UsageError("kernel_size must be odd and >= 3");
  }
  if (!(p.sigma > 0.0)) throw UsageError("sigma must be positive");
  if (p.reference_resolution <= 0) throw UsageError("reference_resolution must be positive");
}

inline void validate(const RegionSpec& r) {
  if (r.name.empty()) throw UsageError("region name is empty");
  if (r.labels.empty()) throw UsageError("region '" + r.name + "' has no labels");
  if (r.min_pixels < 1) throw UsageError("region '" + r.name + "' min_pixels must be >= 1");
}

// Kernel size and sigma scaled to an image of the given width.
struct ScaledKernel {
  int size = 0;
  double sigma = 0.0;
};

inline ScaledKernel scale_kernel(const BlurParams& p, std::size_t width) {
  validate(p);
  const double f = static_cast<double>(width) / p.reference_resolution;
  auto size = static_cast<int>(std::lround(p.kernel_size * f));
  if (size < 1) {
    throw DataError("empty kernel after scaling to width " + std::to_string(width));
  }
  if (size % 2 == 0) ++size;
  return {size, p.sigma * f};
}

// Normalized 1-D Gaussian taps, centre at index size/2.
inline std::vector<double> gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw UsageError("kernel size must be odd and positive");
  if (!(sigma > 0.0)) throw UsageError("sigma must be positive");
  const int half = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + half)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

// Reflect-101 border index (... c b | a b c d | c b ...).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * n - 2);
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

// Separable convolution with the given taps, reflect-101 borders, rounded
// to nearest and clamped to [0, 255].
inline Image convolve_separable(const Image& img, const std::vector<double>& taps) {
  const std::size_t w = img.width, h = img.height, ch = img.channels;
  if (img.pixels.size() != w * h * ch) throw DataError("image buffer size mismatch");
  const auto half = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const std::size_t row_len = w * ch;

  // Horizontal pass into doubles.
  std::vector<double> tmp(w * h * ch, 0.0);
  std::vector<double> padded((w + 2 * static_cast<std::size_t>(half)) * ch);
  for (std::size_t y = 0; y < h; ++y) {
    const std::uint8_t* src = img.pixels.data() + y * row_len;
    for (std::ptrdiff_t x = -half; x < static_cast<std::ptrdiff_t>(w) + half; ++x) {
      const std::size_t sx = reflect_index(x, w);
      for (std::size_t c = 0; c < ch; ++c) {
        padded[static_cast<std::size_t>(x + half) * ch + c] = src[sx * ch + c];
      }
    }
    double* dst = tmp.data() + y * row_len;
    for (std::size_t t = 0; t < taps.size(); ++t) {
      const double kv = taps[t];
      const double* p = padded.data() + t * ch;
      for (std::size_t i = 0; i < row_len; ++i) dst[i] += kv * p[i];
    }
  }

  // Vertical pass, whole rows at a time.
  Image out{w, h, ch, std::vector<std::uint8_t>(w * h * ch)};
  std::vector<double> acc(row_len);
  for (std::size_t y = 0; y < h; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < taps.size(); ++t) {
      const std::size_t sy =
          reflect_index(static_cast<std::ptrdiff_t>(y) + static_cast<std::ptrdiff_t>(t) - half, h);
      const double kv = taps[t];
      const double* src = tmp.data() + sy * row_len;
      for (std::size_t i = 0; i < row_len; ++i) acc[i] += kv * src[i];
    }
    std::uint8_t* dst = out.pixels.data() + y * row_len;
    for (std::size_t i = 0; i < row_len; ++i) {
      dst[i] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(acc[i]), 0.0, 255.0));
    }
  }
  return out;
}

// Full-image Gaussian blur with resolution-scaled parameters.
inline Image gaussian_blur(const Image& img, const BlurParams& params) {
  const ScaledKernel k = scale_kernel(params, img.width);
  return convolve_separable(img, gaussian_kernel(k.size, k.sigma));
}

inline bool in_region(std::uint8_t label, const RegionSpec& spec) {
  return spec.labels.count(static_cast<int>(label)) != 0;
}

// Pixels of `original` with region pixels replaced from `blurred`.
inline Image composite_region(const Image& original, const Image& blurred,
                              const LabelMap& labelmap, const RegionSpec& spec) {
  if (original.width != labelmap.width || original.height != labelmap.height ||
      blurred.width != original.width || blurred.height != original.height ||
      blurred.channels != original.channels) {
    throw DataError("image and label map dimensions differ");
  }
  Image out = original;
  const std::size_t ch = original.channels;
  for (std::size_t p = 0; p < labelmap.labels.size(); ++p) {
    if (!in_region(labelmap.labels[p], spec)) continue;
    for (std::size_t c = 0; c < ch; ++c) out.pixels[p * ch + c] = blurred.pixels[p * ch + c];
  }
  return out;
}

inline Image blur_region(const Image& image, const LabelMap& labelmap, const RegionSpec& spec,
                         const BlurParams& params) {
  if (image.width != labelmap.width || image.height != labelmap.height) {
    throw DataError("image and label map dimensions differ");
  }
  return composite_region(image, gaussian_blur(image, params), labelmap, spec);
}

inline std::size_t region_pixel_count(const LabelMap& labelmap, const RegionSpec& spec) {
  std::size_t n = 0;
  for (std::uint8_t l : labelmap.labels) n += in_region(l, spec) ? 1 : 0;
  return n;
}

inline bool region_present(const LabelMap& labelmap, const RegionSpec& spec) {
  return region_pixel_count(labelmap, spec) >= spec.min_pixels;
}

// Presence threshold for an H x W map, scaled by area from the reference
// resolution (never below 1).
inline std::size_t scaled_min_pixels(std::size_t min_pixels, std::size_t width,
                                     std::size_t height, int reference_resolution) {
  const double area = static_cast<double>(width) * static_cast<double>(height);
  const double ref = static_cast<double>(reference_resolution) * reference_resolution;
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(min_pixels) * area / ref)));
}

// "All" covers every label value; it is always processed.
inline RegionSpec all_region() {
  RegionSpec r{"All", {}, 1};
  for (int l = 0; l < 256; ++l) r.labels.insert(l);
  return r;
}

struct RegionConfig {
  std::vector<RegionSpec> regions;
  BlurParams blur;
};

// {"regions": [{"name": "hat", "labels": [18], "min_pixels": 64}, ...],
//  "blur": {"kernel_size": 111, "sigma": 100, "reference_resolution": 512}}
inline RegionConfig region_config_from_json(const nlohmann::json& j) {
  RegionConfig cfg;
  try {
    for (const auto& r : j.at("regions")) {
      RegionSpec spec;
      spec.name = r.at("name").get<std::string>();
      for (int l : r.at("labels").get<std::vector<int>>()) {
        if (l < 0 || l > 255) throw UsageError("label index out of range in " + spec.name);
        spec.labels.insert(l);
      }
      spec.min_pixels = r.value("min_pixels", std::size_t{64});
      validate(spec);
      if (spec.name == "All") throw UsageError("'All' is implicit and may not be configured");
      cfg.regions.push_back(std::move(spec));
    }
    if (j.contains("blur")) {
      const auto& b = j.at("blur");
      cfg.blur.kernel_size = b.value("kernel_size", cfg.blur.kernel_size);
      cfg.blur.sigma = b.value("sigma", cfg.blur.sigma);
      cfg.blur.reference_resolution = b.value("reference_resolution", cfg.blur.reference_resolution);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("invalid region config: ") + e.what());
  }
  validate(cfg.blur);
  return cfg;
}

inline RegionConfig read_region_config(const fs::path& source) {
  std::ifstream in(source);
  if (!in) throw DataError("cannot open region config: " + source.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("region config is not valid JSON: " + std::string(e.what()));
  }
  return region_config_from_json(j);
}

struct RegionEntry {
  std::string name;
  double raw_fd = 0.0;
  double normalized_fd = 0.0;
  std::uint64_t image_count = 0;
};

struct RegionReport {
  std::vector<RegionEntry> entries;  // "All" first, then by name
  double all_fd = 0.0;
};

inline RegionReport region_fd_report(const std::map<std::string, EmbeddingSet>& original,
                                     const std::map<std::string, EmbeddingSet>& blurred,
                                     std::size_t threads = 1) {
  if (!original.count("All") || !blurred.count("All")) {
    throw DataError("region report needs an \"All\" entry");
  }
  for (const auto& [name, set] : original) {
    auto it = blurred.find(name);
    if (it == blurred.end()) throw DataError("region '" + name + "' has no blurred set");
    if (it->second.count() != set.count() || it->second.dim() != set.dim()) {
      throw DataError("region '" + name + "': original and blurred sets are not row-aligned");
    }
  }
  for (const auto& [name, set] : blurred) {
    if (!original.count(name)) throw DataError("region '" + name + "' has no original set");
  }

  RegionReport rep;
  rep.all_fd = fd_between_sets(original.at("All"), blurred.at("All"), threads).total;
  if (!(rep.all_fd > 0.0)) throw NumericalError("\"All\" FD is zero; cannot normalize");
  rep.entries.push_back({"All", rep.all_fd, 1.0, original.at("All").count()});
  for (const auto& [name, set] : original) {
    if (name == "All") continue;
    const double raw = fd_between_sets(set, blurred.at(name), threads).total;
    rep.entries.push_back({name, raw, raw / rep.all_fd, set.count()});
  }
  return rep;
}

inline constexpr const char* kRegionCsvHeader = "region,raw_fd,normalized_fd,image_count";

inline std::string region_report_to_csv(const RegionReport& rep) {
  std::string out = std::string(kRegionCsvHeader) + "\n";
  for (const auto& e : rep.entries) {
    out += e.name + "," + format_double(e.raw_fd) + "," + format_double(e.normalized_fd) + "," +
           std::to_string(e.image_count) + "\n";
  }
  return out;
}

inline RegionReport region_report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRegionCsvHeader) {
    throw DataError("region CSV header must be: " + std::string(kRegionCsvHeader));
  }
  RegionReport rep;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 4) throw DataError("region CSV row needs 4 cells: " + line);
    RegionEntry e{cells[0], parse_double(cells[1]), parse_double(cells[2]),
                  std::stoull(cells[3])};
    if (e.name == "All") rep.all_fd = e.raw_fd;
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace percept
