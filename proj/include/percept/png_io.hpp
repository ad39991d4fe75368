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

// 8-bit PNG reading and writing through libpng's simplified API.

#include <png.h>

#include <string>
#include <vector>

#include "percept/blur.hpp"
#include "percept/error.hpp"

namespace percept {

namespace detail {

struct PngImageGuard {
  png_image* img;
  ~PngImageGuard() { png_image_free(img); }
};

inline std::vector<std::uint8_t> read_png_format(const fs::path& path, png_uint_32 format,
                                                 std::size_t& width, std::size_t& height) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  PngImageGuard guard{&img};
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    throw DataError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  width = img.width;
  height = img.height;
  return buf;
}

inline void write_png_format(const fs::path& path, png_uint_32 format, std::size_t width,
                             std::size_t height, const std::vector<std::uint8_t>& buf) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DataError("cannot write PNG " + path.string() + ": " + msg);
  }
}

}  // namespace detail

// Any PNG is converted to 8-bit RGB.
inline Image read_png_rgb(const fs::path& path) {
  Image out;
  out.channels = 3;
  out.pixels = detail::read_png_format(path, PNG_FORMAT_RGB, out.width, out.height);
  return out;
}

inline void write_png_rgb(const Image& img, const fs::path& path) {
  if (img.channels != 3) throw DataError("write_png_rgb needs a 3-channel image");
  detail::write_png_format(path, PNG_FORMAT_RGB, img.width, img.height, img.pixels);
}

// Label maps must be single-channel 8-bit; the stored value is the label.
inline LabelMap read_png_labels(const fs::path& path) {
  png_image probe{};
  probe.version = PNG_IMAGE_VERSION;
  {
    detail::PngImageGuard guard{&probe};
    if (!png_image_begin_read_from_file(&probe, path.c_str())) {
      throw DataError("cannot read PNG " + path.string() + ": " + probe.message);
    }
    if ((probe.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_COLORMAP |
                         PNG_FORMAT_FLAG_ALPHA | PNG_FORMAT_FLAG_LINEAR)) != 0) {
      throw DataError("label map must be single-channel 8-bit: " + path.string());
    }
  }
  LabelMap out;
  out.labels = detail::read_png_format(path, PNG_FORMAT_GRAY, out.width, out.height);
  return out;
}

inline void write_png_labels(const LabelMap& lm, const fs::path& path) {
  detail::write_png_format(path, PNG_FORMAT_GRAY, lm.width, lm.height, lm.labels);
}

}  // namespace percept
