/* Copyright 2026 The vidseg Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "vidseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "vidseg/errors.hpp"

namespace vidseg {
namespace {

constexpr png_color kPalette[kNumClasses] = {
    {0, 0, 0}, {230, 190, 150}, {150, 130, 190}, {215, 65, 75}, {130, 80, 120}, {100, 70, 55}, {240, 230, 185},
};

struct File {
  std::FILE* f = nullptr;
  ~File() {
    if (f) std::fclose(f);
  }
};

[[noreturn]] void on_error(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

// libpng reports errors through longjmp; keep all C++ objects with
// non-trivial destructors outside the setjmp scope.
void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               const std::uint8_t* data, int channels) {
  File file;
  file.f = std::fopen(path.string().c_str(), "wb");
  if (!file.f) throw IoError("cannot open for writing: " + path.string());
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png allocation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels);
  }
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, file.f);
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_PLTE(png, info, kPalette, kNumClasses);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (failed) throw IoError("png write failed for " + path.string() + ": " + err);
  if (std::fflush(file.f) != 0) throw IoError("flush failed: " + path.string());
}

struct Decoded {
  int width = 0;
  int height = 0;
  int color_type = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

Decoded read_png(const std::filesystem::path& path) {
  File file;
  file.f = std::fopen(path.string().c_str(), "rb");
  if (!file.f) throw IoError("cannot open for reading: " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.f) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png allocation failed");
  }
  Decoded out;
  std::vector<png_bytep> rows;
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_init_io(png, file.f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.color_type = png_get_color_type(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    if (out.bit_depth < 8 && out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_packing(png);
    png_read_update_info(png, info);
    out.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.data.assign(stride * static_cast<std::size_t>(out.height), 0);
    rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (failed) throw IoError("png read failed for " + path.string() + ": " + err);
  return out;
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, const Image& image) {
  if (image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3 || image.width <= 0) {
    throw DimensionError("image buffer does not match its size");
  }
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, image.rgb.data(), 3);
}

Image read_png_rgb(const std::filesystem::path& path) {
  Decoded d = read_png(path);
  if (d.color_type != PNG_COLOR_TYPE_RGB || d.bit_depth != 8 || d.channels != 3) {
    throw IoError("expected 8-bit RGB PNG: " + path.string());
  }
  Image img(d.width, d.height);
  img.rgb = std::move(d.data);
  return img;
}

void write_png_labels(const std::filesystem::path& path, const LabelMap& labels) {
  if (labels.labels.size() != static_cast<std::size_t>(labels.width) * labels.height || labels.width <= 0) {
    throw DimensionError("label buffer does not match its size");
  }
  for (std::uint8_t v : labels.labels) {
    if (v >= kNumClasses) throw ValidationError("label value out of range");
  }
  write_png(path, labels.width, labels.height, PNG_COLOR_TYPE_PALETTE, labels.labels.data(), 1);
}

LabelMap read_png_labels(const std::filesystem::path& path) {
  Decoded d = read_png(path);
  if (d.color_type != PNG_COLOR_TYPE_PALETTE || d.channels != 1) {
    throw IoError("expected palette-indexed label PNG: " + path.string());
  }
  LabelMap lab(d.width, d.height);
  lab.labels = std::move(d.data);
  for (std::uint8_t v : lab.labels) {
    if (v >= kNumClasses) throw IoError("label value out of range in " + path.string());
  }
  return lab;
}

}  // namespace vidseg
