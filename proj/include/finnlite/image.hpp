/*
 * Copyright 2026 The finnlite Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <csetjmp>
#include <cstdio>
#include <filesystem>

#include <jpeglib.h>
#include <png.h>

#include "finnlite/tensor.hpp"

namespace finnlite {

// 8-bit RGB image, row-major HWC.
struct Image {
  int64_t width = 0, height = 0;
  std::vector<uint8_t> rgb;  // height*width*3

  Image() = default;
  Image(int64_t w, int64_t h)
      : width(w), height(h), rgb(static_cast<size_t>(w * h * 3), 0) {}

  uint8_t* pixel(int64_t x, int64_t y) {
    return rgb.data() + (y * width + x) * 3;
  }
  const uint8_t* pixel(int64_t x, int64_t y) const {
    return rgb.data() + (y * width + x) * 3;
  }

  Image crop(int64_t x0, int64_t y0, int64_t w, int64_t h) const {
    Image out(w, h);
    for (int64_t y = 0; y < h; ++y)
      std::copy_n(pixel(x0, y0 + y), w * 3, out.pixel(0, y));
    return out;
  }
};

// CHW tensor with values k/256, the executor's input grid.
inline FTensor image_to_tensor(const Image& img) {
  FTensor t({1, 3, img.height, img.width});
  const int64_t hw = img.height * img.width;
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x) {
      const uint8_t* p = img.pixel(x, y);
      for (int64_t c = 0; c < 3; ++c)
        t.data[static_cast<size_t>(c * hw + y * img.width + x)] =
            static_cast<double>(p[c]) / 256.0;
    }
  return t;
}

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

inline void write_png(const Image& img, const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot open for writing: " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw Error("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixel(0, y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image read_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open for reading: " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw Error("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng read failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  // normalize everything to 8-bit RGB
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_set_palette_to_rgb(png);
  png_read_update_info(png, info);
  Image img(png_get_image_width(png, info), png_get_image_height(png, info));
  for (int64_t y = 0; y < img.height; ++y)
    png_read_row(png, img.pixel(0, y), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

namespace detail {

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jmp;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(mgr->jmp, 1);
}

}  // namespace detail

inline Image read_jpeg(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open for reading: " + path.string());
  jpeg_decompress_struct cinfo;
  detail::JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  if (setjmp(jerr.jmp)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error("libjpeg read failed: " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  Image img(cinfo.output_width, cinfo.output_height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixel(0, cinfo.output_scanline);
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

inline Image read_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".png") return read_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
  throw Error("unsupported image format '" + ext + "' (PNG and JPEG only)");
}

// --------------------------------------------------------------------------
// HSV conversion for the colour-threshold pre-labeler
// --------------------------------------------------------------------------

struct Hsv {
  double h = 0;  // degrees [0, 360)
  double s = 0;  // [0, 1]
  double v = 0;  // [0, 1]
};

inline Hsv rgb_to_hsv(uint8_t r8, uint8_t g8, uint8_t b8) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? d / mx : 0.0;
  if (d > 0.0) {
    if (mx == r)
      out.h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
    else if (mx == g)
      out.h = 60.0 * ((b - r) / d + 2.0);
    else
      out.h = 60.0 * ((r - g) / d + 4.0);
  }
  return out;
}

// Hue band with wrap-around, plus saturation/value floors. The default band
// covers the red-purple tones of ripe red grapes; it is a heuristic default,
// exposed as configuration.
struct HsvRange {
  double h_lo = 280.0, h_hi = 25.0;  // wraps through 360
  double s_min = 0.25;
  double v_min = 0.12;

  bool contains(const Hsv& p) const {
    if (p.s < s_min || p.v < v_min) return false;
    if (h_lo <= h_hi) return p.h >= h_lo && p.h <= h_hi;
    return p.h >= h_lo || p.h <= h_hi;  // wrapped band
  }
};

}  // namespace finnlite
