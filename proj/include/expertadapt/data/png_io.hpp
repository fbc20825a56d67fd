#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "expertadapt/data/grid.hpp"

namespace expertadapt::data {

namespace detail {

using ::expertadapt::detail::strprintf;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngGray {
  int height = 0;
  int width = 0;
  int bit_depth = 0;               // 8 or 16
  std::vector<uint16_t> samples;   // row-major, raw sample values
};

/// Decodes a PNG into grayscale samples. Color/palette/alpha inputs are
/// rejected: the formats this library exchanges are single-channel only.
inline PngGray read_png_gray(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  std::vector<png_bytep> row_ptrs;
  PngGray out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode " + path);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path + ": expected a grayscale png");
  }
  if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (bit_depth == 16) png_set_swap(png);  // PNG is big-endian; read native LE
  png_read_update_info(png, info);

  out.height = static_cast<int>(png_get_image_height(png, info));
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.bit_depth = bit_depth == 16 ? 16 : 8;
  out.samples.resize(static_cast<size_t>(out.height) * static_cast<size_t>(out.width));

  size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<uint8_t> raw(static_cast<size_t>(out.height) * rowbytes);
  row_ptrs.resize(static_cast<size_t>(out.height));
  for (int r = 0; r < out.height; ++r)
    row_ptrs[static_cast<size_t>(r)] = raw.data() + static_cast<size_t>(r) * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  for (int r = 0; r < out.height; ++r) {
    const uint8_t* row = raw.data() + static_cast<size_t>(r) * rowbytes;
    for (int c = 0; c < out.width; ++c) {
      size_t i = static_cast<size_t>(r) * static_cast<size_t>(out.width) + static_cast<size_t>(c);
      if (out.bit_depth == 16) {
        uint16_t v;
        std::memcpy(&v, row + 2 * c, 2);
        out.samples[i] = v;
      } else {
        out.samples[i] = row[c];
      }
    }
  }
  return out;
}

inline void write_png_gray(const std::string& path, int height, int width, int bit_depth,
                           const std::vector<uint16_t>& samples) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  std::vector<uint8_t> row(static_cast<size_t>(width) * (bit_depth == 16 ? 2 : 1));
  for (int r = 0; r < height; ++r) {
    const uint16_t* src = samples.data() + static_cast<size_t>(r) * static_cast<size_t>(width);
    if (bit_depth == 16) {
      std::memcpy(row.data(), src, static_cast<size_t>(width) * 2);
    } else {
      for (int c = 0; c < width; ++c) row[static_cast<size_t>(c)] = static_cast<uint8_t>(src[c]);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

/// Reads an 8- or 16-bit grayscale PNG and rescales samples to [0, 1].
inline ImageGrid load_image_png(const std::string& path) {
  detail::PngGray raw = detail::read_png_gray(path);
  ImageGrid img(raw.height, raw.width);
  float scale = raw.bit_depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
  for (size_t i = 0; i < raw.samples.size(); ++i)
    img.pixels()[i] = static_cast<float>(raw.samples[i]) * scale;
  return img;
}

/// Writes an image as 16-bit grayscale, mapping [0, 1] to the full range.
inline void save_image_png(const std::string& path, const ImageGrid& image) {
  std::vector<uint16_t> samples(image.pixels().size());
  for (size_t i = 0; i < samples.size(); ++i) {
    float v = std::min(1.0f, std::max(0.0f, image.pixels()[i]));
    samples[i] = static_cast<uint16_t>(std::lround(v * 65535.0f));
  }
  detail::write_png_gray(path, image.height(), image.width(), 16, samples);
}

/// Reads an 8-bit grayscale PNG as a binary mask. Only sample values 0 and
/// 255 are accepted; anything else indicates a corrupted or resampled mask.
inline BinaryMask load_mask_png(const std::string& path) {
  detail::PngGray raw = detail::read_png_gray(path);
  if (raw.bit_depth != 8) throw DataError(path + ": masks must be 8-bit");
  BinaryMask mask(raw.height, raw.width);
  for (size_t i = 0; i < raw.samples.size(); ++i) {
    uint16_t v = raw.samples[i];
    if (v != 0 && v != 255)
      throw DataError(detail::strprintf("%s: mask sample %u is neither 0 nor 255", path.c_str(),
                                        static_cast<unsigned>(v)));
    mask.pixels()[i] = v == 255 ? 1 : 0;
  }
  return mask;
}

/// Writes a binary mask as 8-bit grayscale with values 0 and 255.
inline void save_mask_png(const std::string& path, const BinaryMask& mask) {
  std::vector<uint16_t> samples(mask.pixels().size());
  for (size_t i = 0; i < samples.size(); ++i) samples[i] = mask.pixels()[i] ? 255 : 0;
  detail::write_png_gray(path, mask.height(), mask.width(), 8, samples);
}

}  // namespace expertadapt::data
