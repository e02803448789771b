#pragma once

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "atrium/error.hpp"

namespace atrium {

/// 8-bit RGB raster, row-major, top row first.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0) {}

  std::uint8_t* pixel(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* pixel(int x, int y) const { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

namespace detail {

struct PngBuffer {
  std::vector<std::uint8_t> bytes;
  std::size_t read_pos = 0;
};

inline void png_write_to_buffer(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  buf->bytes.insert(buf->bytes.end(), data, data + len);
}

inline void png_read_from_buffer(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  if (buf->read_pos + len > buf->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(data, buf->bytes.data() + buf->read_pos, len);
  buf->read_pos += len;
}

}  // namespace detail

/// Encodes without ancillary chunks (no timestamps), so identical images
/// give identical bytes.
inline std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw Error(ErrorCode::InvalidArgument, "image has no pixels");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::InvalidArgument, "libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  detail::PngBuffer buf;
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::InvalidArgument, "PNG encoding failed");
  }
  png_set_write_fn(png, &buf, detail::png_write_to_buffer, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(img.pixel(0, y));
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(buf.bytes);
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw Error(ErrorCode::MalformedFile, "not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::MalformedFile, "libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  detail::PngBuffer buf{bytes, 0};
  Image img;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::MalformedFile, "PNG decoding failed");
  }
  png_set_read_fn(png, &buf, detail::png_read_from_buffer);
  png_read_png(png, info, PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA,
               nullptr);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);
  img = Image(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.pixel(x, y)[c] = rows[y][x * channels + (channels >= 3 ? c : 0)];
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png_file(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::MalformedFile, "cannot write " + path.string());
}

}  // namespace atrium
