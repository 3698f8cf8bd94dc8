#pragma once

// Minimal PNG I/O on libpng: 8-bit RGB for color/mask images and 16-bit
// grayscale for depth maps. Row-major storage, top-left origin.

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "ndr/common.hpp"

namespace ndr {

struct ImageRgb8 {
  int width = 0, height = 0;
  std::vector<uint8_t> data;  // 3 bytes per pixel

  uint8_t* px(int x, int y) {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const uint8_t* px(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

struct ImageGray16 {
  int width = 0, height = 0;
  std::vector<uint16_t> data;

  uint16_t& at(int x, int y) {
    return data[static_cast<size_t>(y) * width + x];
  }
  uint16_t at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
};

namespace detail {

struct PngCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, PngCloser>;

}  // namespace detail

inline ImageRgb8 read_png_rgb8(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  NDR_CHECK(fp != nullptr, "read_png: cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  NDR_CHECK(png, "read_png: init failure");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("read_png: decode failure for " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_set_expand(png);  // palette/low-bit -> 8-bit
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA)
    png_set_strip_alpha(png);
  if (!(png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR))
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  ImageRgb8 img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  NDR_CHECK(png_get_channels(png, info) == 3,
            "read_png: unexpected channel count in " + path);
  img.data.resize(static_cast<size_t>(img.width) * img.height * 3);

  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = img.data.data() +
                                   static_cast<size_t>(y) * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png_rgb8(const std::string& path, const ImageRgb8& img) {
  NDR_CHECK(img.width > 0 && img.height > 0 &&
                img.data.size() ==
                    static_cast<size_t>(img.width) * img.height * 3,
            "write_png: bad image buffer");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  NDR_CHECK(fp != nullptr, "write_png: cannot open " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  NDR_CHECK(png, "write_png: init failure");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("write_png: encode failure for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(
                           img.data.data() + static_cast<size_t>(y) * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ImageGray16 read_png_gray16(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  NDR_CHECK(fp != nullptr, "read_png: cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  NDR_CHECK(png, "read_png: init failure");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("read_png: decode failure for " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  NDR_CHECK(png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
                png_get_bit_depth(png, info) == 16,
            "read_png: expected 16-bit grayscale in " + path);
  png_set_swap(png);  // PNG is big-endian on the wire
  png_read_update_info(png, info);

  ImageGray16 img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.data.resize(static_cast<size_t>(img.width) * img.height);

  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = reinterpret_cast<png_bytep>(
        img.data.data() + static_cast<size_t>(y) * img.width);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png_gray16(const std::string& path, const ImageGray16& img) {
  NDR_CHECK(img.width > 0 && img.height > 0 &&
                img.data.size() == static_cast<size_t>(img.width) * img.height,
            "write_png: bad image buffer");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  NDR_CHECK(fp != nullptr, "write_png: cannot open " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  NDR_CHECK(png, "write_png: init failure");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("write_png: encode failure for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_swap(png);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png,
                  reinterpret_cast<png_bytep>(const_cast<uint16_t*>(
                      img.data.data() + static_cast<size_t>(y) * img.width)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace ndr
