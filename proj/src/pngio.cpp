#include "tsgan/pngio.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "tsgan/errors.hpp"

namespace tsgan::pngio {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

void write_png(const std::string& path, const uint8_t* data, int64_t height, int64_t width,
               int bit_depth, int color_type, int64_t row_bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("png info allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(data + y * row_bytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> read_png(const std::string& path, int64_t& height, int64_t& width,
                              int expect_depth, int expect_color, int64_t row_bytes_per_px) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("png reader allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("png info allocation failed");
  }
  std::vector<uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("not a readable png: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  if (png_get_bit_depth(png, info) != expect_depth ||
      png_get_color_type(png, info) != expect_color) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unexpected png format in " + path);
  }
  height = png_get_image_height(png, info);
  width = png_get_image_width(png, info);
  int64_t row_bytes = width * row_bytes_per_px;
  out.resize(static_cast<size_t>(height * row_bytes));
  for (int64_t y = 0; y < height; ++y)
    png_read_row(png, out.data() + y * row_bytes, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_gray8(const std::string& path, const std::vector<uint8_t>& pixels, int64_t height,
                 int64_t width) {
  if (static_cast<int64_t>(pixels.size()) != height * width)
    throw ShapeError("write_gray8: pixel count does not match dims");
  write_png(path, pixels.data(), height, width, 8, PNG_COLOR_TYPE_GRAY, width);
}

std::vector<uint8_t> read_gray8(const std::string& path, int64_t& height, int64_t& width) {
  return read_png(path, height, width, 8, PNG_COLOR_TYPE_GRAY, 1);
}

void write_gray16(const std::string& path, const std::vector<uint16_t>& pixels,
                  int64_t height, int64_t width) {
  if (static_cast<int64_t>(pixels.size()) != height * width)
    throw ShapeError("write_gray16: pixel count does not match dims");
  std::vector<uint8_t> rows(pixels.size() * 2);
  for (size_t i = 0; i < pixels.size(); ++i) {
    rows[2 * i] = static_cast<uint8_t>(pixels[i] >> 8);
    rows[2 * i + 1] = static_cast<uint8_t>(pixels[i] & 0xFF);
  }
  write_png(path, rows.data(), height, width, 16, PNG_COLOR_TYPE_GRAY, width * 2);
}

std::vector<uint16_t> read_gray16(const std::string& path, int64_t& height, int64_t& width) {
  std::vector<uint8_t> raw = read_png(path, height, width, 16, PNG_COLOR_TYPE_GRAY, 2);
  std::vector<uint16_t> out(raw.size() / 2);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  return out;
}

void write_rgb8(const std::string& path, const std::vector<uint8_t>& pixels, int64_t height,
                int64_t width) {
  if (static_cast<int64_t>(pixels.size()) != height * width * 3)
    throw ShapeError("write_rgb8: pixel count does not match dims");
  write_png(path, pixels.data(), height, width, 8, PNG_COLOR_TYPE_RGB, width * 3);
}

}  // namespace tsgan::pngio
