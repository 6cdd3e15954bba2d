#include "rondo/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "rondo/errors.hpp"

namespace rondo {

namespace {

void write_png(const std::filesystem::path& file, int width, int height, int color_type, int channels,
               std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw ContractError("png: pixel buffer size does not match dimensions");
  }
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(file.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + file.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + file.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_gray_png(const std::filesystem::path& file, int width, int height, std::span<const std::uint8_t> pixels) {
  write_png(file, width, height, PNG_COLOR_TYPE_GRAY, 1, pixels);
}

void write_rgb_png(const std::filesystem::path& file, int width, int height, std::span<const std::uint8_t> pixels) {
  write_png(file, width, height, PNG_COLOR_TYPE_RGB, 3, pixels);
}

}  // namespace rondo
