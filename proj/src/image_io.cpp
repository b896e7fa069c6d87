#include "structrep/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

namespace structrep {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(float v) {
  const long q = std::lround(double(v) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
}

// libpng reports errors by longjmp, so the setjmp frames below own no C++
// objects.
bool write_body(png_structp png, png_infop info, std::FILE* file, const ImageRaster& image, std::uint8_t* row,
                std::size_t row_len) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, file);
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    const float* src = image.data.data() + std::size_t(y) * row_len;
    for (std::size_t i = 0; i < row_len; ++i) row[i] = to_byte(src[i]);
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  return true;
}

bool read_header(png_structp png, png_infop info, std::FILE* file) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, file);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  return true;
}

bool read_rows(png_structp png, float* dst, int height, std::size_t row_len, std::uint8_t* row) {
  if (setjmp(png_jmpbuf(png))) return false;
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row, nullptr);
    for (std::size_t i = 0; i < row_len; ++i) dst[std::size_t(y) * row_len + i] = float(row[i] / 255.0);
  }
  return true;
}

}  // namespace

ImageRaster quantize_8bit(const ImageRaster& image) {
  ImageRaster out = image;
  for (auto& v : out.data) v = static_cast<float>(to_byte(v) / 255.0);
  return out;
}

void write_png(const std::filesystem::path& path, const ImageRaster& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ShapeError("write_png: unsupported channel count " + std::to_string(image.channels));
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed for '" + path.string() + "'");
  }
  std::vector<std::uint8_t> row(std::size_t(image.width) * image.channels);
  const bool ok = write_body(png, info, file.get(), image, row.data(), row.size());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw IoError("failed writing PNG '" + path.string() + "'");
}

ImageRaster read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path.string() + "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed for '" + path.string() + "'");
  }
  if (!read_header(png, info, file.get())) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("malformed PNG '" + path.string() + "'");
  }
  const int channels = png_get_channels(png, info);
  ImageRaster img(static_cast<int>(png_get_image_height(png, info)),
                  static_cast<int>(png_get_image_width(png, info)), channels);
  std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
  const bool ok = read_rows(png, img.data.data(), img.height, std::size_t(img.width) * channels, row.data());
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw IoError("malformed PNG '" + path.string() + "'");
  return img;
}

}  // namespace structrep
