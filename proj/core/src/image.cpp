#include "mixteach/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <string>

#include "mixteach/errors.hpp"

namespace mixteach {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void PngError(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void PngWarning(png_structp, png_const_charp) {}

}  // namespace

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(ErrorCode::kInvalidArgument, "negative image size");
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                         static_cast<std::size_t>(x)) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  const std::size_t i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                         static_cast<std::size_t>(x)) * 3;
  data_[i] = c.r;
  data_[i + 1] = c.g;
  data_[i + 2] = c.b;
}

Image Image::Crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width_ || y0 + h > height_) {
    throw Error(ErrorCode::kInvalidArgument, "crop window outside image");
  }
  Image out(w, h);
  const std::size_t row_bytes = static_cast<std::size_t>(w) * 3;
  for (int y = 0; y < h; ++y) {
    const auto src = (static_cast<std::size_t>(y0 + y) * static_cast<std::size_t>(width_) +
                      static_cast<std::size_t>(x0)) * 3;
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(src), row_bytes,
                out.data_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(y) * row_bytes));
  }
  return out;
}

void Image::Paste(const Image& src, int x0, int y0) {
  if (x0 < 0 || y0 < 0 || x0 + src.width_ > width_ || y0 + src.height_ > height_) {
    throw Error(ErrorCode::kInvalidArgument, "paste window outside image");
  }
  const std::size_t row_bytes = static_cast<std::size_t>(src.width_) * 3;
  for (int y = 0; y < src.height_; ++y) {
    const auto dst = (static_cast<std::size_t>(y0 + y) * static_cast<std::size_t>(width_) +
                      static_cast<std::size_t>(x0)) * 3;
    std::copy_n(src.data_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(y) * row_bytes),
                row_bytes, data_.begin() + static_cast<std::ptrdiff_t>(dst));
  }
}

Image ReadPng(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::kFileNotFound, "cannot open image " + path.string());

  std::string what;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &what, PngError, PngWarning);
  if (!png) throw Error(ErrorCode::kIoFailure, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  Image image;
  std::vector<png_bytep> rows;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoFailure, "PNG decode failed for " + path.string() + ": " + what);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  image = Image(width, height);
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        image.data().data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width) * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void WritePng(const Image& image, const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::kIoFailure, "cannot write image " + path.string());

  std::string what;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &what, PngError, PngWarning);
  if (!png) throw Error(ErrorCode::kIoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoFailure, "PNG encode failed for " + path.string() + ": " + what);
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()),
               static_cast<png_uint_32>(image.height()), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* base = const_cast<std::uint8_t*>(image.data().data());
  for (int y = 0; y < image.height(); ++y) {
    rows[static_cast<std::size_t>(y)] =
        base + static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width()) * 3;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw Error(ErrorCode::kIoFailure, "flush failed: " + path.string());
}

}  // namespace mixteach
