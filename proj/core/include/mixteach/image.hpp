#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mixteach {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Interleaved 8-bit RGB raster, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);

  const std::vector<std::uint8_t>& data() const noexcept { return data_; }
  std::vector<std::uint8_t>& data() noexcept { return data_; }

  // Copy of the half-open pixel window [x0, x0+w) x [y0, y0+h); must lie
  // inside the image.
  Image Crop(int x0, int y0, int w, int h) const;
  // Writes `src` with its top-left at (x0, y0); must fit.
  void Paste(const Image& src, int x0, int y0);

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// 8-bit RGB PNG. Grey, palette and alpha inputs are converted to RGB on read.
// Writes use fixed encoder settings so identical rasters give identical bytes.
Image ReadPng(const std::filesystem::path& path);
void WritePng(const Image& image, const std::filesystem::path& path);

}  // namespace mixteach
