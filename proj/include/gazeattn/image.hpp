#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gazeattn {

/// 8-bit RGB raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0) : width(w), height(h), rgb(std::size_t(w) * h * 3, fill) {}

  std::uint8_t* pixel(int x, int y) { return rgb.data() + (std::size_t(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const { return rgb.data() + (std::size_t(y) * width + x) * 3; }
};

void write_png(const std::filesystem::path& path, const Image& image);
/// Gray, palette, and alpha inputs are converted to RGB.
Image read_png(const std::filesystem::path& path);

}  // namespace gazeattn
