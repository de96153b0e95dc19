#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace smallseg::io {

/// Interleaved 8-bit image, row-major.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x, int c) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
};

ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

/// Single-strip uncompressed 32-bit float grayscale TIFF.
void write_tiff_f32(const std::string& path, int width, int height, const float* data);

}  // namespace smallseg::io
