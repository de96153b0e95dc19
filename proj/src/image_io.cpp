#include "smallseg/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace smallseg::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to read PNG " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  ImageU8 img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = channels;
  img.pixels.resize(static_cast<size_t>(w) * h * static_cast<size_t>(channels));
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.pixels.data() + static_cast<size_t>(y) * w * static_cast<size_t>(channels);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: channels must be 1 or 3");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to write PNG " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
        img.pixels.data() + static_cast<size_t>(y) * img.width * img.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

void put16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x & 0xFF));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
}
void put32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<std::uint8_t>((x >> (8 * i)) & 0xFF));
}
void put_entry(std::vector<std::uint8_t>& v, std::uint16_t tag, std::uint16_t type,
               std::uint32_t count, std::uint32_t value) {
  put16(v, tag);
  put16(v, type);
  put32(v, count);
  put32(v, value);
}

}  // namespace

void write_tiff_f32(const std::string& path, int width, int height, const float* data) {
  const std::uint32_t npix = static_cast<std::uint32_t>(width) * height;
  const std::uint32_t data_bytes = npix * 4;
  const std::uint32_t data_off = 8;
  const std::uint32_t ifd_off = data_off + data_bytes;

  std::vector<std::uint8_t> buf;
  buf.reserve(ifd_off + 2 + 12 * 10 + 4);
  // little-endian header
  buf.push_back('I');
  buf.push_back('I');
  put16(buf, 42);
  put32(buf, ifd_off);
  // pixel strip
  for (std::uint32_t i = 0; i < npix; ++i) {
    std::uint32_t bits;
    float f = data[i];
    std::memcpy(&bits, &f, 4);
    put32(buf, bits);
  }
  // IFD: 10 entries; types: 3 = SHORT, 4 = LONG
  put16(buf, 10);
  put_entry(buf, 256, 4, 1, static_cast<std::uint32_t>(width));    // ImageWidth
  put_entry(buf, 257, 4, 1, static_cast<std::uint32_t>(height));   // ImageLength
  put_entry(buf, 258, 3, 1, 32);                                   // BitsPerSample
  put_entry(buf, 259, 3, 1, 1);                                    // Compression: none
  put_entry(buf, 262, 3, 1, 1);                                    // Photometric: BlackIsZero
  put_entry(buf, 273, 4, 1, data_off);                             // StripOffsets
  put_entry(buf, 277, 3, 1, 1);                                    // SamplesPerPixel
  put_entry(buf, 278, 4, 1, static_cast<std::uint32_t>(height));   // RowsPerStrip
  put_entry(buf, 279, 4, 1, data_bytes);                           // StripByteCounts
  put_entry(buf, 339, 3, 1, 3);                                    // SampleFormat: IEEE float
  put32(buf, 0);                                                   // next IFD

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
  if (std::fwrite(buf.data(), 1, buf.size(), fp.get()) != buf.size())
    throw std::runtime_error("short write to " + path);
}

}  // namespace smallseg::io
