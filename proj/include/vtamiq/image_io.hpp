#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vtamiq/errors.hpp"

namespace vtamiq {

/// 8-bit interleaved RGB image.
struct Rgb8Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  std::uint8_t& at(std::size_t r, std::size_t c, std::size_t ch) { return pixels[(r * width + c) * 3 + ch]; }
  std::uint8_t at(std::size_t r, std::size_t c, std::size_t ch) const { return pixels[(r * width + c) * 3 + ch]; }
};

namespace detail {

inline Rgb8Image read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot decode '" + path.string() + "': " + image.message);
  }
  if (!(image.format & PNG_FORMAT_FLAG_COLOR)) {
    png_image_free(&image);
    throw ChannelError("'" + path.string() + "' is not an RGB image");
  }
  image.format = PNG_FORMAT_RGB;
  Rgb8Image img;
  img.width = image.width;
  img.height = image.height;
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    throw IoError("cannot decode '" + path.string() + "': " + image.message);
  }
  return img;
}

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

/// Uncompressed 24-bit BMP.
inline Rgb8Image read_bmp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 54 || bytes[0] != 'B' || bytes[1] != 'M') throw IoError("'" + path.string() + "' is not a BMP file");
  const std::uint32_t offset = le32(&bytes[10]);
  const auto width = static_cast<std::int32_t>(le32(&bytes[18]));
  const auto height = static_cast<std::int32_t>(le32(&bytes[22]));
  const std::uint16_t bpp = le16(&bytes[28]);
  const std::uint32_t compression = le32(&bytes[30]);
  if (bpp != 24 || compression != 0) throw IoError("'" + path.string() + "': only uncompressed 24-bit BMP is supported");
  if (width <= 0 || height == 0) throw IoError("'" + path.string() + "': bad BMP dimensions");
  const bool bottom_up = height > 0;
  Rgb8Image img;
  img.width = static_cast<std::size_t>(width);
  img.height = static_cast<std::size_t>(bottom_up ? height : -height);
  const std::size_t stride = (img.width * 3 + 3) & ~std::size_t{3};
  if (bytes.size() < offset + stride * img.height) throw IoError("'" + path.string() + "': truncated BMP");
  img.pixels.resize(img.width * img.height * 3);
  for (std::size_t r = 0; r < img.height; ++r) {
    const std::size_t src_row = bottom_up ? img.height - 1 - r : r;
    const unsigned char* src = &bytes[offset + src_row * stride];
    for (std::size_t c = 0; c < img.width; ++c) {
      img.at(r, c, 0) = src[c * 3 + 2];
      img.at(r, c, 1) = src[c * 3 + 1];
      img.at(r, c, 2) = src[c * 3 + 0];
    }
  }
  return img;
}

}  // namespace detail

/// Decodes a PNG or BMP file to 8-bit RGB. Greyscale input raises ChannelError.
inline Rgb8Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image '" + path.string() + "' does not exist");
  std::ifstream probe(path, std::ios::binary);
  char magic[2] = {0, 0};
  probe.read(magic, 2);
  if (magic[0] == 'B' && magic[1] == 'M') return detail::read_bmp(path);
  return detail::read_png(path);
}

/// Writes an 8-bit PNG with 1 (grey) or 3 (RGB) channels.
inline void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, std::size_t channels,
                      const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw ContractError("write_png: channels must be 1 or 3");
  if (pixels.size() != width * height * channels) throw DimensionError("write_png: pixel buffer size mismatch");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write '" + path.string() + "': " + image.message);
  }
}

inline void write_png(const std::filesystem::path& path, const Rgb8Image& img) {
  write_png(path, img.width, img.height, 3, img.pixels);
}

}  // namespace vtamiq
