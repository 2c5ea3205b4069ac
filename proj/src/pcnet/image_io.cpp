#include "pcnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "pcnet/errors.hpp"

namespace pcnet {

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image from_interleaved(const unsigned char* rgb, std::size_t height, std::size_t width, float max_value) {
  Image img(3, height, width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = rgb[(y * width + x) * 3 + c] / max_value;
  return img;
}

Image decode_png(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError("cannot decode PNG '" + path.string() + "': " + png.message);
  }
  return from_interleaved(rgb.data(), png.height, png.width, 255.f);
}

Image decode_ppm(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  const std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  auto next_token = [&]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] != '#') return tok;
      std::string rest;
      std::getline(in, rest);
    }
    throw IoError("truncated PPM header in '" + path.string() + "'");
  };
  const std::string magic = next_token();
  const long width = std::stol(next_token());
  const long height = std::stol(next_token());
  const long max_value = std::stol(next_token());
  if (width <= 0 || height <= 0 || max_value <= 0 || max_value > 255) {
    throw IoError("unsupported PPM geometry in '" + path.string() + "'");
  }
  const std::size_t count = static_cast<std::size_t>(width * height * 3);
  std::vector<unsigned char> rgb(count);
  if (magic == "P6") {
    in.get();  // single whitespace after maxval
    const auto offset = static_cast<std::size_t>(in.tellg());
    if (offset + count > bytes.size()) throw IoError("truncated PPM data in '" + path.string() + "'");
    std::copy_n(bytes.begin() + static_cast<long>(offset), count, rgb.begin());
  } else if (magic == "P3") {
    for (auto& v : rgb) v = static_cast<unsigned char>(std::stoi(next_token()));
  } else {
    throw IoError("unsupported PPM variant '" + magic + "' in '" + path.string() + "'");
  }
  return from_interleaved(rgb.data(), static_cast<std::size_t>(height), static_cast<std::size_t>(width),
                          static_cast<float>(max_value));
}

std::uint32_t le32(const std::vector<unsigned char>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

Image decode_bmp(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < 54) throw IoError("truncated BMP '" + path.string() + "'");
  const std::uint32_t offset = le32(bytes, 10);
  const auto width = static_cast<std::int32_t>(le32(bytes, 18));
  const auto raw_height = static_cast<std::int32_t>(le32(bytes, 22));
  const unsigned bpp = bytes[28] | (bytes[29] << 8);
  const std::uint32_t compression = le32(bytes, 30);
  if (width <= 0 || raw_height == 0 || (bpp != 24 && bpp != 32) || (compression != 0 && compression != 3)) {
    throw IoError("unsupported BMP variant in '" + path.string() + "'");
  }
  const bool bottom_up = raw_height > 0;
  const std::size_t height = static_cast<std::size_t>(bottom_up ? raw_height : -raw_height);
  const std::size_t bytes_pp = bpp / 8;
  const std::size_t stride = (static_cast<std::size_t>(width) * bytes_pp + 3) & ~std::size_t(3);
  if (offset + stride * height > bytes.size()) throw IoError("truncated BMP data in '" + path.string() + "'");
  std::vector<unsigned char> rgb(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t src_row = bottom_up ? height - 1 - y : y;
    const unsigned char* row = bytes.data() + offset + src_row * stride;
    for (std::size_t x = 0; x < static_cast<std::size_t>(width); ++x) {
      unsigned char* dst = rgb.data() + (y * static_cast<std::size_t>(width) + x) * 3;
      dst[0] = row[x * bytes_pp + 2];
      dst[1] = row[x * bytes_pp + 1];
      dst[2] = row[x * bytes_pp + 0];
    }
  }
  return from_interleaved(rgb.data(), height, static_cast<std::size_t>(width), 255.f);
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '3')) return decode_ppm(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return decode_bmp(bytes, path);
  throw IoError("undecodable image '" + path.string() + "' (expected PNG, PPM or BMP)");
}

std::uint8_t quantize_unit(float value) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.f, 1.f) * 255.f));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw UsageError("write_png: need 1 or 3 channels");
  std::vector<unsigned char> buffer(image.height * image.width * image.channels);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c)
        buffer[(y * image.width + x) * image.channels + c] = quantize_unit(image.at(c, y, x));
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + png.message);
  }
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (image.height == height && image.width == width) return image;
  Image out(image.channels, height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = image.at(c, y0, x0) * (1 - wx) + image.at(c, y0, x1) * wx;
        const double bottom = image.at(c, y1, x0) * (1 - wx) + image.at(c, y1, x1) * wx;
        out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

}  // namespace pcnet
