#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace pcnet {

// Planar (CHW) float image, values nominally in [0,1] before standardization.
struct Image {
  std::size_t channels = 3;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), pixels(c * h * w, 0.f) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  bool operator==(const Image&) const = default;
};

// Decodes PNG, binary/ASCII PPM (P6/P3) or uncompressed 24/32-bit BMP into a
// 3-channel image scaled to [0,1]. Throws IoError naming the path.
Image read_image(const std::filesystem::path& path);

// 8-bit PNG, grayscale for 1 channel, RGB for 3. Values are clamped to
// [0,1] and rounded to the nearest of 256 levels.
void write_png(const std::filesystem::path& path, const Image& image);

// Bilinear resize with half-pixel centres.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

std::uint8_t quantize_unit(float value);

}  // namespace pcnet
