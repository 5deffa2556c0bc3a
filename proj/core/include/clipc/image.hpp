#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace clipc {

/// Decoded 8-bit RGB raster, interleaved HWC.
struct RasterImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  RasterImage() = default;
  RasterImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const RasterImage&) const = default;
};

enum class Stage { kRaw8, kNormalized };

/// Planar float image, 3 x H x W. In the raw stage values lie in [0, 255].
struct ImageTensor {
  int height = 0;
  int width = 0;
  Stage stage = Stage::kRaw8;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, Stage s)
      : height(h), width(w), stage(s), data(static_cast<std::size_t>(3) * h * w, 0.0f) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }

  bool same_shape(const ImageTensor& o) const { return height == o.height && width == o.width; }
  bool operator==(const ImageTensor&) const = default;
};

ImageTensor to_tensor(const RasterImage& img);

/// Binary PPM (P6, maxval 255). Byte-stable output.
void write_ppm(const RasterImage& img, const std::filesystem::path& path);

/// Decodes PPM (P6) or PNG, selected by file signature. Throws
/// std::runtime_error on unreadable or undecodable files.
RasterImage read_image(const std::filesystem::path& path);

}  // namespace clipc
