#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace geoclr {

/// Interleaved 8-bit RGB raster as stored on disk.
struct RgbImage8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, RGB interleaved
};

/// Decodes a PNG or binary PPM (P6, maxval 255) file, detected by signature.
/// Grayscale and alpha PNGs are converted to RGB. Throws DataError naming the
/// path on failure.
RgbImage8 read_image(const std::string& path);

void write_ppm(const std::string& path, const RgbImage8& image);
void write_png(const std::string& path, const RgbImage8& image);

}  // namespace geoclr
