#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmsd {

// 8-bit image buffer, row-major, channel-interleaved.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> pixels;
};

Image8 load_png(const std::string& path);
void save_png(const std::string& path, const Image8& img);

Image8 load_ppm(const std::string& path);  // P5 / P6, maxval 255
void save_ppm(const std::string& path, const Image8& img);

}  // namespace mmsd
