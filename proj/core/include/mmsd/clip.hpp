#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmsd/grid.hpp"

namespace mmsd {

// A w*h*T*C pixel tensor in [0,1], frame-major, row-major, channel
// interleaved -- the same layout the MMC1 raw format uses on disk.
struct FrameClip {
  int width = 0;
  int height = 0;
  int frames = 0;
  int channels = 0;  // 1 or 3 (4 only for fused-tensor caching)
  double fps = 30.0;
  std::vector<float> data;

  FrameClip() = default;
  FrameClip(int w, int h, int t, int c, double fps_ = 30.0);

  size_t frame_size() const {
    return static_cast<size_t>(width) * height * channels;
  }
  size_t index(int t, int y, int x, int c) const {
    return ((static_cast<size_t>(t) * height + y) * width + x) * channels + c;
  }
  float& at(int t, int y, int x, int c) { return data[index(t, y, x, c)]; }
  const float& at(int t, int y, int x, int c) const {
    return data[index(t, y, x, c)];
  }

  // Throws DataError if dimensions/channel count/pixel range are invalid.
  void validate() const;

  // Rec.601 luma of one frame: Y = 0.299 R + 0.587 G + 0.114 B.
  // Single-channel clips pass through.
  RealGrid luminance(int t) const;
};

}  // namespace mmsd
