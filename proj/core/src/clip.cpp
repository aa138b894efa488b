#include "mmsd/clip.hpp"

#include <cmath>

#include "mmsd/errors.hpp"

namespace mmsd {

FrameClip::FrameClip(int w, int h, int t, int c, double fps_)
    : width(w),
      height(h),
      frames(t),
      channels(c),
      fps(fps_),
      data(static_cast<size_t>(w) * h * t * c, 0.0f) {}

void FrameClip::validate() const {
  if (width < 1 || height < 1 || frames < 1)
    throw DataError("clip dimensions must be >= 1");
  if (channels != 1 && channels != 3)
    throw DataError("clip channels must be 1 or 3, got " +
                    std::to_string(channels));
  if (data.size() != static_cast<size_t>(width) * height * frames * channels)
    throw DataError("clip buffer size does not match dimensions");
  for (float p : data) {
    if (!(p >= 0.0f && p <= 1.0f))
      throw DataError("clip pixel out of [0,1] or non-finite");
  }
}

RealGrid FrameClip::luminance(int t) const {
  RealGrid out(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (channels == 1) {
        out.at(y, x) = at(t, y, x, 0);
      } else {
        out.at(y, x) = 0.299 * at(t, y, x, 0) + 0.587 * at(t, y, x, 1) +
                       0.114 * at(t, y, x, 2);
      }
    }
  }
  return out;
}

}  // namespace mmsd
