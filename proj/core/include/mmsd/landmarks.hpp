#pragma once

#include <array>
#include <string>
#include <vector>

namespace mmsd {

using Point2 = std::array<double, 2>;
// Five-point layout: left eye, right eye, nose tip, left mouth corner,
// right mouth corner -- in source pixel coordinates.
using Landmarks5 = std::array<Point2, 5>;

struct FrameLandmarks {
  Landmarks5 points{};
  double confidence = 0.0;
  bool present = false;
};

// One entry per source frame index; entries may be absent (face not found).
struct LandmarkTrack {
  std::vector<FrameLandmarks> frames;

  bool usable(int frame, double min_confidence) const {
    if (frame < 0 || frame >= static_cast<int>(frames.size())) return false;
    const FrameLandmarks& f = frames[frame];
    return f.present && f.confidence >= min_confidence;
  }
};

// Sidecar format: JSON array indexed by frame, each entry either null or
// {"points": [[x,y] * 5], "confidence": r}.
LandmarkTrack load_landmarks(const std::string& path);
void save_landmarks(const LandmarkTrack& track, const std::string& path);

}  // namespace mmsd
