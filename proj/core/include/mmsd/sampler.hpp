#pragma once

#include <string>
#include <vector>

#include "mmsd/clip.hpp"
#include "mmsd/landmarks.hpp"
#include "mmsd/similarity.hpp"

namespace mmsd {

enum class AlignMode {
  per_frame,    // fit a transform from each frame's own landmarks
  first_frame,  // freeze the transform of the window's first frame
};

struct SamplerConfig {
  int k = 4;       // sample windows per video
  int omega = 16;  // frames per window
  double min_confidence = 0.5;
  AlignMode align = AlignMode::per_frame;
};

// One aligned face window: exactly omega frames of 112x112 pixels.
struct SampleWindow {
  FrameClip frames;
  std::string video_id;
  int start = 0;
};

struct SampleResult {
  std::vector<SampleWindow> windows;
  std::vector<std::string> warnings;  // one line per dropped window
};

constexpr int kFaceSize = 112;

// Canonical 5-point template for 112x112 aligned crops.
const Landmarks5& face_template();

// Evenly spaced window starts: start_i = floor(i*(total-omega)/max(k-1,1)),
// clamped to the feasible range. Throws DataError when total < omega.
std::vector<int> select_windows(int total_frames, const SamplerConfig& cfg);

// Similarity-align one frame's face onto the canonical 112x112 template.
FrameClip align_face(const FrameClip& clip, int frame,
                     const Landmarks5& landmarks);

// Cut k windows and align faces per frame (or per window-start, by config).
// Windows containing frames with missing or low-confidence landmarks are
// dropped with a warning; if every window drops, the video is rejected.
SampleResult extract_samples(const FrameClip& clip, const LandmarkTrack& track,
                             const SamplerConfig& cfg,
                             const std::string& video_id);

}  // namespace mmsd
