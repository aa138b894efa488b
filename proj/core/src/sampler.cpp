#include "mmsd/sampler.hpp"

#include <cmath>

#include "mmsd/errors.hpp"

namespace mmsd {

const Landmarks5& face_template() {
  static const Landmarks5 tmpl = {{{38.2946, 51.6963},
                                   {73.5318, 51.5014},
                                   {56.0252, 71.7366},
                                   {41.5493, 92.3655},
                                   {70.7299, 92.2041}}};
  return tmpl;
}

std::vector<int> select_windows(int total_frames, const SamplerConfig& cfg) {
  if (cfg.k < 1 || cfg.omega < 2)
    throw UsageError("sampler config requires k >= 1 and omega >= 2");
  if (total_frames < cfg.omega)
    throw DataError("video too short: " + std::to_string(total_frames) +
                    " frames < omega=" + std::to_string(cfg.omega));
  int span = total_frames - cfg.omega;
  int denom = std::max(cfg.k - 1, 1);
  std::vector<int> starts(cfg.k);
  for (int i = 0; i < cfg.k; ++i) {
    long long s = static_cast<long long>(i) * span / denom;
    starts[i] = static_cast<int>(std::min<long long>(std::max<long long>(s, 0),
                                                     span));
  }
  return starts;
}

FrameClip align_face(const FrameClip& clip, int frame,
                     const Landmarks5& landmarks) {
  SimilarityTransform t = fit_similarity(landmarks, face_template());
  return warp_frame(clip, frame, t, kFaceSize, kFaceSize);
}

SampleResult extract_samples(const FrameClip& clip, const LandmarkTrack& track,
                             const SamplerConfig& cfg,
                             const std::string& video_id) {
  std::vector<int> starts = select_windows(clip.frames, cfg);
  SampleResult result;
  for (size_t wi = 0; wi < starts.size(); ++wi) {
    int start = starts[wi];
    bool covered = true;
    for (int j = 0; j < cfg.omega; ++j) {
      if (!track.usable(start + j, cfg.min_confidence)) {
        covered = false;
        break;
      }
    }
    if (!covered) {
      result.warnings.push_back("window " + std::to_string(wi) + " at frame " +
                                std::to_string(start) +
                                " dropped: missing or low-confidence "
                                "landmarks");
      continue;
    }

    SampleWindow window;
    window.video_id = video_id;
    window.start = start;
    window.frames = FrameClip(kFaceSize, kFaceSize, cfg.omega, clip.channels,
                              clip.fps);
    SimilarityTransform frozen;
    if (cfg.align == AlignMode::first_frame)
      frozen = fit_similarity(track.frames[start].points, face_template());
    for (int j = 0; j < cfg.omega; ++j) {
      FrameClip face =
          cfg.align == AlignMode::per_frame
              ? align_face(clip, start + j, track.frames[start + j].points)
              : warp_frame(clip, start + j, frozen, kFaceSize, kFaceSize);
      std::copy(face.data.begin(), face.data.end(),
                window.frames.data.begin() + window.frames.frame_size() * j);
    }
    result.windows.push_back(std::move(window));
  }
  if (result.windows.empty())
    throw DataError("video " + video_id +
                    " rejected: all sample windows lack usable landmarks");
  return result;
}

}  // namespace mmsd
