#pragma once

#include <vector>

#include "mmsd/grid.hpp"
#include "mmsd/sampler.hpp"
#include "mmsd/steerable_pyramid.hpp"

namespace mmsd {

enum class TemporalFilter { mean_removal, windowed_bandpass };

// Sliding-window phase amplification. A window of t luminance frames is
// decomposed into oriented bands; per coefficient, the center frame's
// phase deviation from the temporally filtered trajectory is scaled by
// alpha_p and the center frame is rebuilt with original amplitudes.
struct PhaseConfig {
  int t = 5;
  double alpha_p = 10.0;
  // Band edges in Hz, used by the windowed_bandpass filter; fps is the
  // sampling rate they are evaluated at.
  double f_lo = 0.0;
  double f_hi = 0.0;
  double fps = 30.0;
  TemporalFilter filter = TemporalFilter::mean_removal;
  // Stddev in band coefficients of the amplitude-weighted smoothing
  // applied to the deviation field; 0 disables.
  double smooth_sigma = 2.0;
};

// FIR taps of length t for the configured temporal filter, center-indexed
// at floor(t/2). Mean removal yields delta - 1/t.
std::vector<double> temporal_filter_taps(const PhaseConfig& cfg);

// frames.size() must equal cfg.t, all frames equal dims. Output is the
// magnified center frame, unclamped.
RealGrid magnify_window(const std::vector<RealGrid>& frames,
                        const PhaseConfig& cfg, const PyramidConfig& pyr_cfg);

// Output j is the magnified center of frames j..j+t-1; length is exactly
// window length - (t - 1), values clamped to [0, 1].
std::vector<RealGrid> magnify_clip(const SampleWindow& window,
                                   const PhaseConfig& cfg,
                                   const PyramidConfig& pyr_cfg);

std::vector<RealGrid> magnify_frames(const std::vector<RealGrid>& frames,
                                     const PhaseConfig& cfg,
                                     const PyramidConfig& pyr_cfg);

}  // namespace mmsd
