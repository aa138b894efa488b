#pragma once

#include <cstdint>
#include <string>

#include "mmsd/manifest.hpp"

namespace mmsd {

// Three-class synthetic face corpus for end-to-end checks. Class "real"
// carries only smooth global sub-pixel drift; "genA" adds a per-frame
// random-phase sinusoidal fingerprint; "genB" adds per-frame blocky noise.
struct SynthConfig {
  int videos_per_class = 60;
  int frames = 64;
  int width = 144;
  int height = 144;
  double fps = 30.0;
  double train_fraction = 0.7;
  uint64_t seed = 1;
  // Fingerprint amplitudes sit well above the 8-bit quantization step so
  // cached tensors keep the signal.
  double gen_a_amplitude = 0.02;
  double gen_b_amplitude = 0.02;
};

// Writes videos/<label>_<index>.mmc1, landmarks/<label>_<index>.json and
// manifest.json under out_dir. Returns the manifest (paths relative to
// out_dir). Fully deterministic in cfg.seed.
DatasetManifest generate_toy_corpus(const std::string& out_dir,
                                    const SynthConfig& cfg);

}  // namespace mmsd
