#pragma once

#include <string>

#include "mmsd/clip.hpp"

namespace mmsd {

struct DecodeConfig {
  // fps assumed for image sequences that carry no timing metadata.
  double default_fps = 30.0;
  // Optional external container decoder. Command template with {input}
  // and {output} placeholders; must write an MMC1 clip to {output}.
  std::string external_decoder;
};

enum class ClipFormat {
  auto_detect,  // by path: directory -> image sequence, *.mmc1 -> raw
  png_sequence,
  ppm_sequence,
  mmc1,
};

// Sources: a directory of PNG/PPM frames (lexicographic order), an MMC1
// raw clip, or -- when an external decoder is configured -- any container
// file the decoder understands.
FrameClip load_clip(const std::string& source, const DecodeConfig& cfg = {});

void save_clip(const FrameClip& clip, const std::string& dest,
               ClipFormat format = ClipFormat::auto_detect);

// Raw planar clip format, little-endian:
//   "MMC1" | u32 w | u32 h | u32 T | u32 C | u32 fps_numerator
// followed by T*h*w*C bytes (frame-major, row-major, channel-interleaved).
FrameClip load_mmc1(const std::string& path);
void save_mmc1(const FrameClip& clip, const std::string& path);

}  // namespace mmsd
