#include "mmsd/clip_io.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mmsd/errors.hpp"
#include "mmsd/png_io.hpp"

namespace fs = std::filesystem;

namespace mmsd {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'C', '1'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint8_t to_byte(float v) {
  float s = v * 255.0f + 0.5f;
  if (s < 0.0f) s = 0.0f;
  if (s > 255.0f) s = 255.0f;
  return static_cast<uint8_t>(s);
}

FrameClip clip_from_frames(const std::vector<Image8>& images, double fps) {
  const Image8& first = images.front();
  FrameClip clip(first.width, first.height, static_cast<int>(images.size()),
                 first.channels, fps);
  size_t pos = 0;
  for (size_t t = 0; t < images.size(); ++t) {
    const Image8& img = images[t];
    if (img.width != first.width || img.height != first.height ||
        img.channels != first.channels)
      throw DataError("inconsistent frame dimensions in sequence at frame " +
                      std::to_string(t));
    for (uint8_t p : img.pixels) clip.data[pos++] = p / 255.0f;
  }
  return clip;
}

FrameClip load_sequence_dir(const std::string& dir, const DecodeConfig& cfg) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm")
      files.push_back(entry.path());
  }
  if (files.empty())
    throw DataError("no PNG/PPM frames in directory " + dir);
  std::sort(files.begin(), files.end());
  std::vector<Image8> images;
  images.reserve(files.size());
  for (const auto& f : files) {
    std::string ext = f.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    images.push_back(ext == ".png" ? load_png(f.string())
                                   : load_ppm(f.string()));
  }
  return clip_from_frames(images, cfg.default_fps);
}

std::string expand_template(const std::string& tmpl, const std::string& key,
                            const std::string& value) {
  std::string out = tmpl;
  size_t pos;
  while ((pos = out.find(key)) != std::string::npos)
    out.replace(pos, key.size(), value);
  return out;
}

FrameClip load_via_decoder(const std::string& source,
                           const DecodeConfig& cfg) {
  fs::path tmp =
      fs::temp_directory_path() /
      ("mmsd_decode_" + std::to_string(::getpid()) + "_" +
       std::to_string(std::hash<std::string>{}(source) & 0xffffff) + ".mmc1");
  std::string cmd = expand_template(cfg.external_decoder, "{input}", source);
  cmd = expand_template(cmd, "{output}", tmp.string());
  int rc = std::system(cmd.c_str());
  if (rc != 0) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw DataError("external decoder exited nonzero (" + std::to_string(rc) +
                    "): " + cmd);
  }
  FrameClip clip = load_mmc1(tmp.string());
  std::error_code ec;
  fs::remove(tmp, ec);
  return clip;
}

}  // namespace

FrameClip load_mmc1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path + ": not an MMC1 clip (bad magic)");
  uint32_t w = get_u32(in), h = get_u32(in), t = get_u32(in), c = get_u32(in);
  uint32_t fps_num = get_u32(in);
  if (!in) throw DataError(path + ": truncated MMC1 header");
  if (w == 0 || h == 0 || t == 0 || (c != 1 && c != 3 && c != 4))
    throw DataError(path + ": bad MMC1 dimensions");
  size_t n = static_cast<size_t>(w) * h * t * c;
  std::vector<uint8_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw DataError(path + ": MMC1 payload size mismatch (expected " +
                    std::to_string(n) + " bytes)");
  in.get();
  if (!in.eof())
    throw DataError(path + ": MMC1 payload size mismatch (trailing bytes)");

  FrameClip clip;
  clip.width = static_cast<int>(w);
  clip.height = static_cast<int>(h);
  clip.frames = static_cast<int>(t);
  clip.channels = static_cast<int>(c);
  clip.fps = static_cast<double>(fps_num);
  clip.data.resize(n);
  for (size_t i = 0; i < n; ++i) clip.data[i] = raw[i] / 255.0f;
  return clip;
}

void save_mmc1(const FrameClip& clip, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kMagic, 4);
  put_u32(out, static_cast<uint32_t>(clip.width));
  put_u32(out, static_cast<uint32_t>(clip.height));
  put_u32(out, static_cast<uint32_t>(clip.frames));
  put_u32(out, static_cast<uint32_t>(clip.channels));
  put_u32(out, static_cast<uint32_t>(std::lround(clip.fps)));
  std::vector<uint8_t> raw(clip.data.size());
  for (size_t i = 0; i < clip.data.size(); ++i) raw[i] = to_byte(clip.data[i]);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("short write to " + path);
}

FrameClip load_clip(const std::string& source, const DecodeConfig& cfg) {
  std::error_code ec;
  if (fs::is_directory(source, ec)) return load_sequence_dir(source, cfg);
  if (!fs::exists(source, ec)) throw DataError("unreadable path " + source);
  std::string ext = fs::path(source).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".mmc1") return load_mmc1(source);
  if (!cfg.external_decoder.empty()) return load_via_decoder(source, cfg);
  throw DataError("cannot decode " + source +
                  ": not a frame directory or .mmc1, and no external decoder "
                  "is configured");
}

void save_clip(const FrameClip& clip, const std::string& dest,
               ClipFormat format) {
  if (format == ClipFormat::auto_detect) {
    std::string ext = fs::path(dest).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    format = ext == ".mmc1" ? ClipFormat::mmc1 : ClipFormat::png_sequence;
  }
  if (format == ClipFormat::mmc1) {
    save_mmc1(clip, dest);
    return;
  }
  std::error_code ec;
  fs::create_directories(dest, ec);
  if (!fs::is_directory(dest))
    throw DataError("cannot create frame directory " + dest);
  for (int t = 0; t < clip.frames; ++t) {
    Image8 img;
    img.width = clip.width;
    img.height = clip.height;
    img.channels = clip.channels;
    img.pixels.resize(clip.frame_size());
    const float* src = clip.data.data() + clip.frame_size() * t;
    for (size_t i = 0; i < img.pixels.size(); ++i)
      img.pixels[i] = to_byte(src[i]);
    char name[32];
    std::snprintf(name, sizeof(name),
                  format == ClipFormat::png_sequence ? "frame_%05d.png"
                                                     : "frame_%05d.ppm",
                  t);
    std::string p = (fs::path(dest) / name).string();
    if (format == ClipFormat::png_sequence)
      save_png(p, img);
    else
      save_ppm(p, img);
  }
}

}  // namespace mmsd
