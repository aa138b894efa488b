#include "mmsd/fusion.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmsd/clip_io.hpp"
#include "mmsd/errors.hpp"

namespace mmsd {

FusedTensor fuse(const FrameClip& deep, const std::vector<RealGrid>& phase,
                 int t) {
  if (t < 2) throw UsageError("phase window length t must be >= 2");
  if (deep.channels != 3) throw UsageError("deep stream must have 3 channels");
  int temporal = static_cast<int>(phase.size());
  if (deep.frames != temporal + t - 1) {
    throw DataError("fuse length mismatch: deep " + std::to_string(deep.frames) +
                    " frames vs phase " + std::to_string(temporal) +
                    " with t=" + std::to_string(t));
  }
  if (temporal < 1) throw DataError("empty phase stream");
  int h = deep.height, w = deep.width;
  for (const auto& g : phase) {
    if (g.w != w || g.h != h) throw DataError("phase/deep frame size mismatch");
  }

  FusedTensor out;
  out.data = nn::Tensor<float>({4, temporal, h, w});
  int64_t plane = static_cast<int64_t>(h) * w;
  int center = t / 2;
  for (int j = 0; j < temporal; ++j) {
    const float* src = deep.data.data() +
                       static_cast<int64_t>(j + center) * deep.frame_size();
    for (int c = 0; c < 3; ++c) {
      float* dst = out.data.data() + (static_cast<int64_t>(c) * temporal + j) * plane;
      for (int64_t p = 0; p < plane; ++p) dst[p] = src[p * 3 + c];
    }
    float* dst = out.data.data() + (static_cast<int64_t>(3) * temporal + j) * plane;
    for (int64_t p = 0; p < plane; ++p) {
      dst[p] = static_cast<float>(phase[j].v[p]);
    }
  }
  for (float v : out.data.v) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in fused tensor");
  }
  return out;
}

namespace {

void fingerprint_stats(ChannelStats& stats) {
  uint64_t hash = 1469598103934665603ull;
  auto mix = [&hash](double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    hash ^= bits;
    hash *= 1099511628211ull;
  };
  for (double v : stats.mean) mix(v);
  for (double v : stats.stddev) mix(v);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "cs-%016llx",
                static_cast<unsigned long long>(hash));
  stats.id = buf;
}

}  // namespace

ChannelStats fit_stats(const std::vector<const FusedTensor*>& training) {
  if (training.empty()) throw DataError("no tensors to fit stats on");
  int channels = training[0]->data.dim(0);
  ChannelStats stats;
  stats.mean.assign(channels, 0.0);
  stats.stddev.assign(channels, 0.0);
  std::vector<int64_t> count(channels, 0);
  for (const auto* t : training) {
    if (t->data.dim(0) != channels) {
      throw UsageError("channel count differs across tensors");
    }
    int64_t per = t->data.size() / channels;
    for (int c = 0; c < channels; ++c) {
      const float* p = t->data.data() + c * per;
      double s = 0.0;
      for (int64_t i = 0; i < per; ++i) s += p[i];
      stats.mean[c] += s;
      count[c] += per;
    }
  }
  for (int c = 0; c < channels; ++c) stats.mean[c] /= count[c];
  for (const auto* t : training) {
    int64_t per = t->data.size() / channels;
    for (int c = 0; c < channels; ++c) {
      const float* p = t->data.data() + c * per;
      double s = 0.0;
      for (int64_t i = 0; i < per; ++i) {
        double d = p[i] - stats.mean[c];
        s += d * d;
      }
      stats.stddev[c] += s;
    }
  }
  for (int c = 0; c < channels; ++c) {
    stats.stddev[c] = std::max(std::sqrt(stats.stddev[c] / count[c]), 1e-6);
  }
  // short content fingerprint so mismatched stats are detectable
  fingerprint_stats(stats);
  return stats;
}

void StatsAccumulator::add(const FusedTensor& tensor) {
  if (!tensor.stats_id.empty())
    throw UsageError("stats must be fitted on unnormalized tensors");
  int channels = tensor.data.dim(0);
  if (sum.empty()) {
    sum.assign(channels, 0.0);
    sumsq.assign(channels, 0.0);
    count.assign(channels, 0);
  } else if (static_cast<int>(sum.size()) != channels) {
    throw UsageError("channel count differs across tensors");
  }
  int64_t per = tensor.data.size() / channels;
  for (int c = 0; c < channels; ++c) {
    const float* p = tensor.data.data() + c * per;
    double s = 0.0, sq = 0.0;
    for (int64_t i = 0; i < per; ++i) {
      s += p[i];
      sq += static_cast<double>(p[i]) * p[i];
    }
    sum[c] += s;
    sumsq[c] += sq;
    count[c] += per;
  }
}

ChannelStats StatsAccumulator::finish() const {
  if (sum.empty()) throw DataError("no tensors to fit stats on");
  ChannelStats stats;
  int channels = static_cast<int>(sum.size());
  stats.mean.resize(channels);
  stats.stddev.resize(channels);
  for (int c = 0; c < channels; ++c) {
    double mean = sum[c] / count[c];
    double var = std::max(sumsq[c] / count[c] - mean * mean, 0.0);
    stats.mean[c] = mean;
    stats.stddev[c] = std::max(std::sqrt(var), 1e-6);
  }
  fingerprint_stats(stats);
  return stats;
}

void normalize(FusedTensor& tensor, const ChannelStats& stats) {
  int channels = tensor.data.dim(0);
  if (static_cast<int>(stats.mean.size()) != channels ||
      static_cast<int>(stats.stddev.size()) != channels) {
    throw UsageError("stats channel count does not match tensor");
  }
  int64_t per = tensor.data.size() / channels;
  for (int c = 0; c < channels; ++c) {
    float* p = tensor.data.data() + c * per;
    float mu = static_cast<float>(stats.mean[c]);
    float inv = static_cast<float>(1.0 / stats.stddev[c]);
    for (int64_t i = 0; i < per; ++i) p[i] = (p[i] - mu) * inv;
  }
  tensor.stats_id = stats.id;
}

void save_fused(const std::string& path, const FusedTensor& tensor,
                const std::string& sidecar_json) {
  if (!tensor.stats_id.empty()) {
    throw UsageError("refusing to cache a normalized tensor");
  }
  int temporal = tensor.data.dim(1), h = tensor.data.dim(2),
      w = tensor.data.dim(3);
  FrameClip clip;
  clip.width = w;
  clip.height = h;
  clip.frames = temporal;
  clip.channels = 4;
  clip.fps = 0.0;
  clip.data.assign(tensor.data.v.size(), 0.0f);
  int64_t plane = static_cast<int64_t>(h) * w;
  for (int j = 0; j < temporal; ++j) {
    float* dst = clip.data.data() + static_cast<int64_t>(j) * plane * 4;
    for (int c = 0; c < 4; ++c) {
      const float* src =
          tensor.data.data() + (static_cast<int64_t>(c) * temporal + j) * plane;
      for (int64_t p = 0; p < plane; ++p) dst[p * 4 + c] = src[p];
    }
  }
  std::string tmp = path + ".tmp";
  save_mmc1(clip, tmp);
  std::filesystem::rename(tmp, path);
  if (!sidecar_json.empty()) {
    std::string side_tmp = path + ".json.tmp";
    std::ofstream os(side_tmp, std::ios::binary);
    os << sidecar_json;
    if (!os) throw DataError("cannot write sidecar for " + path);
    os.close();
    std::filesystem::rename(side_tmp, path + ".json");
  }
}

FusedTensor load_fused(const std::string& path, std::string* sidecar_json) {
  FrameClip clip = load_mmc1(path);
  if (clip.channels != 4) {
    throw DataError(path + ": fused cache must have 4 channels");
  }
  FusedTensor out;
  out.data = nn::Tensor<float>({4, clip.frames, clip.height, clip.width});
  int64_t plane = static_cast<int64_t>(clip.height) * clip.width;
  for (int j = 0; j < clip.frames; ++j) {
    const float* src = clip.data.data() + static_cast<int64_t>(j) * plane * 4;
    for (int c = 0; c < 4; ++c) {
      float* dst =
          out.data.data() + (static_cast<int64_t>(c) * clip.frames + j) * plane;
      for (int64_t p = 0; p < plane; ++p) dst[p] = src[p * 4 + c];
    }
  }
  if (sidecar_json) {
    sidecar_json->clear();
    std::ifstream is(path + ".json", std::ios::binary);
    if (is) {
      std::ostringstream ss;
      ss << is.rdbuf();
      *sidecar_json = ss.str();
    }
  }
  return out;
}

}  // namespace mmsd
