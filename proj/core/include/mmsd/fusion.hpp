#pragma once

#include <string>
#include <vector>

#include "mmsd/clip.hpp"
#include "mmsd/grid.hpp"
#include "mmsd/nn.hpp"

namespace mmsd {

// 4-channel classifier input: the three learned-magnifier color channels
// of a frame plus the phase-magnified luminance whose window is centered
// on it. Stored as C x T x H x W.
struct FusedTensor {
  nn::Tensor<float> data;  // {4, temporal, h, w}
  std::string stats_id;    // empty until normalized

  int temporal() const { return data.shape.empty() ? 0 : data.dim(1); }
};

struct ChannelStats {
  std::string id;
  std::vector<double> mean;  // per channel
  std::vector<double> stddev;
};

// deep holds omega frames x 3 channels, phase holds omega-(t-1) frames;
// phase frame j is stacked with deep frame j + floor(t/2).
FusedTensor fuse(const FrameClip& deep, const std::vector<RealGrid>& phase,
                 int t);

ChannelStats fit_stats(const std::vector<const FusedTensor*>& training);

// One-pass streaming alternative to fit_stats for corpora too large to
// hold in memory. Deterministic in the order tensors are added.
struct StatsAccumulator {
  std::vector<double> sum;
  std::vector<double> sumsq;
  std::vector<int64_t> count;

  void add(const FusedTensor& tensor);
  ChannelStats finish() const;
};

// Per-channel standardization; sigma floored at 1e-6. Throws when the
// stats channel count differs from the tensor's.
void normalize(FusedTensor& tensor, const ChannelStats& stats);

void save_fused(const std::string& path, const FusedTensor& tensor,
                const std::string& sidecar_json);
FusedTensor load_fused(const std::string& path, std::string* sidecar_json);

}  // namespace mmsd
