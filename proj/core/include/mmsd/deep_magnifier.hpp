#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mmsd/clip.hpp"
#include "mmsd/nn.hpp"
#include "mmsd/sampler.hpp"

namespace mmsd {

enum class RefMode { dynamic_prev, static_first };

// Learned encoder/manipulator/decoder magnifier. m is the total motion
// factor (m=1 is the identity); internally alpha = m - 1 feeds the linear
// manipulator shape_a + (1+alpha)*(shape_b - shape_a).
struct DeepMagConfig {
  double m = 2.0;
  RefMode mode = RefMode::dynamic_prev;
  int base_channels = 16;  // first conv width; deeper layers use 2x
  std::string weights_path;

  double alpha() const { return m - 1.0; }
};

struct PairSample {
  nn::Tensor<float> a;       // 1x3xHxW
  nn::Tensor<float> b;       // a translated by delta
  nn::Tensor<float> target;  // a translated by (1+alpha)*delta
  float alpha = 0.0f;
  float delta = 0.0f;  // displacement magnitude in px
  float theta = 0.0f;  // displacement direction
};

struct MagnifierTrainConfig {
  int epochs = 20;
  int batch = 4;
  double lr = 1e-3;
  uint64_t seed = 7;
};

struct EpochLoss {
  int epoch = 0;
  double loss = 0.0;
};

class DeepMagnifier {
 public:
  explicit DeepMagnifier(const DeepMagConfig& cfg, uint64_t init_seed = 1234);
  ~DeepMagnifier();
  DeepMagnifier(DeepMagnifier&&) noexcept;
  DeepMagnifier& operator=(DeepMagnifier&&) noexcept;

  const DeepMagConfig& config() const { return cfg_; }

  // x is 1x3xHxW with H, W divisible by 2; returns (shape, texture), both
  // at half resolution.
  std::pair<nn::Tensor<float>, nn::Tensor<float>> encode(
      const nn::Tensor<float>& x);

  static nn::Tensor<float> manipulate(const nn::Tensor<float>& shape_a,
                                      const nn::Tensor<float>& shape_b,
                                      double alpha);

  nn::Tensor<float> decode(const nn::Tensor<float>& texture,
                           const nn::Tensor<float>& shape, bool clamp = true);

  // Frame 0 is the input unchanged; frame j>0 is decoded with motion from
  // the reference (previous frame or frame 0 per mode) scaled by m.
  FrameClip magnify_clip(const SampleWindow& window);

  static std::vector<PairSample> generate_synthetic_pairs(uint64_t seed,
                                                          int count);

  // L1 regression to the magnified targets. Returns per-epoch mean loss;
  // throws NumericError with diagnostics if the loss goes non-finite.
  std::vector<EpochLoss> train_toy(const std::vector<PairSample>& pairs,
                                   const MagnifierTrainConfig& tc);

  void save(const std::string& path) const;
  void load(const std::string& path);
  bool has_weights() const { return trained_; }

  std::vector<nn::Param<float>*> params();

  static nn::Tensor<float> frame_tensor(const FrameClip& clip, int t);
  static void tensor_to_frame(const nn::Tensor<float>& x, FrameClip& clip,
                              int t);

 private:
  struct Net;
  DeepMagConfig cfg_;
  std::unique_ptr<Net> net_;
  bool trained_ = false;
};

}  // namespace mmsd
