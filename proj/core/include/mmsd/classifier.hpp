#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mmsd/fusion.hpp"
#include "mmsd/nn.hpp"

namespace mmsd {

// Five blocks of [3x3x3 conv -> batch norm -> relu -> max pool]; the first
// pool is spatial-only, the rest are 2x2x2 with ceil mode; then two
// dropout-regularized fully connected layers and a linear head.
struct ClassifierConfig {
  int num_classes = 2;
  double width_multiplier = 1.0;  // scales conv widths and FC size
  double dropout = 0.5;
  int input_channels = 4;
  int input_temporal = 12;
  int input_height = 112;
  int input_width = 112;
};

// Conv widths 64,128,256,512,512 scaled by the multiplier (floor 1).
std::vector<int> conv_widths(const ClassifierConfig& cfg);
// 4096 scaled by the multiplier, floored at 16.
int fc_width(const ClassifierConfig& cfg);

struct StageShape {
  int channels, temporal, height, width;
};
// Shape after each of the five blocks, then the flatten size last.
std::vector<StageShape> stage_shapes(const ClassifierConfig& cfg);
int flat_size(const ClassifierConfig& cfg);

void validate_classifier_config(const ClassifierConfig& cfg);

template <class T>
class C3dNetT {
 public:
  C3dNetT(const ClassifierConfig& cfg, uint64_t seed)
      : cfg_(cfg), drop_rng_(seed ^ 0x9e3779b97f4a7c15ull) {
    validate_classifier_config(cfg);
    nn::NormalSampler init(seed);
    std::vector<int> widths = conv_widths(cfg);
    int in_ch = cfg.input_channels;
    for (int i = 0; i < 5; ++i) {
      convs_.push_back(std::make_unique<nn::Conv3d<T>>(
          "conv" + std::to_string(i + 1), in_ch, widths[i], &init));
      bns_.push_back(std::make_unique<nn::BatchNorm<T>>(
          "bn" + std::to_string(i + 1), widths[i]));
      relus_.push_back(std::make_unique<nn::ReLU<T>>());
      pools_.push_back(std::make_unique<nn::MaxPool3d<T>>(i == 0 ? 1 : 2, 2, 2));
      in_ch = widths[i];
    }
    int flat = flat_size(cfg);
    int fc = fc_width(cfg);
    fc1_ = std::make_unique<nn::Linear<T>>("fc1", flat, fc, &init);
    fc2_ = std::make_unique<nn::Linear<T>>("fc2", fc, fc, &init);
    head_ = std::make_unique<nn::Linear<T>>("head", fc, cfg.num_classes, &init);
    fc_relu1_ = std::make_unique<nn::ReLU<T>>();
    fc_relu2_ = std::make_unique<nn::ReLU<T>>();
    drop1_ = std::make_unique<nn::Dropout<T>>(cfg.dropout, &drop_rng_);
    drop2_ = std::make_unique<nn::Dropout<T>>(cfg.dropout, &drop_rng_);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& x, bool train) {
    if (x.shape.size() != 5 || x.dim(1) != cfg_.input_channels ||
        x.dim(2) != cfg_.input_temporal || x.dim(3) != cfg_.input_height ||
        x.dim(4) != cfg_.input_width) {
      throw UsageError("classifier input dims do not match config");
    }
    nn::Tensor<T> h = x;
    for (int i = 0; i < 5; ++i) {
      h = convs_[i]->forward(h, train);
      h = bns_[i]->forward(h, train);
      h = relus_[i]->forward(h, train);
      h = pools_[i]->forward(h, train);
      check_finite(h, "block " + std::to_string(i + 1));
    }
    pre_flatten_ = h.shape;
    h.shape = {h.dim(0), static_cast<int>(h.size() / h.dim(0))};
    h = fc_relu1_->forward(fc1_->forward(h, train), train);
    h = drop1_->forward(h, train);
    h = fc_relu2_->forward(fc2_->forward(h, train), train);
    h = drop2_->forward(h, train);
    h = head_->forward(h, train);
    check_finite(h, "head");
    return h;
  }

  void backward(const nn::Tensor<T>& dlogits) {
    nn::Tensor<T> d = head_->backward(dlogits);
    d = fc2_->backward(fc_relu2_->backward(drop2_->backward(d)));
    d = fc1_->backward(fc_relu1_->backward(drop1_->backward(d)));
    d.shape = pre_flatten_;
    for (int i = 4; i >= 0; --i) {
      d = pools_[i]->backward(d);
      d = relus_[i]->backward(d);
      d = bns_[i]->backward(d);
      d = convs_[i]->backward(d);
    }
  }

  std::vector<nn::Param<T>*> params() {
    std::vector<nn::Param<T>*> out;
    for (int i = 0; i < 5; ++i) {
      for (auto* p : convs_[i]->params()) out.push_back(p);
      for (auto* p : bns_[i]->params()) out.push_back(p);
    }
    for (auto* l : {fc1_.get(), fc2_.get(), head_.get()}) {
      for (auto* p : l->params()) out.push_back(p);
    }
    return out;
  }

  std::vector<nn::BatchNorm<T>*> batch_norms() {
    std::vector<nn::BatchNorm<T>*> out;
    for (auto& b : bns_) out.push_back(b.get());
    return out;
  }

  const ClassifierConfig& config() const { return cfg_; }

 private:
  static void check_finite(const nn::Tensor<T>& h, const std::string& where) {
    for (T v : h.v) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError("non-finite activations after " + where);
      }
    }
  }

  ClassifierConfig cfg_;
  nn::NormalSampler drop_rng_;
  std::vector<std::unique_ptr<nn::Conv3d<T>>> convs_;
  std::vector<std::unique_ptr<nn::BatchNorm<T>>> bns_;
  std::vector<std::unique_ptr<nn::ReLU<T>>> relus_;
  std::vector<std::unique_ptr<nn::MaxPool3d<T>>> pools_;
  std::unique_ptr<nn::Linear<T>> fc1_, fc2_, head_;
  std::unique_ptr<nn::ReLU<T>> fc_relu1_, fc_relu2_;
  std::unique_ptr<nn::Dropout<T>> drop1_, drop2_;
  std::vector<int> pre_flatten_;
};

struct SamplePrediction {
  std::vector<double> probabilities;  // sums to 1
  int predicted_class = 0;
  double confidence = 0.0;  // max probability
  std::string sample_id;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainConfig {
  int epochs = 30;
  int batch = 8;
  double lr = 1e-4;
  uint64_t seed = 42;
};

struct DatasetSample {
  std::string id;
  int label = 0;
};

// Trained model plus everything needed to reproduce its inputs: the
// normalization stats, the label table, and the training log.
class Classifier {
 public:
  using Loader = std::function<FusedTensor(const std::string& id)>;

  Classifier(const ClassifierConfig& cfg, uint64_t seed);

  // Labels index the class table; every class must appear in train_set.
  // Returns the per-epoch log; the model keeps the best-validation weights.
  std::vector<EpochStats> train(const std::vector<DatasetSample>& train_set,
                                const std::vector<DatasetSample>& val_set,
                                const Loader& load, const TrainConfig& tc);

  // Input must be normalized with this model's stats.
  SamplePrediction predict(const FusedTensor& tensor,
                           const std::string& sample_id = "") const;

  void save(const std::string& path) const;
  static Classifier load_artifact(const std::string& path);

  const ClassifierConfig& config() const { return cfg_; }
  C3dNetT<float>& net() { return *net_; }

  ChannelStats stats;
  std::vector<std::string> labels;
  std::vector<EpochStats> log;
  uint64_t seed = 0;

 private:
  ClassifierConfig cfg_;
  std::shared_ptr<C3dNetT<float>> net_;
};

}  // namespace mmsd
