#include "mmsd/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmsd/errors.hpp"
#include "mmsd/weights_io.hpp"

namespace mmsd {

using json = nlohmann::ordered_json;

void validate_classifier_config(const ClassifierConfig& cfg) {
  if (cfg.num_classes < 2) throw UsageError("num_classes must be >= 2");
  if (!(cfg.width_multiplier > 0.0) || cfg.width_multiplier > 1.0) {
    throw UsageError("width multiplier must be in (0, 1]");
  }
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) {
    throw UsageError("dropout must be in [0, 1)");
  }
  if (cfg.input_channels < 1 || cfg.input_temporal < 1 ||
      cfg.input_height < 1 || cfg.input_width < 1) {
    throw UsageError("input dims must be positive");
  }
}

std::vector<int> conv_widths(const ClassifierConfig& cfg) {
  std::vector<int> base{64, 128, 256, 512, 512};
  for (auto& b : base) {
    b = std::max(1, static_cast<int>(std::lround(b * cfg.width_multiplier)));
  }
  return base;
}

int fc_width(const ClassifierConfig& cfg) {
  return std::max(16, static_cast<int>(std::lround(4096 * cfg.width_multiplier)));
}

std::vector<StageShape> stage_shapes(const ClassifierConfig& cfg) {
  std::vector<int> widths = conv_widths(cfg);
  std::vector<StageShape> out;
  int t = cfg.input_temporal, h = cfg.input_height, w = cfg.input_width;
  for (int i = 0; i < 5; ++i) {
    if (i > 0) t = nn::MaxPool3d<float>::out_size(t, 2);
    h = nn::MaxPool3d<float>::out_size(h, 2);
    w = nn::MaxPool3d<float>::out_size(w, 2);
    out.push_back({widths[i], t, h, w});
  }
  return out;
}

int flat_size(const ClassifierConfig& cfg) {
  StageShape last = stage_shapes(cfg).back();
  return last.channels * last.temporal * last.height * last.width;
}

Classifier::Classifier(const ClassifierConfig& cfg, uint64_t seed_in)
    : seed(seed_in), cfg_(cfg) {
  validate_classifier_config(cfg);
  net_ = std::make_shared<C3dNetT<float>>(cfg, seed_in);
  labels.resize(cfg.num_classes);
  for (int i = 0; i < cfg.num_classes; ++i) {
    labels[i] = "class" + std::to_string(i);
  }
}

namespace {

struct Snapshot {
  std::vector<std::vector<float>> params;
  std::vector<std::vector<double>> running;
};

Snapshot take_snapshot(C3dNetT<float>& net) {
  Snapshot s;
  for (auto* p : net.params()) s.params.push_back(p->w.v);
  for (auto* b : net.batch_norms()) {
    s.running.push_back(b->running_mean());
    s.running.push_back(b->running_var());
  }
  return s;
}

void restore_snapshot(C3dNetT<float>& net, const Snapshot& s) {
  size_t i = 0;
  for (auto* p : net.params()) p->w.v = s.params[i++];
  size_t j = 0;
  for (auto* b : net.batch_norms()) {
    b->running_mean() = s.running[j++];
    b->running_var() = s.running[j++];
  }
}

nn::Tensor<float> assemble_batch(const std::vector<DatasetSample>& set,
                                 const std::vector<int>& order, size_t at,
                                 size_t hi, const Classifier::Loader& load,
                                 const ClassifierConfig& cfg,
                                 std::vector<int>* labels_out) {
  int n = static_cast<int>(hi - at);
  nn::Tensor<float> batch({n, cfg.input_channels, cfg.input_temporal,
                           cfg.input_height, cfg.input_width});
  int64_t per = batch.size() / n;
  labels_out->clear();
  for (size_t s = at; s < hi; ++s) {
    const DatasetSample& ds = set[order[s]];
    FusedTensor t = load(ds.id);
    if (t.data.size() != per) {
      throw UsageError("sample dims do not match classifier config: " + ds.id);
    }
    std::copy(t.data.v.begin(), t.data.v.end(),
              batch.data() + (s - at) * per);
    labels_out->push_back(ds.label);
  }
  return batch;
}

}  // namespace

std::vector<EpochStats> Classifier::train(
    const std::vector<DatasetSample>& train_set,
    const std::vector<DatasetSample>& val_set, const Loader& load,
    const TrainConfig& tc) {
  if (tc.epochs < 0) throw UsageError("epochs must be >= 0");
  if (tc.batch < 1) throw UsageError("batch must be >= 1");
  if (train_set.empty()) throw DataError("empty training set");
  {
    std::vector<bool> seen(cfg_.num_classes, false);
    for (const auto& s : train_set) {
      if (s.label < 0 || s.label >= cfg_.num_classes) {
        throw DataError("label out of range for sample " + s.id);
      }
      seen[s.label] = true;
    }
    for (int c = 0; c < cfg_.num_classes; ++c) {
      if (!seen[c]) {
        std::string name =
            c < static_cast<int>(labels.size()) ? labels[c] : std::to_string(c);
        throw DataError("class absent from training data: " + name);
      }
    }
  }

  nn::Adam<float> opt(net_->params(), tc.lr);
  nn::NormalSampler shuffle_rng(tc.seed);
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochStats> stats_log;
  double best_val = -1.0;
  Snapshot best;
  bool have_best = false;

  auto evaluate = [&](const std::vector<DatasetSample>& set) {
    if (set.empty()) return 0.0;
    std::vector<int> ord(set.size());
    std::iota(ord.begin(), ord.end(), 0);
    int correct = 0;
    std::vector<int> lab;
    for (size_t at = 0; at < set.size(); at += tc.batch) {
      size_t hi = std::min(set.size(), at + tc.batch);
      nn::Tensor<float> batch =
          assemble_batch(set, ord, at, hi, load, cfg_, &lab);
      nn::Tensor<float> logits = net_->forward(batch, false);
      int k = logits.dim(1);
      for (int i = 0; i < logits.dim(0); ++i) {
        const float* row = logits.data() + static_cast<int64_t>(i) * k;
        int arg = static_cast<int>(std::max_element(row, row + k) - row);
        if (arg == lab[i]) ++correct;
      }
    }
    return static_cast<double>(correct) / set.size();
  };

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.raw() % i]);
    }
    double epoch_loss = 0.0;
    int correct = 0;
    std::vector<int> lab;
    for (size_t at = 0; at < order.size(); at += tc.batch) {
      size_t hi = std::min(order.size(), at + tc.batch);
      nn::Tensor<float> batch =
          assemble_batch(train_set, order, at, hi, load, cfg_, &lab);
      opt.zero_grad();
      nn::Tensor<float> logits = net_->forward(batch, true);
      nn::Tensor<float> dlogits;
      std::vector<std::vector<double>> probs;
      double loss = nn::softmax_cross_entropy(logits, lab, &dlogits, &probs);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch
            << " (lr " << tc.lr << ", batch " << tc.batch << ")";
        throw NumericError(msg.str());
      }
      for (size_t i = 0; i < probs.size(); ++i) {
        int arg = static_cast<int>(
            std::max_element(probs[i].begin(), probs[i].end()) -
            probs[i].begin());
        if (arg == lab[i]) ++correct;
      }
      net_->backward(dlogits);
      opt.step();
      epoch_loss += loss * static_cast<double>(hi - at);
    }
    EpochStats es;
    es.epoch = epoch;
    es.train_loss = epoch_loss / train_set.size();
    es.train_accuracy = static_cast<double>(correct) / train_set.size();
    es.val_accuracy = evaluate(val_set);
    stats_log.push_back(es);
    double score = val_set.empty() ? es.train_accuracy : es.val_accuracy;
    if (score > best_val) {
      best_val = score;
      best = take_snapshot(*net_);
      have_best = true;
    }
  }
  if (have_best) restore_snapshot(*net_, best);
  log = stats_log;
  return stats_log;
}

SamplePrediction Classifier::predict(const FusedTensor& tensor,
                                     const std::string& sample_id) const {
  if (!stats.id.empty() && tensor.stats_id != stats.id) {
    throw UsageError("input not normalized with this model's stats (got '" +
                     tensor.stats_id + "', want '" + stats.id + "')");
  }
  nn::Tensor<float> batch({1, cfg_.input_channels, cfg_.input_temporal,
                           cfg_.input_height, cfg_.input_width});
  if (tensor.data.size() != batch.size()) {
    throw UsageError("sample dims do not match classifier config");
  }
  std::copy(tensor.data.v.begin(), tensor.data.v.end(), batch.data());
  nn::Tensor<float> logits = net_->forward(batch, false);
  int k = logits.dim(1);
  double mx = logits.v[0];
  for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.v[j]));
  double z = 0.0;
  for (int j = 0; j < k; ++j) z += std::exp(logits.v[j] - mx);
  SamplePrediction pred;
  pred.sample_id = sample_id;
  pred.probabilities.resize(k);
  for (int j = 0; j < k; ++j) {
    pred.probabilities[j] = std::exp(logits.v[j] - mx) / z;
  }
  pred.predicted_class = static_cast<int>(
      std::max_element(pred.probabilities.begin(), pred.probabilities.end()) -
      pred.probabilities.begin());
  pred.confidence = pred.probabilities[pred.predicted_class];
  return pred;
}

void Classifier::save(const std::string& path) const {
  WeightsFile file;
  for (auto* p : net_->params()) {
    NamedTensor t;
    t.name = p->name;
    t.shape = p->w.shape;
    t.data.assign(p->w.v.begin(), p->w.v.end());
    file.tensors.push_back(std::move(t));
  }
  int bn_index = 1;
  for (auto* b : net_->batch_norms()) {
    NamedTensor mean, var;
    mean.name = "bn" + std::to_string(bn_index) + ".running_mean";
    var.name = "bn" + std::to_string(bn_index) + ".running_var";
    mean.shape = var.shape = {static_cast<int>(b->running_mean().size())};
    mean.data.assign(b->running_mean().begin(), b->running_mean().end());
    var.data.assign(b->running_var().begin(), b->running_var().end());
    file.tensors.push_back(std::move(mean));
    file.tensors.push_back(std::move(var));
    ++bn_index;
  }

  json meta;
  meta["kind"] = "classifier-artifact";
  meta["version"] = 1;
  meta["config"] = {{"num_classes", cfg_.num_classes},
                    {"width_multiplier", cfg_.width_multiplier},
                    {"dropout", cfg_.dropout},
                    {"input_channels", cfg_.input_channels},
                    {"input_temporal", cfg_.input_temporal},
                    {"input_height", cfg_.input_height},
                    {"input_width", cfg_.input_width}};
  meta["stats"] = {{"id", stats.id},
                   {"mean", stats.mean},
                   {"stddev", stats.stddev}};
  meta["labels"] = labels;
  meta["seed"] = seed;
  json jlog = json::array();
  for (const auto& e : log) {
    jlog.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"train_accuracy", e.train_accuracy},
                    {"val_accuracy", e.val_accuracy}});
  }
  meta["epoch_log"] = jlog;
  file.metadata = meta.dump();
  save_weights(path, file);
}

Classifier Classifier::load_artifact(const std::string& path) {
  WeightsFile file = load_weights(path);
  if (file.metadata.empty()) {
    throw DataError("model artifact missing metadata: " + path);
  }
  json meta = json::parse(file.metadata, nullptr, false);
  if (meta.is_discarded() || meta.value("kind", "") != "classifier-artifact") {
    throw DataError("not a classifier artifact: " + path);
  }
  ClassifierConfig cfg;
  const auto& jc = meta.at("config");
  cfg.num_classes = jc.at("num_classes").get<int>();
  cfg.width_multiplier = jc.at("width_multiplier").get<double>();
  cfg.dropout = jc.at("dropout").get<double>();
  cfg.input_channels = jc.at("input_channels").get<int>();
  cfg.input_temporal = jc.at("input_temporal").get<int>();
  cfg.input_height = jc.at("input_height").get<int>();
  cfg.input_width = jc.at("input_width").get<int>();

  Classifier model(cfg, meta.value("seed", 0ull));
  model.stats.id = meta.at("stats").at("id").get<std::string>();
  model.stats.mean = meta.at("stats").at("mean").get<std::vector<double>>();
  model.stats.stddev = meta.at("stats").at("stddev").get<std::vector<double>>();
  model.labels = meta.at("labels").get<std::vector<std::string>>();
  if (static_cast<int>(model.labels.size()) != cfg.num_classes) {
    throw DataError("label table does not match num_classes: " + path);
  }
  for (const auto& e : meta.value("epoch_log", json::array())) {
    EpochStats es;
    es.epoch = e.value("epoch", 0);
    es.train_loss = e.value("train_loss", 0.0);
    es.train_accuracy = e.value("train_accuracy", 0.0);
    es.val_accuracy = e.value("val_accuracy", 0.0);
    model.log.push_back(es);
  }

  for (auto* p : model.net_->params()) {
    const NamedTensor* t = file.find(p->name);
    if (!t) throw DataError("artifact missing tensor: " + p->name);
    if (t->shape != p->w.shape) {
      throw DataError("artifact tensor shape mismatch: " + p->name);
    }
    std::copy(t->data.begin(), t->data.end(), p->w.v.begin());
  }
  int bn_index = 1;
  for (auto* b : model.net_->batch_norms()) {
    const NamedTensor* mean =
        file.find("bn" + std::to_string(bn_index) + ".running_mean");
    const NamedTensor* var =
        file.find("bn" + std::to_string(bn_index) + ".running_var");
    if (!mean || !var) throw DataError("artifact missing batch norm stats");
    b->running_mean().assign(mean->data.begin(), mean->data.end());
    b->running_var().assign(var->data.begin(), var->data.end());
    ++bn_index;
  }
  return model;
}

}  // namespace mmsd
