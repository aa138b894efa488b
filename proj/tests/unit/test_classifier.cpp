#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "mmsd/classifier.hpp"
#include "mmsd/errors.hpp"
#include "mmsd/weights_io.hpp"

#include "../support/oracles.hpp"

using namespace mmsd;
using oracles::TempDir;

namespace {

ClassifierConfig tiny_config() {
    ClassifierConfig cfg;
    cfg.num_classes = 2;
    cfg.width_multiplier = 1.0 / 64.0;
    cfg.input_channels = 4;
    cfg.input_temporal = 4;
    cfg.input_height = 16;
    cfg.input_width = 16;
    return cfg;
}

// Class 0 lights up channel 0, class 1 lights up channel 3.
FusedTensor labeled_tensor(const ClassifierConfig& cfg, int label, int seed) {
    nn::NormalSampler rng(seed);
    FusedTensor t;
    t.data = nn::Tensor<float>({cfg.input_channels, cfg.input_temporal,
                                cfg.input_height, cfg.input_width});
    int64_t per = t.data.size() / cfg.input_channels;
    for (int64_t i = 0; i < t.data.size(); ++i)
        t.data.v[i] = static_cast<float>(0.2 * rng.normal());
    int hot = label == 0 ? 0 : 3;
    for (int64_t i = 0; i < per; ++i) t.data.v[hot * per + i] += 1.5f;
    return t;
}

struct ToySet {
    std::map<std::string, FusedTensor> tensors;
    std::vector<DatasetSample> samples;

    explicit ToySet(const ClassifierConfig& cfg, int count, int seed0) {
        for (int i = 0; i < count; ++i) {
            int label = i % 2;
            std::string id = "s" + std::to_string(i);
            tensors[id] = labeled_tensor(cfg, label, seed0 + i);
            samples.push_back({id, label});
        }
    }

    Classifier::Loader loader() const {
        return [this](const std::string& id) { return tensors.at(id); };
    }
};

}  // namespace

TEST_CASE("conv and fc widths scale with the multiplier") {
    ClassifierConfig full;
    CHECK(conv_widths(full) == std::vector<int>{64, 128, 256, 512, 512});
    CHECK(fc_width(full) == 4096);
    CHECK(flat_size(full) == 8192);

    ClassifierConfig eighth;
    eighth.width_multiplier = 1.0 / 8.0;
    CHECK(conv_widths(eighth) == std::vector<int>{8, 16, 32, 64, 64});
    CHECK(fc_width(eighth) == 512);
    CHECK(flat_size(eighth) == 1024);

    ClassifierConfig sliver;
    sliver.width_multiplier = 1.0 / 1024.0;
    CHECK(conv_widths(sliver) == std::vector<int>{1, 1, 1, 1, 1});
    CHECK(fc_width(sliver) == 16);  // floor
}

TEST_CASE("stage shapes follow the pooling schedule") {
    // first pool is spatial only; later pools ceil-halve all three axes
    for (int temporal : {8, 12, 16}) {
        ClassifierConfig cfg;
        cfg.input_temporal = temporal;
        std::vector<StageShape> stages = stage_shapes(cfg);
        REQUIRE(stages.size() == 5);
        std::vector<int> want_spatial{56, 28, 14, 7, 4};
        std::vector<int> want_t;
        if (temporal == 8) want_t = {8, 4, 2, 1, 1};
        if (temporal == 12) want_t = {12, 6, 3, 2, 1};
        if (temporal == 16) want_t = {16, 8, 4, 2, 1};
        for (int i = 0; i < 5; ++i) {
            CHECK(stages[i].height == want_spatial[i]);
            CHECK(stages[i].width == want_spatial[i]);
            CHECK(stages[i].temporal == want_t[i]);
        }
        CHECK(stages[4].channels == 512);
        CHECK(flat_size(cfg) == 512 * 1 * 4 * 4);
    }
}

TEST_CASE("config validation") {
    ClassifierConfig cfg;
    cfg.num_classes = 1;
    CHECK_THROWS_AS(validate_classifier_config(cfg), UsageError);
    cfg = ClassifierConfig{};
    cfg.width_multiplier = 0.0;
    CHECK_THROWS_AS(validate_classifier_config(cfg), UsageError);
    cfg.width_multiplier = 1.5;
    CHECK_THROWS_AS(validate_classifier_config(cfg), UsageError);
    cfg = ClassifierConfig{};
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(validate_classifier_config(cfg), UsageError);
    cfg = ClassifierConfig{};
    cfg.input_temporal = 0;
    CHECK_THROWS_AS(validate_classifier_config(cfg), UsageError);
}

TEST_CASE("forward rejects mismatched input dims") {
    ClassifierConfig cfg = tiny_config();
    C3dNetT<float> net(cfg, 1);
    nn::Tensor<float> wrong({1, 4, 5, 16, 16});
    CHECK_THROWS_AS(net.forward(wrong, false), UsageError);
}

TEST_CASE("prediction is a proper distribution and deterministic") {
    ClassifierConfig cfg = tiny_config();
    Classifier model(cfg, 7);
    FusedTensor t = labeled_tensor(cfg, 0, 100);

    SamplePrediction p1 = model.predict(t, "x");
    SamplePrediction p2 = model.predict(t, "x");
    CHECK(p1.probabilities == p2.probabilities);
    CHECK(p1.sample_id == "x");

    double sum = 0.0;
    for (double p : p1.probabilities) {
        CHECK(p >= 0.0);
        sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p1.confidence ==
          doctest::Approx(p1.probabilities[p1.predicted_class]));
    CHECK(p1.confidence >=
          *std::max_element(p1.probabilities.begin(), p1.probabilities.end()) -
              1e-12);
}

TEST_CASE("prediction enforces the normalization contract") {
    ClassifierConfig cfg = tiny_config();
    Classifier model(cfg, 7);
    model.stats.id = "cs-feedfacefeedface";
    model.stats.mean.assign(4, 0.0);
    model.stats.stddev.assign(4, 1.0);

    FusedTensor t = labeled_tensor(cfg, 0, 100);
    CHECK_THROWS_AS(model.predict(t), UsageError);
    normalize(t, model.stats);
    CHECK_NOTHROW(model.predict(t));
}

TEST_CASE("training overfits a separable toy set") {
    ClassifierConfig cfg = tiny_config();
    ToySet data(cfg, 12, 500);
    Classifier model(cfg, 42);

    TrainConfig tc;
    tc.epochs = 25;
    tc.batch = 4;
    tc.lr = 3e-3;
    tc.seed = 11;
    std::vector<EpochStats> log =
        model.train(data.samples, data.samples, data.loader(), tc);

    REQUIRE(log.size() == 25);
    CHECK(log.back().train_loss < log.front().train_loss);
    CHECK(log.back().val_accuracy == 1.0);
    CHECK(log.back().train_accuracy == 1.0);

    // eval-mode predictions agree with the reported validation accuracy
    int correct = 0;
    for (const auto& s : data.samples) {
        SamplePrediction p = model.predict(data.tensors.at(s.id), s.id);
        if (p.predicted_class == s.label) ++correct;
    }
    CHECK(correct == 12);
}

TEST_CASE("training validates its inputs") {
    ClassifierConfig cfg = tiny_config();
    Classifier model(cfg, 1);
    TrainConfig tc;
    tc.epochs = 1;

    ToySet data(cfg, 4, 600);
    CHECK_THROWS_AS(model.train({}, {}, data.loader(), tc), DataError);

    std::vector<DatasetSample> bad = data.samples;
    bad[0].label = 9;
    CHECK_THROWS_AS(model.train(bad, {}, data.loader(), tc), DataError);

    std::vector<DatasetSample> one_class = {data.samples[0], data.samples[2]};
    CHECK_THROWS_AS(model.train(one_class, {}, data.loader(), tc), DataError);
}

TEST_CASE("model artifact round trip") {
    ClassifierConfig cfg = tiny_config();
    ToySet data(cfg, 8, 700);
    Classifier model(cfg, 9);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch = 4;
    tc.lr = 1e-3;
    model.train(data.samples, data.samples, data.loader(), tc);
    model.labels = {"real", "genA"};
    model.stats.id = "cs-0123456789abcdef";
    model.stats.mean = {0.1, 0.2, 0.3, 0.4};
    model.stats.stddev = {1.0, 2.0, 3.0, 4.0};

    TempDir tmp;
    model.save(tmp.file("model.mmw"));
    Classifier back = Classifier::load_artifact(tmp.file("model.mmw"));

    CHECK(back.labels == model.labels);
    CHECK(back.stats.id == model.stats.id);
    CHECK(back.stats.mean == model.stats.mean);
    CHECK(back.stats.stddev == model.stats.stddev);
    CHECK(back.seed == model.seed);
    CHECK(back.config().width_multiplier ==
          doctest::Approx(cfg.width_multiplier));
    REQUIRE(back.log.size() == 3);
    CHECK(back.log[2].train_loss == doctest::Approx(model.log[2].train_loss));

    FusedTensor t = labeled_tensor(cfg, 1, 800);
    normalize(t, model.stats);
    SamplePrediction pa = model.predict(t);
    SamplePrediction pb = back.predict(t);
    CHECK(pa.probabilities == pb.probabilities);

    // a weights file without artifact metadata is not a model
    WeightsFile raw;
    NamedTensor nt;
    nt.name = "conv1.w";
    nt.shape = {1};
    nt.data = {0.0f};
    raw.tensors.push_back(nt);
    save_weights(tmp.file("raw.mmw"), raw);
    CHECK_THROWS_AS(Classifier::load_artifact(tmp.file("raw.mmw")), DataError);
}
