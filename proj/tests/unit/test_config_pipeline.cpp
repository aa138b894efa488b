#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "mmsd/clip_io.hpp"
#include "mmsd/config_file.hpp"
#include "mmsd/errors.hpp"
#include "mmsd/pipeline.hpp"
#include "mmsd/synth.hpp"

#include "../support/oracles.hpp"

using namespace mmsd;
using oracles::TempDir;
namespace fs = std::filesystem;

namespace {

// One tiny corpus plus one trained magnifier shared by the pipeline cases.
struct MicroWorld {
    TempDir root;
    std::string corpus_dir, manifest_path, mag_path;
    DatasetManifest manifest;

    static PipelineConfig base_config() {
        PipelineConfig cfg;
        cfg.sampler.k = 2;
        cfg.sampler.omega = 8;
        cfg.phase.t = 3;
        cfg.phase.alpha_p = 5.0;
        cfg.phase.smooth_sigma = 1.0;
        cfg.deep.m = 2.0;
        cfg.deep.base_channels = 4;
        cfg.width_multiplier = 1.0 / 64.0;
        cfg.train.epochs = 3;
        cfg.train.batch = 4;
        cfg.train.lr = 3e-3;
        cfg.val_fraction = 0.0;
        cfg.mag_train.epochs = 2;
        cfg.mag_train.batch = 4;
        cfg.mag_train.lr = 1e-3;
        cfg.mag_pairs = 8;
        cfg.seed = 42;
        return cfg;
    }

    MicroWorld() {
        corpus_dir = root.file("corpus");
        SynthConfig sc;
        sc.videos_per_class = 3;
        sc.frames = 24;
        sc.seed = 5;
        manifest = generate_toy_corpus(corpus_dir, sc);
        manifest_path = (fs::path(corpus_dir) / "manifest.json").string();

        mag_path = root.file("magnifier.mmw");
        PipelineConfig cfg = base_config();
        cfg.cache_dir = root.file("cache-mag");
        Pipeline(cfg).run_train_magnifier(mag_path);
    }

    PipelineConfig config(const std::string& cache_name) const {
        PipelineConfig cfg = base_config();
        cfg.deep.weights_path = mag_path;
        cfg.cache_dir = root.file(cache_name);
        return cfg;
    }
};

MicroWorld& world() {
    static MicroWorld w;
    return w;
}

size_t count_files(const std::string& dir) {
    if (!fs::is_directory(dir)) return 0;
    size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) ++n;
    return n;
}

}  // namespace

TEST_CASE("config text parsing") {
    auto kv = parse_config_text(
        "# full line comment\n"
        "sampler.k = 4\n"
        "\n"
        "phase.alpha_p = 10 # trailing comment\n"
        "deep.weights = \"path with # hash\"\n"
        "sampler.k = 6\n");
    CHECK(kv.size() == 3);
    CHECK(kv.at("sampler.k") == "6");  // later keys win
    CHECK(kv.at("phase.alpha_p") == "10");
    CHECK(kv.at("deep.weights") == "path with # hash");

    CHECK_THROWS_WITH_AS(parse_config_text("a = 1\nno equals sign\n"),
                         doctest::Contains("line 2"), UsageError);
    CHECK_THROWS_WITH_AS(parse_config_text("bad key! = 1\n"),
                         doctest::Contains("line 1"), UsageError);

    // format/parse round trip
    auto back = parse_config_text(format_config(kv));
    CHECK(back == kv);
}

TEST_CASE("config keys apply and dump losslessly") {
    PipelineConfig cfg;
    apply_config_kv(cfg, "sampler.k", "7");
    apply_config_kv(cfg, "sampler.align", "first_frame");
    apply_config_kv(cfg, "pyramid.levels", "3");
    apply_config_kv(cfg, "phase.alpha_p", "2.5");
    apply_config_kv(cfg, "phase.filter", "windowed_bandpass");
    apply_config_kv(cfg, "phase.f_lo", "1");
    apply_config_kv(cfg, "phase.f_hi", "6.25");
    apply_config_kv(cfg, "deep.mode", "static");
    apply_config_kv(cfg, "deep.weights", "w.mmw");
    apply_config_kv(cfg, "classifier.width_multiplier", "0.125");
    apply_config_kv(cfg, "train.lr", "0.0003");
    apply_config_kv(cfg, "mag_train.pairs", "120");
    apply_config_kv(cfg, "seed", "123456789012345");
    apply_config_kv(cfg, "cache_dir", "/tmp/x");
    apply_config_kv(cfg, "decode.fps", "25");

    CHECK(cfg.sampler.k == 7);
    CHECK(cfg.sampler.align == AlignMode::first_frame);
    CHECK(cfg.phase.filter == TemporalFilter::windowed_bandpass);
    CHECK(cfg.deep.mode == RefMode::static_first);
    CHECK(cfg.mag_pairs == 120);
    CHECK(cfg.seed == 123456789012345ull);

    // dump -> fresh apply -> dump is a fixed point
    auto kv = config_kv(cfg);
    CHECK(kv.size() == 31);
    PipelineConfig fresh;
    for (const auto& [k, v] : kv) apply_config_kv(fresh, k, v);
    CHECK(config_kv(fresh) == kv);

    CHECK_THROWS_WITH_AS(apply_config_kv(cfg, "nope", "1"),
                         doctest::Contains("unknown config key"), UsageError);
    CHECK_THROWS_WITH_AS(apply_config_kv(cfg, "sampler.k", "many"),
                         doctest::Contains("sampler.k"), UsageError);
    CHECK_THROWS_AS(apply_config_kv(cfg, "phase.filter", "butterworth"),
                    UsageError);
}

TEST_CASE("pipeline config validation") {
    PipelineConfig cfg;
    CHECK_NOTHROW(validate_pipeline_config(cfg));

    cfg.phase.t = 17;  // omega is 16
    CHECK_THROWS_WITH_AS(validate_pipeline_config(cfg),
                         doctest::Contains("must not exceed sampler.omega"),
                         UsageError);

    cfg = PipelineConfig{};
    cfg.phase.filter = TemporalFilter::windowed_bandpass;
    cfg.phase.f_lo = 4.0;
    cfg.phase.f_hi = 2.0;
    CHECK_THROWS_AS(validate_pipeline_config(cfg), UsageError);
    cfg.phase.f_lo = 1.0;
    cfg.phase.f_hi = 16.0;  // beyond fps/2 = 15
    CHECK_THROWS_AS(validate_pipeline_config(cfg), UsageError);
    cfg.phase.f_hi = 6.0;
    CHECK_NOTHROW(validate_pipeline_config(cfg));

    cfg = PipelineConfig{};
    cfg.sampler.k = 0;
    CHECK_THROWS_AS(validate_pipeline_config(cfg), UsageError);
    cfg = PipelineConfig{};
    cfg.width_multiplier = 9.0;
    CHECK_THROWS_AS(validate_pipeline_config(cfg), UsageError);
    cfg = PipelineConfig{};
    cfg.workers = 0;
    CHECK_THROWS_AS(validate_pipeline_config(cfg), UsageError);
}

TEST_CASE("cache directory resolution order") {
    PipelineConfig cfg;
    cfg.cache_dir = "explicit";
    setenv("MMSD_CACHE_DIR", "from-env", 1);
    CHECK(resolve_cache_dir(cfg) == "explicit");
    cfg.cache_dir.clear();
    CHECK(resolve_cache_dir(cfg) == "from-env");
    unsetenv("MMSD_CACHE_DIR");
    CHECK(resolve_cache_dir(cfg) == ".mmsd-cache");
}

TEST_CASE("synthetic corpus layout") {
    const MicroWorld& w = world();
    CHECK(w.manifest.num_classes() == 3);
    CHECK(w.manifest.labels ==
          std::vector<std::string>{"real", "genA", "genB"});
    CHECK(w.manifest.entries.size() == 9);
    CHECK(w.manifest.split("train").size() == 6);  // 2 of 3 per class
    CHECK(w.manifest.split("test").size() == 3);

    DatasetManifest loaded = load_manifest(w.manifest_path);
    CHECK(loaded.labels == w.manifest.labels);
    FrameClip clip = load_mmc1(loaded.entries[0].video);
    CHECK(clip.frames == 24);
    CHECK(clip.width == 144);
    CHECK(clip.channels == 3);
}

TEST_CASE("prepare fills every cache tier exactly once") {
    const MicroWorld& w = world();
    PipelineConfig cfg = w.config("cache-a");
    Pipeline pipe(cfg);
    DatasetManifest man = load_manifest(w.manifest_path);
    auto train_entries = man.split("train");

    PrepareResult first = pipe.prepare(train_entries, man);
    CHECK(first.windows.size() == 12);  // 6 train videos x k=2
    CHECK(first.warnings.empty());
    for (const auto& r : first.windows) {
        CHECK(fs::exists(r.tensor_path));
        CHECK(r.label >= 0);
        CHECK(r.id == r.video + "#" + std::to_string(r.start));
    }

    std::string cache = pipe.cache_dir();
    CHECK(count_files(cache + "/listings") == 6);
    CHECK(count_files(cache + "/windows") == 12);
    CHECK(count_files(cache + "/phase") == 12);
    CHECK(count_files(cache + "/deep") == 12);
    CHECK(count_files(cache + "/fused") == 24);  // tensors + sidecars

    // a second pass is pure cache: nothing is rewritten
    auto stamp = fs::last_write_time(first.windows[0].tensor_path);
    PrepareResult second = pipe.prepare(train_entries, man);
    REQUIRE(second.windows.size() == first.windows.size());
    for (size_t i = 0; i < first.windows.size(); ++i) {
        CHECK(second.windows[i].id == first.windows[i].id);
        CHECK(second.windows[i].tensor_path == first.windows[i].tensor_path);
    }
    CHECK(fs::last_write_time(first.windows[0].tensor_path) == stamp);
}

TEST_CASE("prepare requires trained magnifier weights") {
    const MicroWorld& w = world();
    PipelineConfig cfg = w.config("cache-noweights");
    cfg.deep.weights_path.clear();
    Pipeline pipe(cfg);
    CHECK_THROWS_WITH_AS(pipe.run_train(w.manifest_path, w.root.file("m.mmw")),
                         doctest::Contains("train-magnifier"), UsageError);
}

TEST_CASE("train evaluate round trip on the micro corpus") {
    const MicroWorld& w = world();
    PipelineConfig cfg = w.config("cache-a");  // reuses the prepared cache
    Pipeline pipe(cfg);

    std::string model = w.root.file("model-a.mmw");
    TrainSummary ts = pipe.run_train(w.manifest_path, model);
    CHECK(ts.train_windows == 12);
    CHECK(ts.val_windows == 0);
    CHECK(ts.log.size() == 3);
    CHECK(fs::exists(model));

    EvalOutput ev = pipe.run_evaluate(model, w.manifest_path);
    CHECK(ev.report.videos == 3);
    CHECK(ev.report.labels == std::vector<std::string>{"real", "genA", "genB"});
    CHECK(ev.verdicts.size() == 3);
    for (const auto& v : ev.verdicts) CHECK(v.samples.size() == 2);
    CHECK(ev.truths.size() == 3);

    // evaluation is a pure function of the model and the cached tensors
    EvalOutput again = pipe.run_evaluate(model, w.manifest_path);
    CHECK(report_to_json(again.report) == report_to_json(ev.report));

    PsnrOutput ps = pipe.run_psnr(w.manifest_path);
    REQUIRE(ps.rows.size() == 3);
    for (const auto& row : ps.rows) {
        CHECK(row.frames == 12);  // 1 test video x 2 windows x 6 frames
        CHECK(row.mean > 0.0);
        CHECK(row.mean <= 99.0);
    }
}

TEST_CASE("identical runs from empty caches are byte-identical") {
    const MicroWorld& w = world();

    auto run = [&](const std::string& cache, const std::string& model_name) {
        PipelineConfig cfg = w.config(cache);
        Pipeline pipe(cfg);
        std::string model = w.root.file(model_name);
        pipe.run_train(w.manifest_path, model);
        EvalOutput ev = pipe.run_evaluate(model, w.manifest_path);
        return std::make_pair(oracles::read_file(model),
                              report_to_json(ev.report));
    };

    auto [model_b, report_b] = run("cache-b", "model-b.mmw");
    auto [model_c, report_c] = run("cache-c", "model-c.mmw");
    CHECK(model_b == model_c);
    CHECK(report_b == report_c);
}

TEST_CASE("sweep emits skipped rows for infeasible points") {
    const MicroWorld& w = world();
    PipelineConfig cfg = w.config("cache-a");
    Pipeline pipe(cfg);

    SweepGrid grid;
    grid.t_values = {17};
    auto rows = pipe.run_sweep(w.manifest_path, grid);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].skipped);
    CHECK(rows[0].note == "t exceeds window length omega=8");

    SweepGrid bad_k;
    bad_k.k_values = {0};
    rows = pipe.run_sweep(w.manifest_path, bad_k);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].skipped);
    CHECK(rows[0].note == "k must be >= 1");
}

TEST_CASE("model and sampler temporal contract") {
    const MicroWorld& w = world();
    std::string model = w.root.file("model-a.mmw");
    REQUIRE(fs::exists(model));  // produced by the round-trip case

    PipelineConfig cfg = w.config("cache-a");
    cfg.phase.t = 5;  // fused length 4, model expects 6
    Pipeline pipe(cfg);
    CHECK_THROWS_WITH_AS(pipe.run_evaluate(model, w.manifest_path),
                         doctest::Contains("fused frames per window"),
                         UsageError);
}
