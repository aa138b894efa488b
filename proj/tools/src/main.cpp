#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmsd/clip_io.hpp"
#include "mmsd/config_file.hpp"
#include "mmsd/errors.hpp"
#include "mmsd/heatmap.hpp"
#include "mmsd/pipeline.hpp"
#include "mmsd/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmsd;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    // dedicated tuning flags land here as config key/value pairs and are
    // applied after --set, so the specific flag wins
    std::vector<std::pair<std::string, std::string>> tuning;
    std::string seed_str;
    std::string cache_dir;
    int workers = 0;
    bool json_out = false;
    bool dump = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path,
                    "config file with key = value lines");
    cmd->add_option("--set", o.sets, "override a config key, key=value");
    cmd->add_option("--seed", o.seed_str, "global RNG seed");
    cmd->add_option("--cache-dir", o.cache_dir,
                    "cache directory (default $MMSD_CACHE_DIR or .mmsd-cache)");
    cmd->add_option("--workers", o.workers, "worker threads over videos");
    cmd->add_flag("--json", o.json_out, "machine-readable stdout");
    cmd->add_flag("--dump-config", o.dump,
                  "print the resolved config and exit");
}

auto tune(CommonOpts& o, const char* key) {
    return [&o, key](const std::string& v) { o.tuning.emplace_back(key, v); };
}

void add_sampling_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option_function<std::string>("--k", tune(o, "sampler.k"),
                                          "windows per video");
    cmd->add_option_function<std::string>("--omega", tune(o, "sampler.omega"),
                                          "frames per window");
    cmd->add_option_function<std::string>(
        "--min-confidence", tune(o, "sampler.min_confidence"),
        "landmark confidence floor");
    cmd->add_option_function<std::string>("--align", tune(o, "sampler.align"),
                                          "per_frame or first_frame");
}

void add_phase_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option_function<std::string>("--t", tune(o, "phase.t"),
                                          "temporal filter taps");
    cmd->add_option_function<std::string>("--alpha-p", tune(o, "phase.alpha_p"),
                                          "phase magnification factor");
    cmd->add_option_function<std::string>(
        "--band",
        [&o](const std::string& v) {
            size_t c = v.find(':');
            if (c == std::string::npos || c == 0 || c + 1 == v.size())
                throw UsageError("--band expects lo:hi in Hz, got '" + v +
                                 "'");
            o.tuning.emplace_back("phase.f_lo", v.substr(0, c));
            o.tuning.emplace_back("phase.f_hi", v.substr(c + 1));
        },
        "temporal passband lo:hi in Hz");
    cmd->add_option_function<std::string>(
        "--filter",
        [&o](const std::string& v) {
            std::string full = v == "mean"       ? "mean_removal"
                               : v == "bandpass" ? "windowed_bandpass"
                                                 : v;
            o.tuning.emplace_back("phase.filter", full);
        },
        "temporal filter: mean or bandpass");
    cmd->add_option_function<std::string>("--smooth-sigma",
                                          tune(o, "phase.smooth_sigma"),
                                          "phase smoothing radius");
}

void add_deep_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option_function<std::string>("--m", tune(o, "deep.m"),
                                          "learned magnification factor");
    cmd->add_option_function<std::string>("--mode", tune(o, "deep.mode"),
                                          "dynamic or static reference");
    cmd->add_option_function<std::string>("--weights", tune(o, "deep.weights"),
                                          "magnifier weights path");
}

void add_train_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option_function<std::string>(
        "--width-mult", tune(o, "classifier.width_multiplier"),
        "classifier width multiplier");
    cmd->add_option_function<std::string>("--epochs", tune(o, "train.epochs"),
                                          "training epochs");
    cmd->add_option_function<std::string>("--lr", tune(o, "train.lr"),
                                          "learning rate");
    cmd->add_option_function<std::string>("--batch", tune(o, "train.batch"),
                                          "batch size");
    cmd->add_option_function<std::string>("--val-fraction",
                                          tune(o, "train.val_fraction"),
                                          "validation fraction of videos");
}

void add_magtrain_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option_function<std::string>("--epochs",
                                          tune(o, "mag_train.epochs"),
                                          "training epochs");
    cmd->add_option_function<std::string>("--lr", tune(o, "mag_train.lr"),
                                          "learning rate");
    cmd->add_option_function<std::string>("--batch", tune(o, "mag_train.batch"),
                                          "batch size");
    cmd->add_option_function<std::string>("--pairs", tune(o, "mag_train.pairs"),
                                          "synthetic training pairs");
    cmd->add_option_function<std::string>("--m", tune(o, "deep.m"),
                                          "magnification factor");
    cmd->add_option_function<std::string>("--mode", tune(o, "deep.mode"),
                                          "dynamic or static reference");
}

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

PipelineConfig build_config(const CommonOpts& o) {
    PipelineConfig cfg;
    if (!o.config_path.empty())
        for (const auto& [k, v] : load_config_file(o.config_path))
            apply_config_kv(cfg, k, v);
    for (const std::string& s : o.sets) {
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw UsageError("--set expects key=value, got '" + s + "'");
        apply_config_kv(cfg, strip(s.substr(0, eq)), strip(s.substr(eq + 1)));
    }
    for (const auto& [k, v] : o.tuning) apply_config_kv(cfg, k, v);
    if (!o.seed_str.empty()) apply_config_kv(cfg, "seed", o.seed_str);
    if (!o.cache_dir.empty()) cfg.cache_dir = o.cache_dir;
    if (o.workers > 0) cfg.workers = o.workers;
    validate_pipeline_config(cfg);
    return cfg;
}

// Every run logs the exact configuration it resolved to, seed included.
void echo_config(const PipelineConfig& cfg) {
    std::cerr << "resolved config:\n";
    for (const auto& [k, v] : config_kv(cfg))
        std::cerr << "  " << k << " = " << v << "\n";
}

// Returns true when the command should stop after dumping.
bool common_preamble(const CommonOpts& o, PipelineConfig& cfg) {
    cfg = build_config(o);
    if (o.dump) {
        std::cout << format_config(config_kv(cfg));
        return true;
    }
    echo_config(cfg);
    return false;
}

void write_text(const std::string& path, const std::string& text) {
    fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + tmp);
        f << text;
        if (!f.good()) throw DataError("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

FrameClip grids_to_clip(const std::vector<RealGrid>& grids, double fps) {
    if (grids.empty()) throw DataError("empty frame stream");
    FrameClip clip(grids[0].w, grids[0].h, static_cast<int>(grids.size()), 1,
                   fps);
    for (size_t t = 0; t < grids.size(); ++t)
        for (int y = 0; y < clip.height; ++y)
            for (int x = 0; x < clip.width; ++x)
                clip.at(static_cast<int>(t), y, x, 0) =
                    static_cast<float>(grids[t].at(y, x));
    return clip;
}

std::vector<double> parse_dlist(const std::string& s) {
    std::vector<double> out;
    if (s.empty()) return out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw UsageError("bad number in list: '" + item + "'");
        }
    }
    return out;
}

std::vector<int> parse_ilist(const std::string& s) {
    std::vector<int> out;
    for (double v : parse_dlist(s)) {
        int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw UsageError("expected integer list, got " + s);
        out.push_back(i);
    }
    return out;
}

json verdict_to_json(const VideoVerdict& v,
                     const std::vector<std::string>& labels) {
    json samples = json::array();
    for (const SamplePrediction& p : v.samples) {
        samples.push_back({{"id", p.sample_id},
                           {"predicted", labels[p.predicted_class]},
                           {"confidence", p.confidence},
                           {"probabilities", p.probabilities}});
    }
    return json{{"video", v.video},
                {"predicted", labels[v.predicted]},
                {"predicted_index", v.predicted},
                {"votes", v.tally},
                {"aggregate_confidence", v.aggregate_confidence},
                {"samples", samples}};
}

// ---- subcommand bodies ----

int cmd_synth(const CommonOpts& common, const std::string& out_dir,
              int videos, int frames, int width, int height,
              double train_fraction) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    SynthConfig sc;
    sc.videos_per_class = videos;
    sc.frames = frames;
    sc.width = width;
    sc.height = height;
    sc.train_fraction = train_fraction;
    sc.seed = cfg.seed;
    DatasetManifest man = generate_toy_corpus(out_dir, sc);
    std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    if (common.json_out) {
        std::cout << json{{"manifest", manifest_path},
                          {"videos", man.entries.size()},
                          {"labels", man.labels}}
                         .dump(2)
                  << "\n";
    } else {
        std::cout << "wrote " << man.entries.size() << " videos to " << out_dir
                  << "\nmanifest: " << manifest_path << "\n";
    }
    return 0;
}

int cmd_train_magnifier(const CommonOpts& common, const std::string& out) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    Pipeline pipe(cfg);
    std::vector<EpochLoss> log = pipe.run_train_magnifier(out);
    for (const EpochLoss& e : log)
        std::cerr << "epoch " << e.epoch << " loss " << e.loss << "\n";
    if (common.json_out) {
        json epochs = json::array();
        for (const EpochLoss& e : log)
            epochs.push_back({{"epoch", e.epoch}, {"loss", e.loss}});
        std::cout << json{{"weights", out},
                          {"epochs", epochs},
                          {"final_loss", log.empty() ? 0.0 : log.back().loss}}
                         .dump(2)
                  << "\n";
    } else {
        std::cout << "wrote magnifier weights to " << out << " (final loss "
                  << (log.empty() ? 0.0 : log.back().loss) << ")\n";
    }
    return 0;
}

// Shared flow for sample / magnify-phase / magnify-deep / fuse: per usable
// window, write one artifact into out_dir plus a windows.json listing.
int cmd_window_op(const CommonOpts& common, const std::string& video,
                  const std::string& landmarks, const std::string& out_dir,
                  const std::string& kind) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    Pipeline pipe(cfg);
    std::string stem = fs::path(video).stem().string();
    SampleResult sr = pipe.sample(video, landmarks, stem);
    if (sr.windows.empty())
        throw DataError("no usable windows in video " + video);
    fs::create_directories(out_dir);

    json files = json::array();
    for (const SampleWindow& w : sr.windows) {
        std::string name =
            stem + "-w" + std::to_string(w.start) + "-" + kind + ".mmc1";
        std::string path = (fs::path(out_dir) / name).string();
        if (kind == "window") {
            save_mmc1(w.frames, path);
        } else if (kind == "phase") {
            save_mmc1(grids_to_clip(pipe.phase_stream(w), w.frames.fps), path);
        } else if (kind == "deep") {
            save_mmc1(pipe.deep_stream(w), path);
        } else {  // fused
            FusedTensor ft = pipe.fuse_window(w);
            json sidecar = {{"video", stem}, {"start", w.start}};
            save_fused(path, ft, sidecar.dump());
        }
        files.push_back({{"start", w.start}, {"file", name}});
    }
    json listing = {{"video", stem},
                    {"kind", kind},
                    {"windows", files},
                    {"warnings", sr.warnings}};
    write_text((fs::path(out_dir) / (stem + "-" + kind + "-windows.json"))
                   .string(),
               listing.dump(2) + "\n");
    for (const std::string& w : sr.warnings) std::cerr << w << "\n";
    if (common.json_out)
        std::cout << listing.dump(2) << "\n";
    else
        std::cout << "wrote " << files.size() << " " << kind
                  << " files to " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& manifest,
              const std::string& out) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    Pipeline pipe(cfg);
    TrainSummary ts = pipe.run_train(manifest, out);
    for (const std::string& w : ts.warnings) std::cerr << w << "\n";
    for (const EpochStats& e : ts.log)
        std::cerr << "epoch " << e.epoch << " loss " << e.train_loss
                  << " train_acc " << e.train_accuracy << " val_acc "
                  << e.val_accuracy << "\n";
    json epochs = json::array();
    for (const EpochStats& e : ts.log)
        epochs.push_back({{"epoch", e.epoch},
                          {"loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy},
                          {"val_accuracy", e.val_accuracy}});
    json summary = {{"model", ts.model_path},
                    {"train_windows", ts.train_windows},
                    {"val_windows", ts.val_windows},
                    {"epochs", epochs},
                    {"warnings", ts.warnings}};
    if (common.json_out)
        std::cout << summary.dump(2) << "\n";
    else
        std::cout << "wrote model to " << ts.model_path << " ("
                  << ts.train_windows << " train / " << ts.val_windows
                  << " val windows)\n";
    return 0;
}

int cmd_predict(const CommonOpts& common, const std::string& model,
                const std::string& video, const std::string& landmarks) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    Pipeline pipe(cfg);
    Classifier clf = Classifier::load_artifact(model);
    VideoVerdict v = pipe.run_predict(model, video, landmarks);
    if (common.json_out) {
        std::cout << verdict_to_json(v, clf.labels).dump(2) << "\n";
    } else {
        std::cout << v.video << " predicted " << clf.labels[v.predicted]
                  << " (votes";
        for (int t : v.tally) std::cout << " " << t;
        std::cout << ", confidence " << v.aggregate_confidence << ")\n";
    }
    return 0;
}

int cmd_evaluate(const CommonOpts& common, const std::string& model,
                 const std::string& manifest, const std::string& split,
                 const std::string& out_dir) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    Pipeline pipe(cfg);
    EvalOutput ev = pipe.run_evaluate(model, manifest, split);
    for (const std::string& w : ev.warnings) std::cerr << w << "\n";

    fs::create_directories(out_dir);
    std::string report_json = report_to_json(ev.report);
    write_text((fs::path(out_dir) / "report.json").string(), report_json);
    write_text((fs::path(out_dir) / "report.csv").string(),
               report_to_csv(ev.report));
    render_confusion_png(ev.report.confusion,
                         (fs::path(out_dir) / "confusion.png").string());
    json verdicts = json::array();
    for (size_t i = 0; i < ev.verdicts.size(); ++i) {
        json v = verdict_to_json(ev.verdicts[i], ev.report.labels);
        v["truth"] = ev.report.labels[ev.truths[i]];
        verdicts.push_back(std::move(v));
    }
    write_text((fs::path(out_dir) / "verdicts.json").string(),
               verdicts.dump(2) + "\n");

    if (common.json_out) {
        std::cout << report_json;
    } else {
        std::cout << "videos " << ev.report.videos << "  samples "
                  << ev.report.samples << "\n"
                  << "video accuracy " << ev.report.video_accuracy << "\n"
                  << "sample accuracy " << ev.report.sample_accuracy << "\n"
                  << "binary accuracy " << ev.report.binary_accuracy << "\n"
                  << "reports in " << out_dir << "\n";
    }
    return 0;
}

int cmd_bias(const CommonOpts& common, const std::string& model,
             const std::string& manifest, const std::string& split,
             int min_count, const std::string& out_dir) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    Pipeline pipe(cfg);
    EvalOutput ev = pipe.run_evaluate(model, manifest, split);
    for (const std::string& w : ev.warnings) std::cerr << w << "\n";
    std::vector<GroupRow> rows =
        bias_report(ev.verdicts, ev.truths, ev.groups, min_count);
    fs::create_directories(out_dir);
    write_text((fs::path(out_dir) / "bias.csv").string(), bias_to_csv(rows));
    write_text((fs::path(out_dir) / "bias.json").string(),
               bias_to_json(rows));
    if (common.json_out)
        std::cout << bias_to_json(rows);
    else
        std::cout << bias_to_csv(rows);
    return 0;
}

int cmd_psnr(const CommonOpts& common, const std::string& manifest,
             const std::string& split, const std::string& out_file) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    Pipeline pipe(cfg);
    PsnrOutput ps = pipe.run_psnr(manifest, split);
    for (const std::string& w : ps.warnings) std::cerr << w << "\n";
    std::string csv = psnr_to_csv(ps.rows);
    if (!out_file.empty()) write_text(out_file, csv);
    if (common.json_out) {
        json rows = json::array();
        for (const PsnrSummary& r : ps.rows)
            rows.push_back({{"label", r.label},
                            {"frames", r.frames},
                            {"mean", r.mean},
                            {"median", r.median},
                            {"stddev", r.stddev}});
        std::cout << json{{"rows", rows}}.dump(2) << "\n";
    } else {
        std::cout << csv;
    }
    return 0;
}

int cmd_sweep(const CommonOpts& common, const std::string& manifest,
              const std::string& out_file, const std::string& m_list,
              const std::string& t_list, const std::string& a_list,
              const std::string& k_list) {
    PipelineConfig cfg;
    if (common_preamble(common, cfg)) return 0;
    Pipeline pipe(cfg);
    SweepGrid grid;
    grid.m_values = parse_dlist(m_list);
    grid.t_values = parse_ilist(t_list);
    grid.alpha_values = parse_dlist(a_list);
    grid.k_values = parse_ilist(k_list);
    std::vector<SweepPoint> rows = pipe.run_sweep(manifest, grid);
    std::string csv = sweep_to_csv(rows);
    if (!out_file.empty()) write_text(out_file, csv);
    if (common.json_out) {
        json jrows = json::array();
        for (const SweepPoint& p : rows) {
            json r = {{"m", p.m},     {"t", p.t},
                      {"alpha_p", p.alpha_p}, {"k", p.k},
                      {"skipped", p.skipped}};
            if (p.skipped) {
                r["note"] = p.note;
            } else {
                r["video_accuracy"] = p.video_accuracy;
                r["sample_accuracy"] = p.sample_accuracy;
                r["binary_accuracy"] = p.binary_accuracy;
            }
            jrows.push_back(std::move(r));
        }
        std::cout << json{{"rows", jrows}}.dump(2) << "\n";
    } else {
        std::cout << csv;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motion-magnified deepfake source detector"};
    app.require_subcommand(1);
    int rc = 0;

    CommonOpts o_synth;
    std::string synth_out;
    int synth_videos = 60, synth_frames = 64, synth_w = 144, synth_h = 144;
    double synth_tf = 0.7;
    {
        CLI::App* c = app.add_subcommand("synth-data",
                                         "generate the synthetic toy corpus");
        add_common(c, o_synth);
        c->add_option("--out", synth_out, "output directory")->required();
        c->add_option("--videos-per-class", synth_videos);
        c->add_option("--frames", synth_frames);
        c->add_option("--width", synth_w);
        c->add_option("--height", synth_h);
        c->add_option("--train-fraction", synth_tf);
        c->callback([&] {
            rc = cmd_synth(o_synth, synth_out, synth_videos, synth_frames,
                           synth_w, synth_h, synth_tf);
        });
    }

    CommonOpts o_tm;
    std::string tm_out;
    {
        CLI::App* c = app.add_subcommand(
            "train-magnifier", "train the learned magnifier on synthetic pairs");
        add_common(c, o_tm);
        add_magtrain_flags(c, o_tm);
        c->add_option("--out", tm_out, "weights output path")->required();
        c->callback([&] { rc = cmd_train_magnifier(o_tm, tm_out); });
    }

    struct WindowCmd {
        CommonOpts common;
        std::string video, landmarks, out;
    };
    WindowCmd wc_sample, wc_phase, wc_deep, wc_fuse;
    auto add_window_cmd = [&](const char* name, const char* desc,
                              WindowCmd& wc, const char* kind) {
        CLI::App* c = app.add_subcommand(name, desc);
        add_common(c, wc.common);
        add_sampling_flags(c, wc.common);
        c->add_option("--video", wc.video, "video path")->required();
        c->add_option("--landmarks", wc.landmarks, "landmark sidecar")
            ->required();
        c->add_option("--out", wc.out, "output directory")->required();
        std::string k = kind;
        c->callback([&wc, k, &rc] {
            rc = cmd_window_op(wc.common, wc.video, wc.landmarks, wc.out, k);
        });
        return c;
    };
    add_window_cmd("sample", "extract aligned face windows", wc_sample,
                   "window");
    {
        CLI::App* c = add_window_cmd("magnify-phase",
                                     "write phase-magnified window streams",
                                     wc_phase, "phase");
        add_phase_flags(c, wc_phase.common);
    }
    {
        CLI::App* c = add_window_cmd("magnify-deep",
                                     "write learned-magnifier window streams",
                                     wc_deep, "deep");
        add_deep_flags(c, wc_deep.common);
    }
    {
        CLI::App* c = add_window_cmd(
            "fuse", "write fused 4-channel window tensors", wc_fuse, "fused");
        add_phase_flags(c, wc_fuse.common);
        add_deep_flags(c, wc_fuse.common);
    }

    CommonOpts o_train;
    std::string train_manifest, train_out;
    {
        CLI::App* c = app.add_subcommand("train", "train the classifier");
        add_common(c, o_train);
        add_sampling_flags(c, o_train);
        add_phase_flags(c, o_train);
        add_deep_flags(c, o_train);
        add_train_flags(c, o_train);
        c->add_option("--manifest", train_manifest)->required();
        c->add_option("--out", train_out, "model output path")->required();
        c->callback([&] { rc = cmd_train(o_train, train_manifest, train_out); });
    }

    CommonOpts o_pred;
    std::string pred_model, pred_video, pred_lm;
    {
        CLI::App* c = app.add_subcommand("predict", "classify one video");
        add_common(c, o_pred);
        add_sampling_flags(c, o_pred);
        add_phase_flags(c, o_pred);
        add_deep_flags(c, o_pred);
        c->add_option("--model", pred_model)->required();
        c->add_option("--video", pred_video)->required();
        c->add_option("--landmarks", pred_lm)->required();
        c->callback(
            [&] { rc = cmd_predict(o_pred, pred_model, pred_video, pred_lm); });
    }

    CommonOpts o_eval;
    std::string eval_model, eval_manifest, eval_split = "test", eval_out;
    {
        CLI::App* c =
            app.add_subcommand("evaluate", "evaluate on a manifest split");
        add_common(c, o_eval);
        add_sampling_flags(c, o_eval);
        add_phase_flags(c, o_eval);
        add_deep_flags(c, o_eval);
        c->add_option("--model", eval_model)->required();
        c->add_option("--manifest", eval_manifest)->required();
        c->add_option("--split", eval_split, "train or test (default test)");
        c->add_option("--out", eval_out, "report directory")->required();
        c->callback([&] {
            rc = cmd_evaluate(o_eval, eval_model, eval_manifest, eval_split,
                              eval_out);
        });
    }

    CommonOpts o_bias;
    std::string bias_model, bias_manifest, bias_split = "test", bias_out;
    int bias_min = 5;
    {
        CLI::App* c = app.add_subcommand(
            "bias-report", "accuracy per demographic group");
        add_common(c, o_bias);
        add_sampling_flags(c, o_bias);
        add_phase_flags(c, o_bias);
        add_deep_flags(c, o_bias);
        c->add_option("--model", bias_model)->required();
        c->add_option("--manifest", bias_manifest)->required();
        c->add_option("--split", bias_split);
        c->add_option("--min-count", bias_min, "low-count flag threshold");
        c->add_option("--out", bias_out, "report directory")->required();
        c->callback([&] {
            rc = cmd_bias(o_bias, bias_model, bias_manifest, bias_split,
                          bias_min, bias_out);
        });
    }

    CommonOpts o_psnr;
    std::string psnr_manifest, psnr_split = "test", psnr_out;
    {
        CLI::App* c = app.add_subcommand(
            "psnr", "phase-magnification PSNR per class");
        add_common(c, o_psnr);
        add_sampling_flags(c, o_psnr);
        add_phase_flags(c, o_psnr);
        c->add_option("--manifest", psnr_manifest)->required();
        c->add_option("--split", psnr_split);
        c->add_option("--out", psnr_out, "CSV output path");
        c->callback(
            [&] { rc = cmd_psnr(o_psnr, psnr_manifest, psnr_split, psnr_out); });
    }

    CommonOpts o_sweep;
    std::string sweep_manifest, sweep_out, sweep_m, sweep_t, sweep_a, sweep_k;
    {
        CLI::App* c = app.add_subcommand(
            "sweep", "accuracy grid over magnification parameters");
        add_common(c, o_sweep);
        add_sampling_flags(c, o_sweep);
        add_phase_flags(c, o_sweep);
        add_deep_flags(c, o_sweep);
        add_train_flags(c, o_sweep);
        c->add_option("--manifest", sweep_manifest)->required();
        c->add_option("--out", sweep_out, "CSV output path");
        c->add_option("--m-values", sweep_m, "comma list of m");
        c->add_option("--t-values", sweep_t, "comma list of t");
        c->add_option("--alpha-values", sweep_a, "comma list of alpha_p");
        c->add_option("--k-values", sweep_k, "comma list of k");
        c->callback([&] {
            rc = cmd_sweep(o_sweep, sweep_manifest, sweep_out, sweep_m,
                           sweep_t, sweep_a, sweep_k);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return rc;
}
