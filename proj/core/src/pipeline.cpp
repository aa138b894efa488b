#include "mmsd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "mmsd/errors.hpp"
#include "mmsd/hash.hpp"
#include "mmsd/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmsd {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long val = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return static_cast<int>(val);
    } catch (const std::exception&) {
        throw UsageError("config key " + key + ": expected integer, got '" +
                         v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        unsigned long long val = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return val;
    } catch (const std::exception&) {
        throw UsageError("config key " + key + ": expected integer, got '" +
                         v + "'");
    }
}

double parse_dbl(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double val = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return val;
    } catch (const std::exception&) {
        throw UsageError("config key " + key + ": expected number, got '" + v +
                         "'");
    }
}

struct KeyDef {
    const char* key;
    void (*set)(PipelineConfig&, const std::string&, const std::string&);
    std::string (*get)(const PipelineConfig&);
};

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        {"sampler.k",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.sampler.k = parse_int(k, v);
         },
         [](const PipelineConfig& c) { return std::to_string(c.sampler.k); }},
        {"sampler.omega",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.sampler.omega = parse_int(k, v);
         },
         [](const PipelineConfig& c) {
             return std::to_string(c.sampler.omega);
         }},
        {"sampler.min_confidence",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.sampler.min_confidence = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) {
             return fmt_double(c.sampler.min_confidence);
         }},
        {"sampler.align",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             if (v == "per_frame")
                 c.sampler.align = AlignMode::per_frame;
             else if (v == "first_frame")
                 c.sampler.align = AlignMode::first_frame;
             else
                 throw UsageError("config key " + k +
                                  ": expected per_frame or first_frame");
         },
         [](const PipelineConfig& c) -> std::string {
             return c.sampler.align == AlignMode::per_frame ? "per_frame"
                                                            : "first_frame";
         }},
        {"pyramid.levels",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.pyramid.levels = parse_int(k, v);
         },
         [](const PipelineConfig& c) {
             return std::to_string(c.pyramid.levels);
         }},
        {"pyramid.orientations",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.pyramid.orientations = parse_int(k, v);
         },
         [](const PipelineConfig& c) {
             return std::to_string(c.pyramid.orientations);
         }},
        {"pyramid.transition",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.pyramid.transition = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) {
             return fmt_double(c.pyramid.transition);
         }},
        {"phase.t",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.phase.t = parse_int(k, v);
         },
         [](const PipelineConfig& c) { return std::to_string(c.phase.t); }},
        {"phase.alpha_p",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.phase.alpha_p = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.phase.alpha_p); }},
        {"phase.f_lo",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.phase.f_lo = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.phase.f_lo); }},
        {"phase.f_hi",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.phase.f_hi = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.phase.f_hi); }},
        {"phase.fps",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.phase.fps = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.phase.fps); }},
        {"phase.filter",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             if (v == "mean_removal")
                 c.phase.filter = TemporalFilter::mean_removal;
             else if (v == "windowed_bandpass")
                 c.phase.filter = TemporalFilter::windowed_bandpass;
             else
                 throw UsageError("config key " + k +
                                  ": expected mean_removal or "
                                  "windowed_bandpass");
         },
         [](const PipelineConfig& c) -> std::string {
             return c.phase.filter == TemporalFilter::mean_removal
                        ? "mean_removal"
                        : "windowed_bandpass";
         }},
        {"phase.smooth_sigma",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.phase.smooth_sigma = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) {
             return fmt_double(c.phase.smooth_sigma);
         }},
        {"deep.m",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.deep.m = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.deep.m); }},
        {"deep.mode",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             if (v == "dynamic")
                 c.deep.mode = RefMode::dynamic_prev;
             else if (v == "static")
                 c.deep.mode = RefMode::static_first;
             else
                 throw UsageError("config key " + k +
                                  ": expected dynamic or static");
         },
         [](const PipelineConfig& c) -> std::string {
             return c.deep.mode == RefMode::dynamic_prev ? "dynamic"
                                                         : "static";
         }},
        {"deep.base_channels",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.deep.base_channels = parse_int(k, v);
         },
         [](const PipelineConfig& c) {
             return std::to_string(c.deep.base_channels);
         }},
        {"deep.weights",
         [](PipelineConfig& c, const std::string&, const std::string& v) {
             c.deep.weights_path = v;
         },
         [](const PipelineConfig& c) { return c.deep.weights_path; }},
        {"classifier.width_multiplier",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.width_multiplier = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) {
             return fmt_double(c.width_multiplier);
         }},
        {"classifier.dropout",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.dropout = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.dropout); }},
        {"train.epochs",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.epochs = parse_int(k, v);
         },
         [](const PipelineConfig& c) { return std::to_string(c.train.epochs); }},
        {"train.batch",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.batch = parse_int(k, v);
         },
         [](const PipelineConfig& c) { return std::to_string(c.train.batch); }},
        {"train.lr",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.train.lr = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.train.lr); }},
        {"train.val_fraction",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.val_fraction = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.val_fraction); }},
        {"mag_train.epochs",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.mag_train.epochs = parse_int(k, v);
         },
         [](const PipelineConfig& c) {
             return std::to_string(c.mag_train.epochs);
         }},
        {"mag_train.batch",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.mag_train.batch = parse_int(k, v);
         },
         [](const PipelineConfig& c) {
             return std::to_string(c.mag_train.batch);
         }},
        {"mag_train.lr",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.mag_train.lr = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) { return fmt_double(c.mag_train.lr); }},
        {"mag_train.pairs",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.mag_pairs = parse_int(k, v);
         },
         [](const PipelineConfig& c) { return std::to_string(c.mag_pairs); }},
        {"seed",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.seed = parse_u64(k, v);
         },
         [](const PipelineConfig& c) { return std::to_string(c.seed); }},
        {"workers",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.workers = parse_int(k, v);
         },
         [](const PipelineConfig& c) { return std::to_string(c.workers); }},
        {"cache_dir",
         [](PipelineConfig& c, const std::string&, const std::string& v) {
             c.cache_dir = v;
         },
         [](const PipelineConfig& c) { return c.cache_dir; }},
        {"decode.fps",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.decode.default_fps = parse_dbl(k, v);
         },
         [](const PipelineConfig& c) {
             return fmt_double(c.decode.default_fps);
         }},
        {"decode.external",
         [](PipelineConfig& c, const std::string&, const std::string& v) {
             c.decode.external_decoder = v;
         },
         [](const PipelineConfig& c) { return c.decode.external_decoder; }},
    };
    return table;
}

// tag keeps temp names distinct when workers race on a shared target;
// rename makes the final file appear whole or not at all
void atomic_write_text(const std::string& path, const std::string& text,
                       int tag = 0) {
    std::string tmp = path + ".tmp" + std::to_string(tag);
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + tmp);
        f << text;
        if (!f.good()) throw DataError("write failed: " + tmp);
    }
    fs::rename(tmp, path);
}

// Intermediate caches ride the float tensor container so a reload feeds
// fusion the same 32-bit values the fresh path would.
void save_window_cache(const std::string& path, const SampleWindow& win,
                       int tag) {
    WeightsFile wf;
    NamedTensor t;
    t.name = "frames";
    t.shape = {win.frames.frames, win.frames.height, win.frames.width,
               win.frames.channels};
    t.data = win.frames.data;
    wf.tensors.push_back(std::move(t));
    wf.metadata =
        json{{"fps", win.frames.fps}, {"start", win.start}}.dump();
    std::string tmp = path + ".tmp" + std::to_string(tag);
    save_weights(tmp, wf);
    fs::rename(tmp, path);
}

SampleWindow load_window_cache(const std::string& path,
                               const std::string& video_id) {
    WeightsFile wf = load_weights(path);
    const NamedTensor* t = wf.find("frames");
    if (!t || t->shape.size() != 4)
        throw DataError("bad window cache: " + path);
    SampleWindow win;
    win.video_id = video_id;
    win.frames.frames = t->shape[0];
    win.frames.height = t->shape[1];
    win.frames.width = t->shape[2];
    win.frames.channels = t->shape[3];
    win.frames.data = t->data;
    json meta = json::parse(wf.metadata, nullptr, false);
    if (!meta.is_object())
        throw DataError("bad window cache metadata: " + path);
    win.frames.fps = meta.value("fps", 30.0);
    win.start = meta.value("start", 0);
    win.frames.validate();
    return win;
}

void save_clip_cache(const std::string& path, const FrameClip& clip,
                     int tag) {
    WeightsFile wf;
    NamedTensor t;
    t.name = "frames";
    t.shape = {clip.frames, clip.height, clip.width, clip.channels};
    t.data = clip.data;
    wf.tensors.push_back(std::move(t));
    wf.metadata = json{{"fps", clip.fps}}.dump();
    std::string tmp = path + ".tmp" + std::to_string(tag);
    save_weights(tmp, wf);
    fs::rename(tmp, path);
}

FrameClip load_clip_cache(const std::string& path) {
    WeightsFile wf = load_weights(path);
    const NamedTensor* t = wf.find("frames");
    if (!t || t->shape.size() != 4) throw DataError("bad clip cache: " + path);
    FrameClip clip;
    clip.frames = t->shape[0];
    clip.height = t->shape[1];
    clip.width = t->shape[2];
    clip.channels = t->shape[3];
    clip.data = t->data;
    json meta = json::parse(wf.metadata, nullptr, false);
    if (meta.is_object()) clip.fps = meta.value("fps", 30.0);
    clip.validate();
    return clip;
}

void save_phase_cache(const std::string& path,
                      const std::vector<RealGrid>& grids, int tag) {
    if (grids.empty()) throw DataError("empty phase stream");
    WeightsFile wf;
    NamedTensor t;
    t.name = "grids";
    t.shape = {static_cast<int>(grids.size()), grids[0].h, grids[0].w};
    t.data.reserve(grids.size() * grids[0].size());
    for (const RealGrid& g : grids)
        for (double v : g.v) t.data.push_back(static_cast<float>(v));
    wf.tensors.push_back(std::move(t));
    std::string tmp = path + ".tmp" + std::to_string(tag);
    save_weights(tmp, wf);
    fs::rename(tmp, path);
}

std::vector<RealGrid> load_phase_cache(const std::string& path) {
    WeightsFile wf = load_weights(path);
    const NamedTensor* t = wf.find("grids");
    if (!t || t->shape.size() != 3)
        throw DataError("bad phase cache: " + path);
    std::vector<RealGrid> grids;
    size_t off = 0;
    for (int j = 0; j < t->shape[0]; ++j) {
        RealGrid g(t->shape[2], t->shape[1]);
        for (double& v : g.v) v = t->data[off++];
        grids.push_back(std::move(g));
    }
    return grids;
}

void shuffle_in_place(std::vector<std::string>& v, nn::NormalSampler& rng) {
    for (size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.raw() % i]);
}

}  // namespace

void validate_pipeline_config(const PipelineConfig& cfg) {
    if (cfg.sampler.k < 1) throw UsageError("sampler.k must be >= 1");
    if (cfg.sampler.omega < 2) throw UsageError("sampler.omega must be >= 2");
    if (cfg.sampler.min_confidence < 0.0 || cfg.sampler.min_confidence > 1.0)
        throw UsageError("sampler.min_confidence must lie in [0,1]");
    if (cfg.pyramid.levels < 1) throw UsageError("pyramid.levels must be >= 1");
    if (cfg.pyramid.orientations < 1)
        throw UsageError("pyramid.orientations must be >= 1");
    if (!(cfg.pyramid.transition > 0.0) || cfg.pyramid.transition > 3.0)
        throw UsageError("pyramid.transition must lie in (0,3]");
    if (cfg.phase.t < 2) throw UsageError("phase.t must be >= 2");
    if (cfg.phase.t > cfg.sampler.omega)
        throw UsageError("phase.t must not exceed sampler.omega");
    if (cfg.phase.alpha_p < 0.0) throw UsageError("phase.alpha_p must be >= 0");
    if (cfg.phase.smooth_sigma < 0.0)
        throw UsageError("phase.smooth_sigma must be >= 0");
    if (!(cfg.phase.fps > 0.0)) throw UsageError("phase.fps must be positive");
    if (cfg.phase.filter == TemporalFilter::windowed_bandpass) {
        if (cfg.phase.f_lo < 0.0 || cfg.phase.f_lo >= cfg.phase.f_hi ||
            cfg.phase.f_hi > cfg.phase.fps / 2.0 + 1e-12)
            throw UsageError(
                "band edges must satisfy 0 <= f_lo < f_hi <= fps/2");
    }
    if (!(cfg.deep.m >= 0.0)) throw UsageError("deep.m must be >= 0");
    if (cfg.deep.base_channels < 2)
        throw UsageError("deep.base_channels must be >= 2");
    if (!(cfg.width_multiplier > 0.0) || cfg.width_multiplier > 8.0)
        throw UsageError("classifier.width_multiplier must lie in (0,8]");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
        throw UsageError("classifier.dropout must lie in [0,1)");
    if (cfg.train.epochs < 1) throw UsageError("train.epochs must be >= 1");
    if (cfg.train.batch < 1) throw UsageError("train.batch must be >= 1");
    if (!(cfg.train.lr > 0.0)) throw UsageError("train.lr must be positive");
    if (cfg.val_fraction < 0.0 || cfg.val_fraction > 0.9)
        throw UsageError("train.val_fraction must lie in [0,0.9]");
    if (cfg.mag_train.epochs < 1)
        throw UsageError("mag_train.epochs must be >= 1");
    if (cfg.mag_train.batch < 1)
        throw UsageError("mag_train.batch must be >= 1");
    if (!(cfg.mag_train.lr > 0.0))
        throw UsageError("mag_train.lr must be positive");
    if (cfg.mag_pairs < 2) throw UsageError("mag_train.pairs must be >= 2");
    if (cfg.workers < 1 || cfg.workers > 64)
        throw UsageError("workers must lie in [1,64]");
    if (!(cfg.decode.default_fps > 0.0))
        throw UsageError("decode.fps must be positive");
}

void apply_config_kv(PipelineConfig& cfg, const std::string& key,
                     const std::string& value) {
    for (const KeyDef& def : key_table()) {
        if (key == def.key) {
            def.set(cfg, key, value);
            return;
        }
    }
    throw UsageError("unknown config key: " + key);
}

std::map<std::string, std::string> config_kv(const PipelineConfig& cfg) {
    std::map<std::string, std::string> kv;
    for (const KeyDef& def : key_table()) kv[def.key] = def.get(cfg);
    return kv;
}

std::string resolve_cache_dir(const PipelineConfig& cfg) {
    if (!cfg.cache_dir.empty()) return cfg.cache_dir;
    const char* env = std::getenv("MMSD_CACHE_DIR");
    if (env && *env) return env;
    return ".mmsd-cache";
}

Pipeline::Pipeline(const PipelineConfig& cfg) : cfg_(cfg) {
    validate_pipeline_config(cfg_);
    cache_dir_ = resolve_cache_dir(cfg_);
}

FrameClip Pipeline::load_video(const std::string& path) const {
    return load_clip(path, cfg_.decode);
}

SampleResult Pipeline::sample(const std::string& video_path,
                              const std::string& landmarks_path,
                              const std::string& video_id) const {
    FrameClip clip = load_clip(video_path, cfg_.decode);
    LandmarkTrack track = load_landmarks(landmarks_path);
    return extract_samples(clip, track, cfg_.sampler, video_id);
}

std::vector<RealGrid> Pipeline::phase_stream(const SampleWindow& window) const {
    PhaseConfig pc = cfg_.phase;
    // band edges are in Hz against the clip's own timebase
    pc.fps = window.frames.fps;
    return magnify_clip(window, pc, cfg_.pyramid);
}

FrameClip Pipeline::deep_stream(const SampleWindow& window) {
    return magnifier().magnify_clip(window);
}

FusedTensor Pipeline::fuse_window(const SampleWindow& window) {
    FrameClip deep = magnifier().magnify_clip(window);
    std::vector<RealGrid> phase = phase_stream(window);
    return fuse(deep, phase, cfg_.phase.t);
}

DeepMagnifier& Pipeline::magnifier() {
    if (!mag_) mag_ = make_magnifier();
    return *mag_;
}

std::unique_ptr<DeepMagnifier> Pipeline::make_magnifier() const {
    auto mag = std::make_unique<DeepMagnifier>(cfg_.deep, cfg_.seed + 1);
    if (!cfg_.deep.weights_path.empty()) mag->load(cfg_.deep.weights_path);
    return mag;
}

std::string Pipeline::file_hash(const std::string& path) const {
    std::lock_guard<std::mutex> lock(hash_mutex_);
    auto it = hash_cache_.find(path);
    if (it != hash_cache_.end()) return it->second;
    std::string h = sha256_file(path);
    hash_cache_[path] = h;
    return h;
}

// Digest strings cover exactly the config fields a cache tier depends on.
// k is deliberately absent from sampler_digest: it changes which starts are
// selected, never the content of a window at a given start, so window files
// are shared across k.
std::string Pipeline::sampler_digest() const {
    std::ostringstream s;
    const PipelineConfig& c = cfg_;
    s << "omega=" << c.sampler.omega
      << ";minconf=" << fmt_double(c.sampler.min_confidence) << ";align="
      << (c.sampler.align == AlignMode::per_frame ? "per_frame"
                                                  : "first_frame")
      << ";dfps=" << fmt_double(c.decode.default_fps);
    return s.str();
}

std::string Pipeline::phase_digest() const {
    std::ostringstream s;
    const PipelineConfig& c = cfg_;
    s << "levels=" << c.pyramid.levels << ";orient=" << c.pyramid.orientations
      << ";trans=" << fmt_double(c.pyramid.transition) << ";t=" << c.phase.t
      << ";alpha=" << fmt_double(c.phase.alpha_p)
      << ";flo=" << fmt_double(c.phase.f_lo)
      << ";fhi=" << fmt_double(c.phase.f_hi)
      << ";filter=" << (c.phase.filter == TemporalFilter::mean_removal ? 0 : 1)
      << ";sigma=" << fmt_double(c.phase.smooth_sigma);
    return s.str();
}

std::string Pipeline::deep_digest() const {
    std::ostringstream s;
    const PipelineConfig& c = cfg_;
    s << "m=" << fmt_double(c.deep.m) << ";mode="
      << (c.deep.mode == RefMode::dynamic_prev ? 0 : 1)
      << ";base=" << c.deep.base_channels;
    return s.str();
}

namespace {

template <class Fn>
void for_each_indexed(int n, int workers, Fn&& fn) {
    if (n <= 0) return;
    int nw = std::clamp(workers, 1, n);
    if (nw == 1) {
        for (int i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w) {
        pool.emplace_back([&, w] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i, w);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

PrepareResult Pipeline::prepare(const std::vector<const ManifestEntry*>& entries,
                                const DatasetManifest& manifest) {
    if (entries.empty()) throw DataError("no entries in requested split");
    if (cfg_.deep.weights_path.empty())
        throw UsageError(
            "deep.weights must point to trained magnifier weights; run "
            "train-magnifier first");
    std::string weights_hash = file_hash(cfg_.deep.weights_path);
    std::string samp_dig = sampler_digest();
    std::string ph_dig = phase_digest();
    std::string dp_dig = deep_digest();
    fs::path listings_dir = fs::path(cache_dir_) / "listings";
    fs::path windows_dir = fs::path(cache_dir_) / "windows";
    fs::path phase_dir = fs::path(cache_dir_) / "phase";
    fs::path deep_dir = fs::path(cache_dir_) / "deep";
    fs::path fused_dir = fs::path(cache_dir_) / "fused";
    for (const fs::path& d :
         {listings_dir, windows_dir, phase_dir, deep_dir, fused_dir})
        fs::create_directories(d);

    struct Task {
        std::vector<WindowRef> refs;
        std::vector<std::string> warnings;
    };
    std::vector<Task> tasks(entries.size());

    int n = static_cast<int>(entries.size());
    int nw = std::clamp(cfg_.workers, 1, n);
    std::vector<std::unique_ptr<DeepMagnifier>> mags;
    for (int w = 0; w < nw; ++w) mags.push_back(make_magnifier());

    PhaseConfig base_phase = cfg_.phase;
    auto key40 = [](const std::string& s) {
        return sha256_hex(s).substr(0, 40);
    };
    for_each_indexed(n, nw, [&](int i, int w) {
        const ManifestEntry& e = *entries[i];
        Task& task = tasks[i];
        int label = manifest.label_index(e.label);
        const std::string& video_path = e.video;
        const std::string& lm_path = e.landmarks;
        std::string mat = file_hash(video_path) + "|" + file_hash(lm_path) +
                          "|" + samp_dig;
        auto window_path = [&](int start) {
            return (windows_dir /
                    (key40("win|" + mat + ";start=" + std::to_string(start)) +
                     ".mmw"))
                .string();
        };

        // Sampling runs at most once per video and only when some cache
        // tier needs the pixels.
        std::map<int, SampleWindow> live;
        std::vector<std::string> sample_warnings;
        bool sampled = false;
        auto materialize = [&]() {
            if (sampled) return;
            sampled = true;
            SampleResult sr;
            try {
                FrameClip clip = load_clip(video_path, cfg_.decode);
                LandmarkTrack track = load_landmarks(lm_path);
                sr = extract_samples(clip, track, cfg_.sampler, e.video);
            } catch (const DataError& err) {
                sr.windows.clear();
                sr.warnings.assign(
                    {"rejected video " + e.video + ": " + err.what()});
            }
            sample_warnings = sr.warnings;
            for (SampleWindow& win : sr.windows) {
                std::string wp = window_path(win.start);
                if (!fs::exists(wp)) save_window_cache(wp, win, w);
                live.emplace(win.start, std::move(win));
            }
        };
        auto ensure_window = [&](int start) -> const SampleWindow& {
            auto it = live.find(start);
            if (it != live.end()) return it->second;
            std::string wp = window_path(start);
            if (fs::exists(wp)) {
                auto pos = live.emplace(start, load_window_cache(wp, e.video));
                return pos.first->second;
            }
            materialize();
            it = live.find(start);
            if (it == live.end())
                throw DataError("cached window listing for " + e.video +
                                " no longer matches its content");
            return it->second;
        };

        // the listing records the sampling outcome (starts + warnings);
        // it depends on k, the window files do not
        std::string listing_path =
            (listings_dir /
             (key40("list|" + mat + ";k=" + std::to_string(cfg_.sampler.k)) +
              ".json"))
                .string();
        json listing;
        {
            std::ifstream f(listing_path, std::ios::binary);
            if (f) {
                try {
                    f >> listing;
                } catch (const json::exception&) {
                    listing = json();
                }
            }
        }
        if (!listing.is_object() || !listing.contains("starts") ||
            !listing.contains("warnings")) {
            materialize();
            json starts = json::array();
            for (const auto& kv : live) starts.push_back(kv.first);
            listing = json{{"video", e.video},
                           {"starts", starts},
                           {"warnings", sample_warnings}};
            atomic_write_text(listing_path, listing.dump(2), w);
        }
        for (const auto& wj : listing["warnings"])
            task.warnings.push_back(wj.get<std::string>());

        for (const auto& sj : listing["starts"]) {
            int start = sj.get<int>();
            std::string suffix = ";start=" + std::to_string(start);
            std::string fpath =
                (fused_dir / (key40("fu|" + mat + ";" + ph_dig + ";" + dp_dig +
                                    ";wh=" + weights_hash + suffix) +
                              ".mmc1"))
                    .string();
            if (!fs::exists(fpath)) {
                std::string ppath =
                    (phase_dir /
                     (key40("ph|" + mat + ";" + ph_dig + suffix) + ".mmw"))
                        .string();
                std::vector<RealGrid> phase;
                if (fs::exists(ppath)) {
                    phase = load_phase_cache(ppath);
                } else {
                    const SampleWindow& win = ensure_window(start);
                    PhaseConfig pc = base_phase;
                    pc.fps = win.frames.fps;
                    phase = magnify_clip(win, pc, cfg_.pyramid);
                    save_phase_cache(ppath, phase, w);
                }
                std::string dpath =
                    (deep_dir / (key40("dp|" + mat + ";" + dp_dig +
                                       ";wh=" + weights_hash + suffix) +
                                 ".mmw"))
                        .string();
                FrameClip deep;
                if (fs::exists(dpath)) {
                    deep = load_clip_cache(dpath);
                } else {
                    deep = mags[w]->magnify_clip(ensure_window(start));
                    save_clip_cache(dpath, deep, w);
                }
                FusedTensor ft = fuse(deep, phase, cfg_.phase.t);
                json sidecar = {{"video", e.video},
                                {"start", start},
                                {"label", e.label},
                                {"weights", weights_hash},
                                {"sampler", samp_dig},
                                {"phase", ph_dig},
                                {"deep", dp_dig}};
                std::string ftmp = fpath + ".tmp" + std::to_string(w);
                save_fused(ftmp, ft, sidecar.dump());
                fs::rename(ftmp, fpath);
            }
            WindowRef r;
            r.video = e.video;
            r.start = start;
            r.label = label;
            r.id = e.video + "#" + std::to_string(start);
            r.tensor_path = fpath;
            task.refs.push_back(std::move(r));
        }
    });

    PrepareResult out;
    for (Task& t : tasks) {
        for (WindowRef& r : t.refs) out.windows.push_back(std::move(r));
        for (std::string& warn : t.warnings)
            out.warnings.push_back(std::move(warn));
    }
    return out;
}

std::vector<EpochLoss> Pipeline::run_train_magnifier(
    const std::string& weights_out) {
    DeepMagnifier mag(cfg_.deep, cfg_.seed + 1);
    std::vector<PairSample> pairs =
        DeepMagnifier::generate_synthetic_pairs(cfg_.seed, cfg_.mag_pairs);
    MagnifierTrainConfig tc = cfg_.mag_train;
    tc.seed = cfg_.seed;
    std::vector<EpochLoss> log = mag.train_toy(pairs, tc);
    fs::path parent = fs::path(weights_out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    mag.save(weights_out);
    return log;
}

Classifier Pipeline::load_model(const std::string& path) const {
    Classifier clf = Classifier::load_artifact(path);
    if (clf.labels.empty()) throw DataError("model has no label table");
    int temporal = cfg_.sampler.omega - (cfg_.phase.t - 1);
    if (clf.config().input_temporal != temporal)
        throw UsageError(
            "model expects " + std::to_string(clf.config().input_temporal) +
            " fused frames per window but sampler.omega/phase.t give " +
            std::to_string(temporal));
    return clf;
}

TrainSummary Pipeline::run_train(const std::string& manifest_path,
                                 const std::string& model_out) {
    DatasetManifest man = load_manifest(manifest_path);
    std::vector<const ManifestEntry*> train_entries = man.split("train");
    if (train_entries.empty()) throw DataError("manifest has no train split");

    PrepareResult prep = prepare(train_entries, man);
    if (prep.windows.empty()) throw DataError("no usable training windows");

    // validation videos held out per class so no video straddles the split
    std::vector<std::vector<std::string>> class_videos(man.num_classes());
    std::set<std::string> seen;
    for (const WindowRef& r : prep.windows) {
        if (seen.insert(r.video).second)
            class_videos[r.label].push_back(r.video);
    }
    std::set<std::string> val_videos;
    nn::NormalSampler split_rng(cfg_.seed ^ 0x5eedull);
    for (auto& vids : class_videos) {
        shuffle_in_place(vids, split_rng);
        int nval = static_cast<int>(
            std::floor(cfg_.val_fraction * static_cast<double>(vids.size())));
        if (cfg_.val_fraction > 0.0 && vids.size() >= 2 && nval == 0) nval = 1;
        for (int i = 0; i < nval; ++i) val_videos.insert(vids[i]);
    }

    std::vector<DatasetSample> train_set, val_set;
    std::unordered_map<std::string, std::string> path_of;
    for (const WindowRef& r : prep.windows) {
        path_of[r.id] = r.tensor_path;
        DatasetSample s{r.id, r.label};
        if (val_videos.count(r.video))
            val_set.push_back(std::move(s));
        else
            train_set.push_back(std::move(s));
    }

    StatsAccumulator acc;
    for (const DatasetSample& s : train_set)
        acc.add(load_fused(path_of[s.id], nullptr));
    ChannelStats stats = acc.finish();

    ClassifierConfig ccfg;
    ccfg.num_classes = man.num_classes();
    ccfg.width_multiplier = cfg_.width_multiplier;
    ccfg.dropout = cfg_.dropout;
    ccfg.input_channels = 4;
    ccfg.input_temporal = cfg_.sampler.omega - (cfg_.phase.t - 1);
    ccfg.input_height = kFaceSize;
    ccfg.input_width = kFaceSize;

    Classifier clf(ccfg, cfg_.seed);
    clf.stats = stats;
    clf.labels = man.labels;
    clf.seed = cfg_.seed;
    Classifier::Loader loader = [&](const std::string& id) {
        auto it = path_of.find(id);
        if (it == path_of.end()) throw DataError("unknown sample id: " + id);
        FusedTensor t = load_fused(it->second, nullptr);
        normalize(t, stats);
        return t;
    };
    TrainConfig tc = cfg_.train;
    tc.seed = cfg_.seed;

    TrainSummary out;
    out.log = clf.train(train_set, val_set, loader, tc);
    fs::path parent = fs::path(model_out).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    clf.save(model_out);
    out.model_path = model_out;
    out.train_windows = static_cast<int>(train_set.size());
    out.val_windows = static_cast<int>(val_set.size());
    out.warnings = prep.warnings;
    return out;
}

VideoVerdict Pipeline::run_predict(const std::string& model_path,
                                   const std::string& video_path,
                                   const std::string& landmarks_path) {
    Classifier clf = load_model(model_path);
    std::string video_id = fs::path(video_path).filename().string();
    SampleResult sr = sample(video_path, landmarks_path, video_id);
    if (sr.windows.empty())
        throw DataError("no usable windows in video " + video_id);
    std::vector<SamplePrediction> preds;
    for (const SampleWindow& w : sr.windows) {
        FusedTensor ft = fuse_window(w);
        normalize(ft, clf.stats);
        preds.push_back(
            clf.predict(ft, w.video_id + "#" + std::to_string(w.start)));
    }
    return aggregate(video_id, preds,
                     static_cast<int>(clf.labels.size()));
}

EvalOutput Pipeline::run_evaluate(const std::string& model_path,
                                  const std::string& manifest_path,
                                  const std::string& split) {
    Classifier clf = load_model(model_path);
    DatasetManifest man = load_manifest(manifest_path);
    if (clf.labels != man.labels)
        throw DataError("model label table does not match manifest");
    std::vector<const ManifestEntry*> entries = man.split(split);
    if (entries.empty())
        throw DataError("manifest has no '" + split + "' entries");

    PrepareResult prep = prepare(entries, man);
    EvalOutput out;
    out.warnings = prep.warnings;

    std::unordered_map<std::string, std::vector<const WindowRef*>> by_video;
    for (const WindowRef& r : prep.windows)
        by_video[r.video].push_back(&r);

    for (const ManifestEntry* e : entries) {
        auto it = by_video.find(e->video);
        if (it == by_video.end()) continue;  // rejected, already warned
        std::vector<SamplePrediction> preds;
        for (const WindowRef* r : it->second) {
            FusedTensor ft = load_fused(r->tensor_path, nullptr);
            normalize(ft, clf.stats);
            preds.push_back(clf.predict(ft, r->id));
        }
        out.verdicts.push_back(aggregate(
            e->video, preds, static_cast<int>(clf.labels.size())));
        out.truths.push_back(man.label_index(e->label));
        out.groups.push_back(VideoGroup{e->skin_tone.value_or(""),
                                        e->gender.value_or("")});
    }
    if (out.verdicts.empty())
        throw DataError("every video in split '" + split + "' was rejected");
    out.report = build_report(out.verdicts, out.truths, man.labels,
                              DatasetManifest::kRealIndex);
    return out;
}

PsnrOutput Pipeline::run_psnr(const std::string& manifest_path,
                              const std::string& split) {
    DatasetManifest man = load_manifest(manifest_path);
    std::vector<const ManifestEntry*> entries = man.split(split);
    if (entries.empty())
        throw DataError("manifest has no '" + split + "' entries");

    PsnrOutput out;
    std::vector<std::vector<double>> per_label(man.num_classes());
    int center = cfg_.phase.t / 2;
    for (const ManifestEntry* e : entries) {
        SampleResult sr;
        try {
            sr = sample(e->video, e->landmarks, e->video);
        } catch (const DataError& err) {
            out.warnings.push_back("rejected video " + e->video + ": " +
                                   err.what());
            continue;
        }
        for (const std::string& w : sr.warnings) out.warnings.push_back(w);
        int label = man.label_index(e->label);
        for (const SampleWindow& w : sr.windows) {
            std::vector<RealGrid> magnified = phase_stream(w);
            std::vector<RealGrid> originals;
            originals.reserve(magnified.size());
            for (size_t j = 0; j < magnified.size(); ++j)
                originals.push_back(
                    w.frames.luminance(static_cast<int>(j) + center));
            std::vector<double> vals = psnr_series(originals, magnified);
            auto& bucket = per_label[label];
            bucket.insert(bucket.end(), vals.begin(), vals.end());
        }
    }
    for (int c = 0; c < man.num_classes(); ++c) {
        if (per_label[c].empty()) {
            out.warnings.push_back("no frames for class " + man.labels[c]);
            continue;
        }
        out.rows.push_back(summarize_psnr(man.labels[c], per_label[c]));
    }
    return out;
}

std::vector<SweepPoint> Pipeline::run_sweep(const std::string& manifest_path,
                                            const SweepGrid& grid) {
    std::vector<double> ms = grid.m_values.empty()
                                 ? std::vector<double>{cfg_.deep.m}
                                 : grid.m_values;
    std::vector<int> ts =
        grid.t_values.empty() ? std::vector<int>{cfg_.phase.t} : grid.t_values;
    std::vector<double> alphas = grid.alpha_values.empty()
                                     ? std::vector<double>{cfg_.phase.alpha_p}
                                     : grid.alpha_values;
    std::vector<int> ks =
        grid.k_values.empty() ? std::vector<int>{cfg_.sampler.k}
                              : grid.k_values;

    std::vector<SweepPoint> rows;
    fs::path model_dir = fs::path(cache_dir_) / "sweep-models";
    fs::create_directories(model_dir);
    for (double m : ms)
        for (int t : ts)
            for (double a : alphas)
                for (int k : ks) {
                    SweepPoint p;
                    p.m = m;
                    p.t = t;
                    p.alpha_p = a;
                    p.k = k;
                    if (t < 2 || t > cfg_.sampler.omega) {
                        p.skipped = true;
                        p.note = "t exceeds window length omega=" +
                                 std::to_string(cfg_.sampler.omega);
                        rows.push_back(p);
                        continue;
                    }
                    if (k < 1) {
                        p.skipped = true;
                        p.note = "k must be >= 1";
                        rows.push_back(p);
                        continue;
                    }
                    PipelineConfig sub = cfg_;
                    sub.deep.m = m;
                    sub.phase.t = t;
                    sub.phase.alpha_p = a;
                    sub.sampler.k = k;
                    sub.cache_dir = cache_dir_;
                    Pipeline sp(sub);
                    char name[96];
                    std::snprintf(name, sizeof(name),
                                  "sweep-m%g-t%d-a%g-k%d.model", m, t, a, k);
                    std::string model = (model_dir / name).string();
                    sp.run_train(manifest_path, model);
                    EvalOutput ev = sp.run_evaluate(model, manifest_path);
                    p.video_accuracy = ev.report.video_accuracy;
                    p.sample_accuracy = ev.report.sample_accuracy;
                    p.binary_accuracy = ev.report.binary_accuracy;
                    rows.push_back(p);
                }
    return rows;
}

}  // namespace mmsd
