#include "mmsd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "mmsd/clip_io.hpp"
#include "mmsd/errors.hpp"
#include "mmsd/grid.hpp"
#include "mmsd/landmarks.hpp"
#include "mmsd/nn.hpp"
#include "mmsd/sampler.hpp"

namespace fs = std::filesystem;

namespace mmsd {

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a * 0x9e3779b97f4a7c15ull + b + 0x2545f4914f6cdd1dull;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    return x;
}

// Separable Gaussian blur with reflected borders; used only for texture
// synthesis, quality over speed.
void blur_grid(RealGrid& g, double sigma) {
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    RealGrid tmp(g.w, g.h);
    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i - 1;
            if (i >= n) i = 2 * n - 1 - i;
        }
        return i;
    };
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * g.at(y, reflect(x + i, g.w));
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp.at(reflect(y + i, g.h), x);
            g.at(y, x) = acc;
        }
}

RealGrid noise_grid(int w, int h, nn::NormalSampler& rng, double sigma) {
    RealGrid g(w, h);
    for (double& v : g.v) v = rng.normal();
    blur_grid(g, sigma);
    double mean = 0.0;
    for (double v : g.v) mean += v;
    mean /= g.v.size();
    double var = 0.0;
    for (double v : g.v) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / g.v.size());
    if (sd < 1e-12) sd = 1.0;
    for (double& v : g.v) v = (v - mean) / sd;
    return g;
}

double bilinear(const RealGrid& g, double x, double y) {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    auto cx = [&](int i) { return std::clamp(i, 0, g.w - 1); };
    auto cy = [&](int i) { return std::clamp(i, 0, g.h - 1); };
    double v00 = g.at(cy(y0), cx(x0)), v01 = g.at(cy(y0), cx(x0 + 1));
    double v10 = g.at(cy(y0 + 1), cx(x0)), v11 = g.at(cy(y0 + 1), cx(x0 + 1));
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) +
           fy * ((1 - fx) * v10 + fx * v11);
}

struct VideoPlan {
    double scale, rot, cx, cy;          // face placement on the canvas
    double ax, ay, px, py, phx, phy;    // drift amplitudes, periods, phases
    double fx, fy;                      // genA spatial frequencies
};

VideoPlan plan_video(nn::NormalSampler& rng) {
    VideoPlan p;
    p.scale = 0.96 + 0.08 * rng.uniform();
    p.rot = 0.08 * (rng.uniform() - 0.5);
    p.cx = 72.0 + 4.0 * (rng.uniform() - 0.5);
    p.cy = 84.0 + 4.0 * (rng.uniform() - 0.5);
    p.ax = 0.8 + 0.8 * rng.uniform();
    p.ay = 0.8 + 0.8 * rng.uniform();
    p.px = 24.0 + 16.0 * rng.uniform();
    p.py = 24.0 + 16.0 * rng.uniform();
    p.phx = 2.0 * M_PI * rng.uniform();
    p.phy = 2.0 * M_PI * rng.uniform();
    p.fx = 2.0 * M_PI * 0.09;
    p.fy = 2.0 * M_PI * 0.115;
    return p;
}

constexpr int kMargin = 4;  // drift stays under this, so sampling never clamps

void render_video(const SynthConfig& cfg, const VideoPlan& plan, int cls,
                  nn::NormalSampler& rng, FrameClip& clip,
                  LandmarkTrack& track) {
    const int W = cfg.width, H = cfg.height;
    const int bw = W + 2 * kMargin, bh = H + 2 * kMargin;

    // Static scene: blurred noise at two scales plus a radial bump so the
    // aligned crop has content across pyramid levels.
    RealGrid coarse = noise_grid(bw, bh, rng, 5.0);
    RealGrid fine = noise_grid(bw, bh, rng, 1.6);
    std::array<RealGrid, 3> base = {RealGrid(bw, bh), RealGrid(bw, bh),
                                    RealGrid(bw, bh)};
    std::array<RealGrid, 3> tint;
    for (int c = 0; c < 3; ++c) tint[c] = noise_grid(bw, bh, rng, 6.0);
    double fcx = plan.cx + kMargin, fcy = plan.cy + kMargin;
    for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x) {
            double r2 = (x - fcx) * (x - fcx) + (y - fcy) * (y - fcy);
            double bump = 0.15 * std::exp(-r2 / (2.0 * 35.0 * 35.0));
            double lum = 0.5 + 0.16 * coarse.at(y, x) + 0.08 * fine.at(y, x) +
                         bump;
            for (int c = 0; c < 3; ++c) {
                double v = lum + 0.07 * tint[c].at(y, x);
                base[c].at(y, x) = std::clamp(v, 0.05, 0.95);
            }
        }

    clip.width = W;
    clip.height = H;
    clip.frames = cfg.frames;
    clip.channels = 3;
    clip.fps = cfg.fps;
    clip.data.assign(static_cast<size_t>(cfg.frames) * H * W * 3, 0.0f);
    track.frames.resize(cfg.frames);

    const Landmarks5& tmpl = face_template();
    double tmx = 0.0, tmy = 0.0;
    for (const auto& pt : tmpl) {
        tmx += pt[0] / 5.0;
        tmy += pt[1] / 5.0;
    }
    double cr = std::cos(plan.rot), sr = std::sin(plan.rot);

    for (int t = 0; t < cfg.frames; ++t) {
        double dx = plan.ax * std::sin(2.0 * M_PI * t / plan.px + plan.phx);
        double dy = plan.ay * std::sin(2.0 * M_PI * t / plan.py + plan.phy);

        float* frame = clip.data.data() + static_cast<size_t>(t) * H * W * 3;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c)
                    frame[(y * W + x) * 3 + c] = static_cast<float>(bilinear(
                        base[c], x + kMargin - dx, y + kMargin - dy));

        if (cls == 1) {  // genA: random-phase sinusoidal grid
            double ph1 = 2.0 * M_PI * rng.uniform();
            double ph2 = 2.0 * M_PI * rng.uniform();
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double g = cfg.gen_a_amplitude *
                               std::sin(plan.fx * x + ph1) *
                               std::sin(plan.fy * y + ph2);
                    for (int c = 0; c < 3; ++c) {
                        float& v = frame[(y * W + x) * 3 + c];
                        v = std::clamp(v + static_cast<float>(g), 0.0f, 1.0f);
                    }
                }
        } else if (cls == 2) {  // genB: per-frame blocky offsets
            const int B = 8;
            int nby = (H + B - 1) / B, nbx = (W + B - 1) / B;
            std::vector<double> off(static_cast<size_t>(nby) * nbx);
            for (double& o : off)
                o = cfg.gen_b_amplitude * 2.0 * (rng.uniform() - 0.5);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double g = off[(y / B) * nbx + (x / B)];
                    for (int c = 0; c < 3; ++c) {
                        float& v = frame[(y * W + x) * 3 + c];
                        v = std::clamp(v + static_cast<float>(g), 0.0f, 1.0f);
                    }
                }
        }

        // Landmarks follow the face exactly, so alignment cancels the rigid
        // drift and only resampling residue remains in the crops.
        FrameLandmarks fl;
        fl.present = true;
        fl.confidence = 0.9;
        for (int i = 0; i < 5; ++i) {
            double ox = tmpl[i][0] - tmx, oy = tmpl[i][1] - tmy;
            fl.points[i][0] =
                plan.cx + plan.scale * (cr * ox - sr * oy) + dx;
            fl.points[i][1] =
                plan.cy + plan.scale * (sr * ox + cr * oy) + dy;
        }
        track.frames[t] = fl;
    }
}

}  // namespace

DatasetManifest generate_toy_corpus(const std::string& out_dir,
                                    const SynthConfig& cfg) {
    if (cfg.videos_per_class < 1 || cfg.frames < 2)
        throw UsageError("toy corpus needs at least 1 video and 2 frames");
    if (cfg.width < 128 || cfg.height < 128)
        throw UsageError("toy corpus canvas must be at least 128x128");
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
        throw UsageError("train_fraction must lie in (0,1)");

    fs::create_directories(fs::path(out_dir) / "videos");
    fs::create_directories(fs::path(out_dir) / "landmarks");

    static const char* kClasses[3] = {"real", "genA", "genB"};
    static const char* kTones[5] = {"tone1", "tone2", "tone3", "tone4",
                                    "tone5"};
    static const char* kGenders[2] = {"female", "male"};

    DatasetManifest manifest;
    manifest.labels = {"real", "genA", "genB"};
    int n_train = static_cast<int>(
        std::lround(cfg.train_fraction * cfg.videos_per_class));
    n_train = cfg.videos_per_class == 1
                  ? 1
                  : std::clamp(n_train, 1, cfg.videos_per_class - 1);

    for (int cls = 0; cls < 3; ++cls) {
        for (int i = 0; i < cfg.videos_per_class; ++i) {
            nn::NormalSampler rng(
                mix_seed(cfg.seed, static_cast<uint64_t>(cls) * 100003 + i));
            VideoPlan plan = plan_video(rng);
            FrameClip clip;
            LandmarkTrack track;
            render_video(cfg, plan, cls, rng, clip, track);

            char name[64];
            std::snprintf(name, sizeof(name), "%s_%03d", kClasses[cls], i);
            std::string video_rel = std::string("videos/") + name + ".mmc1";
            std::string lm_rel = std::string("landmarks/") + name + ".json";
            save_mmc1(clip, (fs::path(out_dir) / video_rel).string());
            save_landmarks(track, (fs::path(out_dir) / lm_rel).string());

            ManifestEntry e;
            e.video = video_rel;
            e.landmarks = lm_rel;
            e.label = kClasses[cls];
            e.skin_tone = kTones[i % 5];
            e.gender = kGenders[(i / 5) % 2];
            e.split = (i < n_train) ? "train" : "test";
            manifest.entries.push_back(std::move(e));
        }
    }

    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

}  // namespace mmsd
