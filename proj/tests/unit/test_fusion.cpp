#include <doctest.h>

#include <cmath>
#include <limits>

#include "mmsd/clip_io.hpp"
#include "mmsd/errors.hpp"
#include "mmsd/fusion.hpp"

#include "../support/oracles.hpp"

using namespace mmsd;
using oracles::TempDir;

namespace {

FrameClip deep_clip(int omega, int seed, int n = 20) {
    nn::NormalSampler rng(seed);
    FrameClip clip(n, n, omega, 3, 30.0);
    for (float& v : clip.data) v = static_cast<float>(rng.uniform());
    return clip;
}

std::vector<RealGrid> phase_grids(int count, int seed, int n = 20) {
    nn::NormalSampler rng(seed);
    std::vector<RealGrid> out;
    for (int i = 0; i < count; ++i) {
        RealGrid g(n, n);
        for (double& v : g.v) v = rng.uniform();
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace

TEST_CASE("fused tensor pairs phase frames with window centers") {
    // omega frames and window length t leave omega-(t-1) phase outputs
    for (auto [omega, t] : std::vector<std::pair<int, int>>{
             {16, 5}, {16, 3}, {16, 16}, {8, 3}}) {
        FrameClip deep = deep_clip(omega, omega * 100 + t);
        auto phase = phase_grids(omega - (t - 1), omega + t);
        FusedTensor fused = fuse(deep, phase, t);
        CHECK(fused.data.shape ==
              std::vector<int>{4, omega - (t - 1), 20, 20});
        CHECK(fused.temporal() == omega - (t - 1));
        CHECK(fused.stats_id.empty());

        // channel c<3 of temporal slot j comes from deep frame j+floor(t/2)
        int center = t / 2;
        int temporal = omega - (t - 1);
        int64_t plane = 20 * 20;
        for (int j = 0; j < temporal; j += std::max(1, temporal / 3)) {
            for (int c = 0; c < 3; ++c) {
                double want = deep.at(j + center, 3, 5, c);
                double got =
                    fused.data.v[(static_cast<int64_t>(c) * temporal + j) * plane +
                                 3 * 20 + 5];
                CHECK(got == doctest::Approx(want));
            }
            double want_phase = phase[j].at(3, 5);
            double got_phase =
                fused.data.v[(static_cast<int64_t>(3) * temporal + j) * plane +
                             3 * 20 + 5];
            CHECK(got_phase == doctest::Approx(want_phase));
        }
    }
}

TEST_CASE("fuse validates its inputs") {
    FrameClip deep = deep_clip(8, 1);
    CHECK_THROWS_AS(fuse(deep, phase_grids(5, 2), 3), DataError);  // want 6
    CHECK_THROWS_AS(fuse(deep, phase_grids(6, 2), 1), UsageError);
    CHECK_THROWS_AS(fuse(deep, phase_grids(6, 2, 19), 3), DataError);
    FrameClip gray = deep_clip(8, 3);
    gray.channels = 1;
    gray.data.resize(gray.data.size() / 3);
    CHECK_THROWS_AS(fuse(gray, phase_grids(6, 2), 3), UsageError);

    FrameClip poisoned = deep_clip(8, 4);
    poisoned.data[7] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(fuse(poisoned, phase_grids(6, 5), 3), NumericError);
}

TEST_CASE("channel statistics standardize to zero mean unit variance") {
    FrameClip deep = deep_clip(10, 6);
    auto phase = phase_grids(8, 7);
    FusedTensor t1 = fuse(deep, phase, 3);
    FrameClip deep2 = deep_clip(10, 8);
    auto phase2 = phase_grids(8, 9);
    FusedTensor t2 = fuse(deep2, phase2, 3);

    ChannelStats stats = fit_stats({&t1, &t2});
    REQUIRE(stats.mean.size() == 4);
    CHECK_FALSE(stats.id.empty());

    // the streaming accumulator reproduces the two-pass values
    StatsAccumulator acc;
    acc.add(t1);
    acc.add(t2);
    ChannelStats streamed = acc.finish();
    for (int c = 0; c < 4; ++c) {
        CHECK(streamed.mean[c] == doctest::Approx(stats.mean[c]).epsilon(1e-9));
        CHECK(streamed.stddev[c] ==
              doctest::Approx(stats.stddev[c]).epsilon(1e-7));
    }

    normalize(t1, stats);
    normalize(t2, stats);
    CHECK(t1.stats_id == stats.id);
    for (int c = 0; c < 4; ++c) {
        int64_t per = t1.data.size() / 4;
        double mean = 0.0, var = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            mean += t1.data.v[c * per + i];
            mean += t2.data.v[c * per + i];
        }
        mean /= 2 * per;
        for (int64_t i = 0; i < per; ++i) {
            double d1 = t1.data.v[c * per + i] - mean;
            double d2 = t2.data.v[c * per + i] - mean;
            var += d1 * d1 + d2 * d2;
        }
        var /= 2 * per;
        CHECK(std::abs(mean) < 1e-4);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }

    // stats must come from unnormalized tensors
    StatsAccumulator acc2;
    CHECK_THROWS_AS(acc2.add(t1), UsageError);
    CHECK_THROWS_AS(acc2.finish(), DataError);
    CHECK_THROWS_AS(fit_stats({}), DataError);

    ChannelStats wrong = stats;
    wrong.mean.resize(3);
    CHECK_THROWS_AS(normalize(t1, wrong), UsageError);
}

TEST_CASE("constant channels floor the deviation") {
    FrameClip deep = deep_clip(6, 10);
    std::fill(deep.data.begin(), deep.data.end(), 0.5f);
    auto phase = phase_grids(4, 11);
    FusedTensor t = fuse(deep, phase, 3);
    ChannelStats stats = fit_stats({&t});
    for (int c = 0; c < 3; ++c) CHECK(stats.stddev[c] == 1e-6);
    CHECK(stats.stddev[3] > 1e-3);
}

TEST_CASE("fused cache round trip") {
    TempDir tmp;
    FrameClip deep = deep_clip(10, 12);
    auto phase = phase_grids(8, 13);
    FusedTensor t = fuse(deep, phase, 3);
    save_fused(tmp.file("f.mmc1"), t, R"({"video":"v","start":0})");

    std::string sidecar;
    FusedTensor back = load_fused(tmp.file("f.mmc1"), &sidecar);
    CHECK(back.data.shape == t.data.shape);
    CHECK(sidecar == R"({"video":"v","start":0})");
    double worst = 0.0;
    for (size_t i = 0; i < t.data.v.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(t.data.v[i]) -
                                         back.data.v[i]));
    CHECK(worst <= 0.5 / 255.0 + 1e-9);  // 8-bit lattice on disk

    // a normalized tensor must never reach the cache
    ChannelStats stats = fit_stats({&t});
    normalize(t, stats);
    CHECK_THROWS_AS(save_fused(tmp.file("g.mmc1"), t, ""), UsageError);

    // wrong channel count rejects
    FrameClip three = deep_clip(4, 14);
    save_mmc1(three, tmp.file("h.mmc1"));
    CHECK_THROWS_AS(load_fused(tmp.file("h.mmc1"), nullptr), DataError);
}
