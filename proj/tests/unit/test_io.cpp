#include <doctest.h>

#include <cmath>
#include <fstream>

#include "mmsd/clip_io.hpp"
#include "mmsd/errors.hpp"
#include "mmsd/hash.hpp"
#include "mmsd/landmarks.hpp"
#include "mmsd/manifest.hpp"
#include "mmsd/png_io.hpp"
#include "mmsd/weights_io.hpp"

#include "../support/oracles.hpp"

using namespace mmsd;
using oracles::TempDir;

namespace {

FrameClip make_clip(int w, int h, int t, int c, int seed) {
    nn::NormalSampler rng(seed);
    FrameClip clip(w, h, t, c, 30.0);
    for (float& v : clip.data)
        v = static_cast<float>(rng.uniform());
    return clip;
}

}  // namespace

TEST_CASE("raw clip container round trip") {
    TempDir tmp;
    FrameClip clip = make_clip(20, 14, 3, 3, 1);
    std::string path = tmp.file("clip.mmc1");
    save_mmc1(clip, path);
    FrameClip back = load_mmc1(path);
    CHECK(back.width == 20);
    CHECK(back.height == 14);
    CHECK(back.frames == 3);
    CHECK(back.channels == 3);
    CHECK(back.fps == doctest::Approx(30.0));
    double worst = 0.0;
    for (size_t i = 0; i < clip.data.size(); ++i)
        worst = std::max(
            worst, std::abs(static_cast<double>(clip.data[i] - back.data[i])));
    CHECK(worst <= 0.5 / 255.0 + 1e-9);  // one 8-bit quantization

    // a second trip is lossless: values are already on the 8-bit lattice
    std::string path2 = tmp.file("clip2.mmc1");
    save_mmc1(back, path2);
    FrameClip back2 = load_mmc1(path2);
    for (size_t i = 0; i < back.data.size(); ++i)
        CHECK(back.data[i] == back2.data[i]);
}

TEST_CASE("truncated clip file is a data error") {
    TempDir tmp;
    FrameClip clip = make_clip(16, 16, 2, 1, 2);
    std::string path = tmp.file("t.mmc1");
    save_mmc1(clip, path);
    std::string bytes = oracles::read_file(path);
    std::ofstream f(tmp.file("cut.mmc1"), std::ios::binary);
    f.write(bytes.data(), static_cast<long>(bytes.size() / 2));
    f.close();
    CHECK_THROWS_AS(load_mmc1(tmp.file("cut.mmc1")), DataError);

    std::ofstream g(tmp.file("junk.mmc1"), std::ios::binary);
    g << "not a clip at all";
    g.close();
    CHECK_THROWS_AS(load_mmc1(tmp.file("junk.mmc1")), DataError);
}

TEST_CASE("png round trip") {
    TempDir tmp;
    Image8 img;
    img.width = 9;
    img.height = 7;
    img.channels = 3;
    img.pixels.resize(9 * 7 * 3);
    for (size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<uint8_t>((i * 37) % 256);
    save_png(tmp.file("img.png"), img);
    Image8 back = load_png(tmp.file("img.png"));
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.channels == img.channels);
    CHECK(back.pixels == img.pixels);
}

TEST_CASE("png sequence directory loads as a clip") {
    TempDir tmp;
    FrameClip clip = make_clip(12, 10, 3, 3, 3);
    save_clip(clip, tmp.path(), ClipFormat::png_sequence);
    FrameClip back = load_clip(tmp.path());
    CHECK(back.frames == 3);
    CHECK(back.width == 12);
    CHECK(back.height == 10);
}

TEST_CASE("landmark sidecar round trip with nulls") {
    TempDir tmp;
    LandmarkTrack track;
    track.frames.resize(4);
    for (int t = 0; t < 4; ++t) {
        if (t == 2) continue;  // frame without a face stays absent
        for (int i = 0; i < 5; ++i)
            track.frames[t].points[i] = {10.0 + i + t, 20.0 - i};
        track.frames[t].confidence = 0.75 + 0.01 * t;
        track.frames[t].present = true;
    }
    save_landmarks(track, tmp.file("lm.json"));
    LandmarkTrack back = load_landmarks(tmp.file("lm.json"));
    REQUIRE(back.frames.size() == 4);
    CHECK_FALSE(back.frames[2].present);
    CHECK(back.frames[0].present);
    CHECK(back.frames[3].confidence == doctest::Approx(0.78));
    CHECK(back.frames[1].points[4][0] == doctest::Approx(15.0));
    CHECK(back.usable(0, 0.5));
    CHECK_FALSE(back.usable(2, 0.5));
    CHECK_FALSE(back.usable(0, 0.9));
}

TEST_CASE("manifest requires the real class") {
    TempDir tmp;
    std::ofstream f(tmp.file("manifest.json"));
    f << R"([{"video":"a.mmc1","landmarks":"a.json","label":"genA","split":"train"}])";
    f.close();
    CHECK_THROWS_AS(load_manifest(tmp.file("manifest.json")), DataError);
}

TEST_CASE("manifest with many generators keeps real first") {
    TempDir tmp;
    std::ofstream f(tmp.file("manifest.json"));
    f << R"([
      {"video":"a.mmc1","landmarks":"a.json","label":"genC","split":"train"},
      {"video":"b.mmc1","landmarks":"b.json","label":"real","split":"train"},
      {"video":"c.mmc1","landmarks":"c.json","label":"genA","split":"test"},
      {"video":"d.mmc1","landmarks":"d.json","label":"genB","split":"train"},
      {"video":"e.mmc1","landmarks":"e.json","label":"genD","split":"test"},
      {"video":"f.mmc1","landmarks":"f.json","label":"genE","split":"train"}
    ])";
    f.close();
    DatasetManifest man = load_manifest(tmp.file("manifest.json"));
    CHECK(man.num_classes() == 6);
    CHECK(man.labels[DatasetManifest::kRealIndex] == "real");
    CHECK(man.label_index("real") == 0);
    CHECK(man.split("train").size() == 4);
    CHECK(man.split("test").size() == 2);
    // entry paths resolve against the manifest directory
    CHECK(man.entries[0].video == tmp.file("a.mmc1"));
}

TEST_CASE("duplicate video paths are rejected") {
    TempDir tmp;
    std::ofstream f(tmp.file("manifest.json"));
    f << R"([
      {"video":"a.mmc1","landmarks":"a.json","label":"real","split":"train"},
      {"video":"a.mmc1","landmarks":"b.json","label":"genA","split":"train"}
    ])";
    f.close();
    CHECK_THROWS_AS(load_manifest(tmp.file("manifest.json")), DataError);
}

TEST_CASE("weights container round trip") {
    TempDir tmp;
    WeightsFile wf;
    NamedTensor t;
    t.name = "conv.w";
    t.shape = {2, 3};
    t.data = {1.5f, -2.25f, 0.0f, 4.0f, 1e-7f, -3.5f};
    wf.tensors.push_back(t);
    wf.metadata = R"({"note":"x"})";
    save_weights(tmp.file("w.mmw"), wf);
    WeightsFile back = load_weights(tmp.file("w.mmw"));
    REQUIRE(back.tensors.size() == 1);
    CHECK(back.tensors[0].name == "conv.w");
    CHECK(back.tensors[0].shape == std::vector<int>{2, 3});
    CHECK(back.tensors[0].data == t.data);
    CHECK(back.metadata == wf.metadata);
    CHECK(back.find("conv.w") != nullptr);
    CHECK(back.find("missing") == nullptr);
}

TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex(std::string("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex(std::string("")) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");

    TempDir tmp;
    std::ofstream f(tmp.file("data.bin"), std::ios::binary);
    f << "abc";
    f.close();
    CHECK(sha256_file(tmp.file("data.bin")) == sha256_hex(std::string("abc")));
    CHECK_THROWS_AS(sha256_file(tmp.file("missing.bin")), DataError);
}
