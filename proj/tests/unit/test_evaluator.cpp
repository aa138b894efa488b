#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mmsd/errors.hpp"
#include "mmsd/evaluator.hpp"

#include "../support/oracles.hpp"

using namespace mmsd;

namespace {

SamplePrediction pred(int cls, double conf, int num_classes) {
    SamplePrediction p;
    p.predicted_class = cls;
    p.confidence = conf;
    p.probabilities.assign(num_classes, (1.0 - conf) / (num_classes - 1));
    p.probabilities[cls] = conf;
    return p;
}

VideoVerdict verdict_of(const std::string& id, int cls) {
    VideoVerdict v;
    v.video = id;
    v.predicted = cls;
    return v;
}

}  // namespace

TEST_CASE("majority vote with confidence tie break") {
    // clear majority
    VideoVerdict v = aggregate(
        "v1",
        {pred(1, 0.9, 3), pred(1, 0.8, 3), pred(2, 0.99, 3), pred(0, 0.6, 3)},
        3);
    CHECK(v.predicted == 1);
    CHECK(v.tally == std::vector<int>{1, 2, 1});
    CHECK(v.aggregate_confidence == doctest::Approx(1.7));
    CHECK(v.video == "v1");
    CHECK(v.samples.size() == 4);

    // vote tie resolved by summed confidence: 0.9+0.8 beats 0.99+0.6
    VideoVerdict t = aggregate(
        "v2",
        {pred(2, 0.9, 3), pred(2, 0.8, 3), pred(0, 0.99, 3), pred(0, 0.6, 3)},
        3);
    CHECK(t.predicted == 2);

    // full tie resolved by lowest class index
    VideoVerdict low =
        aggregate("v3", {pred(2, 0.7, 3), pred(1, 0.7, 3)}, 3);
    CHECK(low.predicted == 1);

    // single sample
    VideoVerdict one = aggregate("v4", {pred(2, 0.5, 3)}, 3);
    CHECK(one.predicted == 2);

    CHECK_THROWS_AS(aggregate("v5", {}, 3), DataError);
}

TEST_CASE("aggregate matches the brute-force oracle") {
    // every (class, confidence) assignment for 3 samples over 3 classes on
    // a coarse confidence grid
    const std::vector<double> grid = {0.4, 0.7, 1.0};
    const int num_classes = 3, k = 3;
    int combos = 0;
    for (int c0 = 0; c0 < num_classes; ++c0)
        for (int c1 = 0; c1 < num_classes; ++c1)
            for (int c2 = 0; c2 < num_classes; ++c2)
                for (double g0 : grid)
                    for (double g1 : grid)
                        for (double g2 : grid) {
                            std::vector<SamplePrediction> ps = {
                                pred(c0, g0, num_classes),
                                pred(c1, g1, num_classes),
                                pred(c2, g2, num_classes)};
                            VideoVerdict v = aggregate("v", ps, num_classes);
                            int want = oracles::vote_oracle(
                                {c0, c1, c2}, {g0, g1, g2}, num_classes);
                            CHECK(v.predicted == want);
                            ++combos;
                        }
    CHECK(combos == 27 * 27);
    (void)k;
}

TEST_CASE("report aggregates accuracy and the confusion matrix") {
    std::vector<VideoVerdict> verdicts;
    std::vector<int> truths;

    // 2 correct real, 1 real mistaken as genA, 2 correct genA, 1 genA as real
    auto add = [&](int predicted, int truth, int samples_right,
                   int samples_total) {
        VideoVerdict v = verdict_of("v" + std::to_string(verdicts.size()),
                                    predicted);
        for (int i = 0; i < samples_total; ++i) {
            v.samples.push_back(
                pred(i < samples_right ? truth : 1 - truth, 0.9, 2));
        }
        verdicts.push_back(v);
        truths.push_back(truth);
    };
    add(0, 0, 2, 2);
    add(0, 0, 1, 2);
    add(1, 0, 0, 2);
    add(1, 1, 2, 2);
    add(1, 1, 2, 2);
    add(0, 1, 1, 2);

    EvalReport r = build_report(verdicts, truths, {"real", "genA"});
    CHECK(r.videos == 6);
    CHECK(r.samples == 12);
    CHECK(r.video_accuracy == doctest::Approx(4.0 / 6.0));
    CHECK(r.sample_accuracy == doctest::Approx(8.0 / 12.0));
    CHECK(r.confusion[0][0] == 2);
    CHECK(r.confusion[0][1] == 1);
    CHECK(r.confusion[1][0] == 1);
    CHECK(r.confusion[1][1] == 2);
    // binary collapse equals video accuracy for 2 classes
    CHECK(r.binary_accuracy == doctest::Approx(4.0 / 6.0));

    std::string js = report_to_json(r);
    CHECK(js.find("video_accuracy") != std::string::npos);
    std::string csv = report_to_csv(r);
    CHECK(csv.find("real") != std::string::npos);
}

TEST_CASE("binary collapse treats all fakes as one class") {
    // genA predicted as genB is binary-correct (both fake) but multiclass
    // wrong
    std::vector<VideoVerdict> verdicts = {verdict_of("a", 2),
                                          verdict_of("b", 0)};
    std::vector<int> truths = {1, 0};
    EvalReport r = build_report(verdicts, truths, {"real", "genA", "genB"});
    CHECK(r.video_accuracy == doctest::Approx(0.5));
    CHECK(r.binary_accuracy == doctest::Approx(1.0));
}

TEST_CASE("bias report groups by skin tone and gender") {
    std::vector<VideoVerdict> verdicts;
    std::vector<int> truths;
    std::vector<VideoGroup> groups;
    // 6 videos of group (light, f): 5 correct; 2 of (dark, m): 1 correct;
    // 1 unlabeled: correct
    for (int i = 0; i < 6; ++i) {
        VideoVerdict v = verdict_of("lf" + std::to_string(i), i < 5 ? 0 : 1);
        v.samples.push_back(pred(i < 5 ? 0 : 1, 0.9, 2));
        verdicts.push_back(v);
        truths.push_back(0);
        groups.push_back({"light", "f"});
    }
    for (int i = 0; i < 2; ++i) {
        VideoVerdict v = verdict_of("dm" + std::to_string(i), i);
        v.samples.push_back(pred(i, 0.9, 2));
        verdicts.push_back(v);
        truths.push_back(0);
        groups.push_back({"dark", "m"});
    }
    {
        VideoVerdict v = verdict_of("u0", 0);
        v.samples.push_back(pred(0, 0.9, 2));
        verdicts.push_back(v);
        truths.push_back(0);
        groups.push_back({"", ""});
    }

    std::vector<GroupRow> rows = bias_report(verdicts, truths, groups, 5);
    REQUIRE(rows.size() == 3);
    // sorted by (skin_tone, gender); "dark" < "light" < "unlabeled"
    CHECK(rows[0].skin_tone == "dark");
    CHECK(rows[0].gender == "m");
    CHECK(rows[0].videos == 2);
    CHECK(rows[0].video_accuracy == doctest::Approx(0.5));
    CHECK(rows[0].low_count);
    CHECK(rows[1].skin_tone == "light");
    CHECK(rows[1].videos == 6);
    CHECK(rows[1].video_accuracy == doctest::Approx(5.0 / 6.0));
    CHECK_FALSE(rows[1].low_count);
    CHECK(rows[2].skin_tone == "unlabeled");
    CHECK(rows[2].gender == "unlabeled");
    CHECK(rows[2].videos == 1);
    CHECK(rows[2].low_count);

    std::string csv = bias_to_csv(rows);
    CHECK(csv.find("dark") != std::string::npos);
    CHECK(bias_to_json(rows).find("low_count") != std::string::npos);
}

TEST_CASE("luma psnr") {
    RealGrid a(8, 8), b(8, 8);
    for (int i = 0; i < 64; ++i) a.v[i] = b.v[i] = (i % 7) / 7.0;
    CHECK(psnr_luma(a, b) == doctest::Approx(99.0));

    // a uniform error of one 8-bit step: 20*log10(255/1)
    for (double& v : b.v) v += 1.0 / 255.0;
    CHECK(psnr_luma(a, b) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-6));

    std::vector<double> series = psnr_series({a, a}, {a, b});
    REQUIRE(series.size() == 2);
    CHECK(series[0] == doctest::Approx(99.0));
    CHECK(series[1] == doctest::Approx(48.13).epsilon(0.01));
}

TEST_CASE("psnr summary statistics") {
    PsnrSummary s = summarize_psnr("real", {40.0, 44.0, 42.0});
    CHECK(s.label == "real");
    CHECK(s.frames == 3);
    CHECK(s.mean == doctest::Approx(42.0));
    CHECK(s.median == doctest::Approx(42.0));
    CHECK(s.stddev == doctest::Approx(std::sqrt(8.0 / 3.0)));

    PsnrSummary even = summarize_psnr("genA", {10.0, 20.0, 30.0, 40.0});
    CHECK(even.median == doctest::Approx(25.0));

    std::string csv = psnr_to_csv({s, even});
    CHECK(csv.find("real") != std::string::npos);
    CHECK(csv.find("genA") != std::string::npos);
}

TEST_CASE("sweep csv carries skipped rows") {
    std::vector<SweepPoint> points(2);
    points[0].m = 2.0;
    points[0].t = 5;
    points[0].video_accuracy = 0.9;
    points[1].m = 2.0;
    points[1].t = 17;
    points[1].skipped = true;
    points[1].note = "t exceeds window length omega=16";
    std::string csv = sweep_to_csv(points);
    CHECK(csv.find("skipped") != std::string::npos);
    CHECK(csv.find("t exceeds window length") != std::string::npos);
    // one header plus one line per point
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
