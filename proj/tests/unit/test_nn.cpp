#include <doctest.h>

#include <cmath>

#include "mmsd/nn.hpp"

#include "../support/oracles.hpp"

using namespace mmsd;
using nn::Tensor;
using oracles::check_layer;
using oracles::randn;

namespace {

// Naive direct convolutions used as forward oracles.
Tensor<double> conv2d_oracle(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>& b, int stride, int pad) {
    int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int co = w.dim(0), k = w.dim(2);
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (wd + 2 * pad - k) / stride + 1;
    Tensor<double> y({n, co, ho, wo});
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < co; ++o)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double s = b.v[o];
                    for (int c = 0; c < ci; ++c)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                int iy = oy * stride - pad + ky;
                                int ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd)
                                    continue;
                                s += w.v[((static_cast<int64_t>(o) * ci + c) * k + ky) * k + kx] *
                                     x.v[((static_cast<int64_t>(i) * ci + c) * h + iy) * wd + ix];
                            }
                    y.v[((static_cast<int64_t>(i) * co + o) * ho + oy) * wo + ox] = s;
                }
    return y;
}

Tensor<double> conv3d_oracle(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>& b) {
    int n = x.dim(0), ci = x.dim(1), d = x.dim(2), h = x.dim(3), wd = x.dim(4);
    int co = w.dim(0);
    Tensor<double> y({n, co, d, h, wd});
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < co; ++o)
            for (int oz = 0; oz < d; ++oz)
                for (int oy = 0; oy < h; ++oy)
                    for (int ox = 0; ox < wd; ++ox) {
                        double s = b.v[o];
                        for (int c = 0; c < ci; ++c)
                            for (int kz = 0; kz < 3; ++kz)
                                for (int ky = 0; ky < 3; ++ky)
                                    for (int kx = 0; kx < 3; ++kx) {
                                        int iz = oz + kz - 1, iy = oy + ky - 1,
                                            ix = ox + kx - 1;
                                        if (iz < 0 || iz >= d || iy < 0 ||
                                            iy >= h || ix < 0 || ix >= wd)
                                            continue;
                                        s += w.v[(((static_cast<int64_t>(o) * ci + c) * 3 + kz) * 3 + ky) * 3 + kx] *
                                             x.v[(((static_cast<int64_t>(i) * ci + c) * d + iz) * h + iy) * wd + ix];
                                    }
                        y.v[(((static_cast<int64_t>(i) * co + o) * d + oz) * h + oy) * wd + ox] = s;
                    }
    return y;
}

}  // namespace

TEST_CASE("conv2d forward matches direct convolution") {
    nn::NormalSampler init(7);
    nn::Conv2d<double> conv("c", 2, 3, 3, 2, 1, &init);
    Tensor<double> x = randn<double>({2, 2, 5, 5}, 11);
    Tensor<double> y = conv.forward(x, true);
    Tensor<double> ref =
        conv2d_oracle(x, conv.weight().w, conv.bias().w, 2, 1);
    REQUIRE(y.shape == ref.shape);
    for (size_t i = 0; i < y.v.size(); ++i)
        CHECK(y.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
}

TEST_CASE("conv3d forward matches direct convolution") {
    nn::NormalSampler init(8);
    nn::Conv3d<double> conv("c", 2, 3, &init);
    Tensor<double> x = randn<double>({1, 2, 3, 4, 4}, 12);
    Tensor<double> y = conv.forward(x, true);
    Tensor<double> ref = conv3d_oracle(x, conv.weight().w, conv.bias().w);
    REQUIRE(y.shape == ref.shape);
    for (size_t i = 0; i < y.v.size(); ++i)
        CHECK(y.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-12));
}

TEST_CASE("layer gradients agree with central differences") {
    SUBCASE("conv2d same padding") {
        nn::NormalSampler init(1);
        nn::Conv2d<double> layer("c", 3, 4, 3, 1, 1, &init);
        CHECK(check_layer(layer, randn<double>({2, 3, 6, 6}, 2)) < 1e-4);
    }
    SUBCASE("conv2d strided") {
        nn::NormalSampler init(3);
        nn::Conv2d<double> layer("c", 2, 3, 3, 2, 1, &init);
        CHECK(check_layer(layer, randn<double>({2, 2, 7, 7}, 4)) < 1e-4);
    }
    SUBCASE("conv3d") {
        nn::NormalSampler init(5);
        nn::Conv3d<double> layer("c", 2, 3, &init);
        CHECK(check_layer(layer, randn<double>({1, 2, 3, 4, 4}, 6)) < 1e-4);
    }
    SUBCASE("batch norm training mode") {
        nn::BatchNorm<double> layer("bn", 3);
        CHECK(check_layer(layer, randn<double>({4, 3, 5, 5}, 7)) < 1e-4);
    }
    SUBCASE("batch norm eval mode") {
        nn::BatchNorm<double> layer("bn", 3);
        layer.forward(randn<double>({4, 3, 5, 5}, 8), true);  // set stats
        CHECK(check_layer(layer, randn<double>({2, 3, 5, 5}, 9), false) < 1e-4);
    }
    SUBCASE("relu") {
        nn::ReLU<double> layer;
        CHECK(check_layer(layer, randn<double>({2, 3, 4, 4}, 10)) < 1e-4);
    }
    SUBCASE("max pool ceil mode") {
        nn::MaxPool3d<double> layer(2, 2, 2);
        CHECK(check_layer(layer, randn<double>({1, 2, 3, 5, 5}, 11)) < 1e-4);
    }
    SUBCASE("linear") {
        nn::NormalSampler init(12);
        nn::Linear<double> layer("fc", 10, 7, &init);
        CHECK(check_layer(layer, randn<double>({3, 10}, 13)) < 1e-4);
    }
    SUBCASE("upsample") {
        nn::Upsample2x<double> layer;
        CHECK(check_layer(layer, randn<double>({1, 2, 3, 3}, 14)) < 1e-4);
    }
}

TEST_CASE("max pool keeps partial edge windows") {
    CHECK(nn::MaxPool3d<double>::out_size(5, 2) == 3);
    CHECK(nn::MaxPool3d<double>::out_size(4, 2) == 2);
    CHECK(nn::MaxPool3d<double>::out_size(1, 2) == 1);

    nn::MaxPool3d<double> pool(1, 2, 2);
    Tensor<double> x({1, 1, 1, 2, 5});
    for (int i = 0; i < 10; ++i) x.v[i] = i;
    Tensor<double> y = pool.forward(x, true);
    REQUIRE(y.shape == std::vector<int>{1, 1, 1, 1, 3});
    CHECK(y.v[0] == 6.0);  // max of {0,1,5,6}
    CHECK(y.v[1] == 8.0);
    CHECK(y.v[2] == 9.0);  // single-column window at the edge
}

TEST_CASE("dropout scales kept units and is identity in eval") {
    nn::NormalSampler rng(21);
    nn::Dropout<double> drop(0.5, &rng);
    Tensor<double> x = randn<double>({1, 200}, 22);

    Tensor<double> y = drop.forward(x, true);
    Tensor<double> ones(y.shape);
    std::fill(ones.v.begin(), ones.v.end(), 1.0);
    Tensor<double> dx = drop.backward(ones);
    int kept = 0;
    for (size_t i = 0; i < y.v.size(); ++i) {
        if (y.v[i] != 0.0) {
            ++kept;
            CHECK(y.v[i] == doctest::Approx(2.0 * x.v[i]));
            CHECK(dx.v[i] == doctest::Approx(2.0));
        } else {
            CHECK(dx.v[i] == 0.0);
        }
    }
    CHECK(kept > 60);
    CHECK(kept < 140);

    Tensor<double> ye = drop.forward(x, false);
    CHECK(ye.v == x.v);
    CHECK(drop.backward(ones).v == ones.v);
}

TEST_CASE("softmax cross entropy") {
    SUBCASE("uniform logits give log K") {
        Tensor<double> logits({2, 3});
        std::vector<std::vector<double>> probs;
        double loss =
            nn::softmax_cross_entropy(logits, {0, 2}, nullptr, &probs);
        CHECK(loss == doctest::Approx(std::log(3.0)));
        for (const auto& row : probs)
            for (double p : row) CHECK(p == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("gradient matches central differences") {
        Tensor<double> logits = randn<double>({2, 4}, 30);
        std::vector<int> labels = {3, 1};
        Tensor<double> grad;
        nn::softmax_cross_entropy(logits, labels, &grad);
        const double h = 1e-6;
        for (size_t i = 0; i < logits.v.size(); ++i) {
            double orig = logits.v[i];
            logits.v[i] = orig + h;
            double lp = nn::softmax_cross_entropy(logits, labels, nullptr);
            logits.v[i] = orig - h;
            double lm = nn::softmax_cross_entropy(logits, labels, nullptr);
            logits.v[i] = orig;
            CHECK(grad.v[i] == doctest::Approx((lp - lm) / (2 * h)).epsilon(1e-5));
        }
    }
    SUBCASE("label count mismatch") {
        Tensor<double> logits({2, 3});
        CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, {0}, nullptr),
                        UsageError);
    }
}

TEST_CASE("adam minimizes a quadratic") {
    nn::Param<double> p;
    p.init_shape("w", {1});
    p.w.v[0] = -4.0;
    nn::Adam<double> opt({&p}, 0.05);
    for (int i = 0; i < 2000; ++i) {
        opt.zero_grad();
        p.g.v[0] = p.w.v[0] - 3.0;
        opt.step();
    }
    CHECK(p.w.v[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("tiny network overfits a fixed batch") {
    nn::NormalSampler init(40);
    nn::Linear<float> fc1("fc1", 8, 16, &init);
    nn::ReLU<float> act;
    nn::Linear<float> fc2("fc2", 16, 2, &init);

    Tensor<float> x = randn<float>({8, 8}, 41);
    std::vector<int> labels = {0, 1, 0, 1, 0, 1, 0, 1};

    std::vector<nn::Param<float>*> params = fc1.params();
    for (auto* p : fc2.params()) params.push_back(p);
    nn::Adam<float> opt(params, 1e-2);

    double first = 0.0, last = 0.0;
    for (int step = 0; step < 300; ++step) {
        opt.zero_grad();
        Tensor<float> h1 = fc1.forward(x, true);
        Tensor<float> h2 = act.forward(h1, true);
        Tensor<float> logits = fc2.forward(h2, true);
        Tensor<float> dl;
        double loss = nn::softmax_cross_entropy(logits, labels, &dl);
        if (step == 0) first = loss;
        last = loss;
        fc1.backward(act.backward(fc2.backward(dl)));
        opt.step();
    }
    CHECK(first > 0.3);
    CHECK(last < 0.01);
}

TEST_CASE("gaussian sampler streams are reproducible") {
    nn::NormalSampler a(123), b(123), c(124);
    bool same = true, diff = false;
    for (int i = 0; i < 100; ++i) {
        uint32_t ra = a.raw();
        same = same && (ra == b.raw());
        diff = diff || (ra != c.raw());
    }
    CHECK(same);
    CHECK(diff);

    nn::NormalSampler s(55);
    double mean = 0.0, var = 0.0;
    const int n = 20000;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = s.normal();
        mean += xs[i];
    }
    mean /= n;
    for (double v : xs) var += (v - mean) * (v - mean);
    var /= n;
    CHECK(std::abs(mean) < 0.03);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));

    nn::NormalSampler u(66);
    for (int i = 0; i < 1000; ++i) {
        double v = u.uniform();
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}
