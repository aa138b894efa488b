#pragma once

// Self-contained reference implementations used to cross-check the library.
// Everything here is written independently of the code under test: shifts
// are measured from cross-spectrum phases, similarity fits use the closed
// centered form, votes are brute-forced.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "mmsd/fft2.hpp"
#include "mmsd/grid.hpp"
#include "mmsd/landmarks.hpp"
#include "mmsd/nn.hpp"

namespace oracles {

constexpr double kPi = std::numbers::pi;

inline mmsd::RealGrid grating(int n, double wg, double pos,
                              double amp = 0.25) {
    mmsd::RealGrid g(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            g.at(y, x) = 0.5 + amp * std::sin(wg * (x - pos));
    return g;
}

// Weighted least-squares estimate of a horizontal translation between two
// images, fitted to the phase of the cross power spectrum along ky = 0.
inline double measure_shift_x(const mmsd::RealGrid& a,
                              const mmsd::RealGrid& b) {
    mmsd::ComplexGrid fa = mmsd::fft2(a), fb = mmsd::fft2(b);
    double num = 0.0, den = 0.0;
    for (int y = 0; y < a.h; ++y) {
        for (int x = 0; x < a.w; ++x) {
            int sx = (x <= a.w / 2) ? x : x - a.w;
            int sy = (y <= a.h / 2) ? y : y - a.h;
            double wx = 2.0 * kPi * sx / a.w;
            if (sy != 0) continue;
            if (std::abs(wx) < 1e-9 || std::abs(wx) > kPi * 0.9) continue;
            std::complex<double> cross = fa.at(y, x) * std::conj(fb.at(y, x));
            double mag = std::abs(cross);
            if (mag < 1e-9) continue;
            double ph = std::atan2(cross.imag(), cross.real());
            if (std::abs(ph) > 2.5) continue;
            num += mag * wx * ph;
            den += mag * wx * wx;
        }
    }
    return den > 0 ? num / den : 0.0;
}

struct SimilarityOracle {
    double a = 1.0, b = 0.0, tx = 0.0, ty = 0.0;
};

// Closed-form least-squares similarity: center both point sets, then
// a = <p,q> / |p|^2 and b = <p x q> / |p|^2 on the centered coordinates.
inline SimilarityOracle fit_similarity_oracle(const mmsd::Landmarks5& src,
                                              const mmsd::Landmarks5& dst) {
    double mx = 0, my = 0, ux = 0, uy = 0;
    for (int i = 0; i < 5; ++i) {
        mx += src[i][0];
        my += src[i][1];
        ux += dst[i][0];
        uy += dst[i][1];
    }
    mx /= 5;
    my /= 5;
    ux /= 5;
    uy /= 5;
    double dot = 0, crs = 0, nrm = 0;
    for (int i = 0; i < 5; ++i) {
        double px = src[i][0] - mx, py = src[i][1] - my;
        double qx = dst[i][0] - ux, qy = dst[i][1] - uy;
        dot += px * qx + py * qy;
        crs += px * qy - py * qx;
        nrm += px * px + py * py;
    }
    SimilarityOracle o;
    o.a = dot / nrm;
    o.b = crs / nrm;
    o.tx = ux - (o.a * mx - o.b * my);
    o.ty = uy - (o.b * mx + o.a * my);
    return o;
}

// Majority vote with the documented tie chain: votes, then summed
// confidence over the tied classes, then lowest index.
inline int vote_oracle(const std::vector<int>& classes,
                       const std::vector<double>& confidences,
                       int num_classes) {
    std::vector<int> votes(num_classes, 0);
    std::vector<double> conf(num_classes, 0.0);
    for (size_t i = 0; i < classes.size(); ++i) {
        votes[classes[i]]++;
        conf[classes[i]] += confidences[i];
    }
    int best = 0;
    for (int c = 1; c < num_classes; ++c) {
        if (votes[c] > votes[best] ||
            (votes[c] == votes[best] && conf[c] > conf[best]))
            best = c;
    }
    return best;
}

template <class T>
inline mmsd::nn::Tensor<T> randn(std::vector<int> shape, int seed) {
    mmsd::nn::NormalSampler s(seed);
    mmsd::nn::Tensor<T> t(std::move(shape));
    for (auto& v : t.v) v = static_cast<T>(s.normal());
    return t;
}

// Scalar probe loss: fixed random projection of the output tensor, so the
// analytic output gradient is just the projection weights.
template <class T>
struct Probe {
    std::vector<double> w;
    double loss(const mmsd::nn::Tensor<T>& y) {
        if (w.size() != y.v.size()) {
            mmsd::nn::NormalSampler s(99);
            w.resize(y.v.size());
            for (auto& x : w) x = s.normal();
        }
        double l = 0.0;
        for (size_t i = 0; i < y.v.size(); ++i) l += w[i] * y.v[i];
        return l;
    }
    mmsd::nn::Tensor<T> grad(const mmsd::nn::Tensor<T>& y) {
        mmsd::nn::Tensor<T> g(y.shape);
        for (size_t i = 0; i < y.v.size(); ++i) g.v[i] = static_cast<T>(w[i]);
        return g;
    }
};

// Central-difference check of input and parameter gradients on randomly
// probed coordinates. Returns the worst relative error seen.
template <class T>
inline double check_layer(mmsd::nn::Layer<T>& layer, mmsd::nn::Tensor<T> x,
                          bool train = true, int input_trials = 40,
                          int param_trials = 30) {
    Probe<T> probe;
    mmsd::nn::Tensor<T> y = layer.forward(x, train);
    probe.loss(y);
    for (auto* p : layer.params()) p->g.zero();
    mmsd::nn::Tensor<T> dx = layer.backward(probe.grad(y));

    double worst = 0.0;
    const double h = 1e-6;
    auto fd = [&](std::vector<T>& vec, size_t i) {
        double orig = vec[i];
        vec[i] = static_cast<T>(orig + h);
        double lp = probe.loss(layer.forward(x, train));
        vec[i] = static_cast<T>(orig - h);
        double lm = probe.loss(layer.forward(x, train));
        vec[i] = static_cast<T>(orig);
        return (lp - lm) / (2 * h);
    };
    mmsd::nn::NormalSampler pick(5);
    for (int trial = 0; trial < input_trials; ++trial) {
        size_t i = pick.raw() % x.v.size();
        double num = fd(x.v, i);
        double rel = std::abs(num - dx.v[i]) /
                     std::max(1e-8, std::abs(num) + std::abs(dx.v[i]));
        worst = std::max(worst, rel);
    }
    for (auto* p : layer.params()) {
        if (p->w.v.empty()) continue;
        for (int trial = 0; trial < param_trials; ++trial) {
            size_t i = pick.raw() % p->w.v.size();
            double analytic;
            {
                for (auto* q : layer.params()) q->g.zero();
                mmsd::nn::Tensor<T> yy = layer.forward(x, train);
                layer.backward(probe.grad(yy));
                analytic = p->g.v[i];
            }
            double num = fd(p->w.v, i);
            double rel = std::abs(num - analytic) /
                         std::max(1e-8, std::abs(num) + std::abs(analytic));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
    TempDir() {
        std::string tmpl =
            (std::filesystem::temp_directory_path() / "mmsd-test-XXXXXX")
                .string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
        path_ = buf.data();
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const {
        return (std::filesystem::path(path_) / name).string();
    }

 private:
    std::string path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f),
                       std::istreambuf_iterator<char>());
}

}  // namespace oracles
