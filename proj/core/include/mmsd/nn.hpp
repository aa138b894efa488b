#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mmsd/errors.hpp"

// Minimal trainable layer set: enough of a framework for a compact 2-D
// encoder/decoder and a C3D-style stack, templated on scalar so training
// runs in float while finite-difference checks run in double. All layouts
// are channel-major (N, C, spatial...), convolutions go through im2col and
// a dense GEMM.
namespace mmsd::nn {

template <class T>
using MatrixRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(count(shape), T(0));
  }
  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[i]; }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  void zero() { std::fill(v.begin(), v.end(), T(0)); }
};

// Deterministic Gaussian sampler (Box-Muller over mt19937), identical
// streams on every platform.
class NormalSampler {
 public:
  explicit NormalSampler(uint64_t seed) : rng_(static_cast<uint32_t>(seed)) {}

  double uniform() {  // (0,1)
    return (static_cast<double>(rng_()) + 0.5) / 4294967296.0;
  }
  double normal() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }
  uint32_t raw() { return rng_(); }

 private:
  std::mt19937 rng_;
  bool have_ = false;
  double spare_ = 0.0;
};

template <class T>
struct Param {
  std::string name;
  Tensor<T> w;
  Tensor<T> g;

  void init_shape(std::string n, std::vector<int> shape) {
    name = std::move(n);
    w = Tensor<T>(shape);
    g = Tensor<T>(std::move(shape));
  }
};

template <class T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
};

// ---------------------------------------------------------------- conv 2d

template <class T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int k, int stride, int pad,
         NormalSampler* init)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad) {
    w_.init_shape(name + ".w", {out_ch, in_ch, k, k});
    b_.init_shape(name + ".b", {out_ch});
    if (init) {
      double std = std::sqrt(2.0 / (in_ch * k * k));
      for (auto& v : w_.w.v) v = static_cast<T>(init->normal() * std);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    x_ = x;
    int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    if (x.dim(1) != in_ch_) throw UsageError("conv2d channel mismatch");
    int ho = (h + 2 * pad_ - k_) / stride_ + 1;
    int wo = (w + 2 * pad_ - k_) / stride_ + 1;
    Tensor<T> y({n, out_ch_, ho, wo});
    int ck = in_ch_ * k_ * k_;
    int m = ho * wo;
    MatrixRM<T> cols(ck, m);
    Eigen::Map<const MatrixRM<T>> wm(w_.w.data(), out_ch_, ck);
    for (int i = 0; i < n; ++i) {
      im2col(x.data() + static_cast<int64_t>(i) * in_ch_ * h * w, h, w,
             cols.data(), ho, wo);
      Eigen::Map<MatrixRM<T>> ym(y.data() + static_cast<int64_t>(i) * out_ch_ * m,
                                 out_ch_, m);
      ym.noalias() = wm * cols;
      for (int c = 0; c < out_ch_; ++c) ym.row(c).array() += b_.w.v[c];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    int ho = dy.dim(2), wo = dy.dim(3);
    int ck = in_ch_ * k_ * k_;
    int m = ho * wo;
    Tensor<T> dx({n, in_ch_, h, w});
    MatrixRM<T> cols(ck, m), dcols(ck, m);
    Eigen::Map<const MatrixRM<T>> wm(w_.w.data(), out_ch_, ck);
    Eigen::Map<MatrixRM<T>> gw(w_.g.data(), out_ch_, ck);
    for (int i = 0; i < n; ++i) {
      Eigen::Map<const MatrixRM<T>> dym(
          dy.data() + static_cast<int64_t>(i) * out_ch_ * m, out_ch_, m);
      im2col(x_.data() + static_cast<int64_t>(i) * in_ch_ * h * w, h, w,
             cols.data(), ho, wo);
      gw.noalias() += dym * cols.transpose();
      // fixed-order sum: vectorized redux rounds differently per alignment
      for (int c = 0; c < out_ch_; ++c) {
        const T* row = dy.data() + (static_cast<int64_t>(i) * out_ch_ + c) * m;
        T s = 0;
        for (int j = 0; j < m; ++j) s += row[j];
        b_.g.v[c] += s;
      }
      dcols.noalias() = wm.transpose() * dym;
      col2im(dcols.data(), h, w, dx.data() + static_cast<int64_t>(i) * in_ch_ * h * w,
             ho, wo);
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }
  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

 private:
  void im2col(const T* src, int h, int w, T* dst, int ho, int wo) const {
    int m = ho * wo;
    for (int c = 0; c < in_ch_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          T* row = dst + (static_cast<int64_t>(c) * k_ * k_ + ky * k_ + kx) * m;
          const T* plane = src + static_cast<int64_t>(c) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) {
              std::fill(row + oy * wo, row + (oy + 1) * wo, T(0));
              continue;
            }
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride_ - pad_ + kx;
              row[oy * wo + ox] =
                  (ix < 0 || ix >= w) ? T(0) : plane[iy * w + ix];
            }
          }
        }
      }
    }
  }

  void col2im(const T* src, int h, int w, T* dst, int ho, int wo) const {
    int m = ho * wo;
    for (int c = 0; c < in_ch_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = src + (static_cast<int64_t>(c) * k_ * k_ + ky * k_ + kx) * m;
          T* plane = dst + static_cast<int64_t>(c) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= w) continue;
              plane[iy * w + ix] += row[oy * wo + ox];
            }
          }
        }
      }
    }
  }

  int in_ch_, out_ch_, k_, stride_, pad_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------- conv 3d

// 3x3x3, stride 1, same padding.
template <class T>
class Conv3d : public Layer<T> {
 public:
  Conv3d(std::string name, int in_ch, int out_ch, NormalSampler* init)
      : in_ch_(in_ch), out_ch_(out_ch) {
    w_.init_shape(name + ".w", {out_ch, in_ch, 3, 3, 3});
    b_.init_shape(name + ".b", {out_ch});
    if (init) {
      double std = std::sqrt(2.0 / (in_ch * 27.0));
      for (auto& v : w_.w.v) v = static_cast<T>(init->normal() * std);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    x_ = x;
    int n = x.dim(0), d = x.dim(2), h = x.dim(3), w = x.dim(4);
    if (x.dim(1) != in_ch_) throw UsageError("conv3d channel mismatch");
    Tensor<T> y({n, out_ch_, d, h, w});
    int ck = in_ch_ * 27;
    int64_t m = static_cast<int64_t>(d) * h * w;
    MatrixRM<T> cols(ck, m);
    Eigen::Map<const MatrixRM<T>> wm(w_.w.data(), out_ch_, ck);
    for (int i = 0; i < n; ++i) {
      im2col(x.data() + i * in_ch_ * m, d, h, w, cols.data());
      Eigen::Map<MatrixRM<T>> ym(y.data() + i * out_ch_ * m, out_ch_, m);
      ym.noalias() = wm * cols;
      for (int c = 0; c < out_ch_; ++c) ym.row(c).array() += b_.w.v[c];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    int n = x_.dim(0), d = x_.dim(2), h = x_.dim(3), w = x_.dim(4);
    int ck = in_ch_ * 27;
    int64_t m = static_cast<int64_t>(d) * h * w;
    Tensor<T> dx({n, in_ch_, d, h, w});
    MatrixRM<T> cols(ck, m), dcols(ck, m);
    Eigen::Map<const MatrixRM<T>> wm(w_.w.data(), out_ch_, ck);
    Eigen::Map<MatrixRM<T>> gw(w_.g.data(), out_ch_, ck);
    for (int i = 0; i < n; ++i) {
      Eigen::Map<const MatrixRM<T>> dym(dy.data() + i * out_ch_ * m, out_ch_, m);
      im2col(x_.data() + i * in_ch_ * m, d, h, w, cols.data());
      gw.noalias() += dym * cols.transpose();
      for (int c = 0; c < out_ch_; ++c) {
        const T* row = dy.data() + (static_cast<int64_t>(i) * out_ch_ + c) * m;
        T s = 0;
        for (int j = 0; j < m; ++j) s += row[j];
        b_.g.v[c] += s;
      }
      dcols.noalias() = wm.transpose() * dym;
      col2im(dcols.data(), d, h, w, dx.data() + i * in_ch_ * m);
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }
  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

 private:
  void im2col(const T* src, int d, int h, int w, T* dst) const {
    int64_t m = static_cast<int64_t>(d) * h * w;
    int64_t hw = static_cast<int64_t>(h) * w;
    for (int c = 0; c < in_ch_; ++c) {
      const T* vol = src + c * d * hw;
      for (int kz = 0; kz < 3; ++kz) {
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            T* row = dst + (static_cast<int64_t>(c) * 27 + kz * 9 + ky * 3 + kx) * m;
            for (int oz = 0; oz < d; ++oz) {
              int iz = oz + kz - 1;
              if (iz < 0 || iz >= d) {
                std::fill(row + oz * hw, row + (oz + 1) * hw, T(0));
                continue;
              }
              const T* plane = vol + iz * hw;
              T* out = row + oz * hw;
              for (int oy = 0; oy < h; ++oy) {
                int iy = oy + ky - 1;
                if (iy < 0 || iy >= h) {
                  std::fill(out + oy * w, out + (oy + 1) * w, T(0));
                  continue;
                }
                const T* line = plane + iy * w;
                T* ol = out + oy * w;
                if (kx == 1) {
                  std::copy(line, line + w, ol);
                } else if (kx == 0) {
                  ol[0] = T(0);
                  std::copy(line, line + w - 1, ol + 1);
                } else {
                  std::copy(line + 1, line + w, ol);
                  ol[w - 1] = T(0);
                }
              }
            }
          }
        }
      }
    }
  }

  void col2im(const T* src, int d, int h, int w, T* dst) const {
    int64_t m = static_cast<int64_t>(d) * h * w;
    int64_t hw = static_cast<int64_t>(h) * w;
    for (int c = 0; c < in_ch_; ++c) {
      T* vol = dst + c * d * hw;
      for (int kz = 0; kz < 3; ++kz) {
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            const T* row = src + (static_cast<int64_t>(c) * 27 + kz * 9 + ky * 3 + kx) * m;
            for (int oz = 0; oz < d; ++oz) {
              int iz = oz + kz - 1;
              if (iz < 0 || iz >= d) continue;
              T* plane = vol + iz * hw;
              const T* in = row + oz * hw;
              for (int oy = 0; oy < h; ++oy) {
                int iy = oy + ky - 1;
                if (iy < 0 || iy >= h) continue;
                T* line = plane + iy * w;
                const T* il = in + oy * w;
                if (kx == 1) {
                  for (int x = 0; x < w; ++x) line[x] += il[x];
                } else if (kx == 0) {
                  for (int x = 1; x < w; ++x) line[x - 1] += il[x];
                } else {
                  for (int x = 0; x < w - 1; ++x) line[x + 1] += il[x];
                }
              }
            }
          }
        }
      }
    }
  }

  int in_ch_, out_ch_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

// ------------------------------------------------------------- batch norm

// Normalizes over every axis except channel (dim 1).
template <class T>
class BatchNorm : public Layer<T> {
 public:
  BatchNorm(std::string name, int channels, double momentum = 0.1,
            double eps = 1e-5)
      : ch_(channels), momentum_(momentum), eps_(eps) {
    g_.init_shape(name + ".gamma", {channels});
    b_.init_shape(name + ".beta", {channels});
    std::fill(g_.w.v.begin(), g_.w.v.end(), T(1));
    running_mean_.assign(channels, 0.0);
    running_var_.assign(channels, 1.0);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    if (x.dim(1) != ch_) throw UsageError("batch norm channel mismatch");
    int n = x.dim(0);
    int64_t sp = x.size() / (static_cast<int64_t>(n) * ch_);
    Tensor<T> y(x.shape);
    mean_.assign(ch_, 0.0);
    inv_std_.assign(ch_, 0.0);
    if (train) {
      std::vector<double> var(ch_, 0.0);
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < ch_; ++c) {
          const T* p = x.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
          double s = 0.0;
          for (int64_t j = 0; j < sp; ++j) s += p[j];
          mean_[c] += s;
        }
      }
      double m = static_cast<double>(n) * sp;
      for (int c = 0; c < ch_; ++c) mean_[c] /= m;
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < ch_; ++c) {
          const T* p = x.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
          double s = 0.0;
          for (int64_t j = 0; j < sp; ++j) {
            double d = p[j] - mean_[c];
            s += d * d;
          }
          var[c] += s;
        }
      }
      for (int c = 0; c < ch_; ++c) {
        var[c] /= m;
        inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);
        running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean_[c];
        running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var[c];
      }
    } else {
      for (int c = 0; c < ch_; ++c) {
        mean_[c] = running_mean_[c];
        inv_std_[c] = 1.0 / std::sqrt(running_var_[c] + eps_);
      }
    }
    xhat_ = Tensor<T>(x.shape);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < ch_; ++c) {
        const T* p = x.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
        T* xh = xhat_.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
        T* q = y.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
        T gamma = g_.w.v[c], beta = b_.w.v[c];
        for (int64_t j = 0; j < sp; ++j) {
          xh[j] = static_cast<T>((p[j] - mean_[c]) * inv_std_[c]);
          q[j] = gamma * xh[j] + beta;
        }
      }
    }
    train_ = train;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    int n = dy.dim(0);
    int64_t sp = dy.size() / (static_cast<int64_t>(n) * ch_);
    double m = static_cast<double>(n) * sp;
    Tensor<T> dx(dy.shape);
    for (int c = 0; c < ch_; ++c) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* dyp = dy.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
        const T* xh = xhat_.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
        for (int64_t j = 0; j < sp; ++j) {
          sum_dy += dyp[j];
          sum_dy_xh += static_cast<double>(dyp[j]) * xh[j];
        }
      }
      g_.g.v[c] += static_cast<T>(sum_dy_xh);
      b_.g.v[c] += static_cast<T>(sum_dy);
      double gamma = g_.w.v[c];
      double k = gamma * inv_std_[c];
      for (int i = 0; i < n; ++i) {
        const T* dyp = dy.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
        const T* xh = xhat_.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
        T* dxp = dx.data() + (static_cast<int64_t>(i) * ch_ + c) * sp;
        if (train_) {
          for (int64_t j = 0; j < sp; ++j) {
            dxp[j] = static_cast<T>(
                k * (dyp[j] - sum_dy / m - xh[j] * (sum_dy_xh / m)));
          }
        } else {
          for (int64_t j = 0; j < sp; ++j) dxp[j] = static_cast<T>(k * dyp[j]);
        }
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&g_, &b_}; }
  std::vector<double>& running_mean() { return running_mean_; }
  std::vector<double>& running_var() { return running_var_; }

 private:
  int ch_;
  double momentum_, eps_;
  Param<T> g_, b_;
  std::vector<double> running_mean_, running_var_;
  std::vector<double> mean_, inv_std_;
  Tensor<T> xhat_;
  bool train_ = true;
};

// ------------------------------------------------------------------ relu

template <class T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool) override {
    mask_.assign(x.v.size(), 0);
    Tensor<T> y(x.shape);
    for (size_t i = 0; i < x.v.size(); ++i) {
      if (x.v[i] > T(0)) {
        y.v[i] = x.v[i];
        mask_[i] = 1;
      }
    }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx(dy.shape);
    for (size_t i = 0; i < dy.v.size(); ++i) {
      dx.v[i] = mask_[i] ? dy.v[i] : T(0);
    }
    return dx;
  }

 private:
  std::vector<uint8_t> mask_;
};

// ----------------------------------------------------------- max pool 3d

// Kernel equals stride; ceil mode keeps partial windows at the far edges.
template <class T>
class MaxPool3d : public Layer<T> {
 public:
  MaxPool3d(int kd, int kh, int kw) : kd_(kd), kh_(kh), kw_(kw) {}

  static int out_size(int n, int k) { return (n + k - 1) / k; }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    in_shape_ = x.shape;
    int n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
    int od = out_size(d, kd_), oh = out_size(h, kh_), ow = out_size(w, kw_);
    Tensor<T> y({n, c, od, oh, ow});
    argmax_.assign(y.v.size(), 0);
    int64_t hw = static_cast<int64_t>(h) * w;
    int64_t idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int cc = 0; cc < c; ++cc) {
        const T* vol = x.data() + (static_cast<int64_t>(i) * c + cc) * d * hw;
        for (int oz = 0; oz < od; ++oz) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++idx) {
              int z0 = oz * kd_, y0 = oy * kh_, x0 = ox * kw_;
              int z1 = std::min(z0 + kd_, d), y1 = std::min(y0 + kh_, h),
                  x1 = std::min(x0 + kw_, w);
              T best = vol[static_cast<int64_t>(z0) * hw + y0 * w + x0];
              int64_t best_at = static_cast<int64_t>(z0) * hw + y0 * w + x0;
              for (int z = z0; z < z1; ++z) {
                for (int yy = y0; yy < y1; ++yy) {
                  const T* line = vol + static_cast<int64_t>(z) * hw + yy * w;
                  for (int xx = x0; xx < x1; ++xx) {
                    if (line[xx] > best) {
                      best = line[xx];
                      best_at = static_cast<int64_t>(z) * hw + yy * w + xx;
                    }
                  }
                }
              }
              y.v[idx] = best;
              argmax_[idx] = best_at;
            }
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    int n = in_shape_[0], c = in_shape_[1], d = in_shape_[2], h = in_shape_[3],
        w = in_shape_[4];
    Tensor<T> dx({n, c, d, h, w});
    int64_t vol = static_cast<int64_t>(d) * h * w;
    int64_t per_plane = dy.size() / (static_cast<int64_t>(n) * c);
    int64_t idx = 0;
    for (int i = 0; i < n; ++i) {
      for (int cc = 0; cc < c; ++cc) {
        T* dst = dx.data() + (static_cast<int64_t>(i) * c + cc) * vol;
        for (int64_t j = 0; j < per_plane; ++j, ++idx) {
          dst[argmax_[idx]] += dy.v[idx];
        }
      }
    }
    return dx;
  }

 private:
  int kd_, kh_, kw_;
  std::vector<int> in_shape_;
  std::vector<int64_t> argmax_;
};

// ---------------------------------------------------------------- linear

template <class T>
class Linear : public Layer<T> {
 public:
  Linear(std::string name, int in, int out, NormalSampler* init)
      : in_(in), out_(out) {
    w_.init_shape(name + ".w", {out, in});
    b_.init_shape(name + ".b", {out});
    if (init) {
      double std = std::sqrt(2.0 / in);
      for (auto& v : w_.w.v) v = static_cast<T>(init->normal() * std);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    x_ = x;
    int n = x.dim(0);
    if (x.size() / n != in_) throw UsageError("linear input size mismatch");
    Tensor<T> y({n, out_});
    Eigen::Map<const MatrixRM<T>> xm(x.data(), n, in_);
    Eigen::Map<const MatrixRM<T>> wm(w_.w.data(), out_, in_);
    Eigen::Map<MatrixRM<T>> ym(y.data(), n, out_);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i) {
      for (int o = 0; o < out_; ++o) ym(i, o) += b_.w.v[o];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    int n = dy.dim(0);
    Tensor<T> dx(x_.shape);
    Eigen::Map<const MatrixRM<T>> dym(dy.data(), n, out_);
    Eigen::Map<const MatrixRM<T>> xm(x_.data(), n, in_);
    Eigen::Map<const MatrixRM<T>> wm(w_.w.data(), out_, in_);
    Eigen::Map<MatrixRM<T>> gw(w_.g.data(), out_, in_);
    Eigen::Map<MatrixRM<T>> dxm(dx.data(), n, in_);
    gw.noalias() += dym.transpose() * xm;
    for (int o = 0; o < out_; ++o) {
      T s = 0;
      for (int i = 0; i < n; ++i)
        s += dy.data()[static_cast<int64_t>(i) * out_ + o];
      b_.g.v[o] += s;
    }
    dxm.noalias() = dym * wm;
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }
  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

 private:
  int in_, out_;
  Param<T> w_, b_;
  Tensor<T> x_;
};

// --------------------------------------------------------------- dropout

// Inverted dropout; identity in eval mode.
template <class T>
class Dropout : public Layer<T> {
 public:
  Dropout(double p, NormalSampler* rng) : p_(p), rng_(rng) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) override {
    if (!train || p_ <= 0.0) {
      mask_.clear();
      return x;
    }
    double keep = 1.0 - p_;
    T scale = static_cast<T>(1.0 / keep);
    mask_.assign(x.v.size(), 0);
    Tensor<T> y(x.shape);
    for (size_t i = 0; i < x.v.size(); ++i) {
      if (rng_->uniform() < keep) {
        mask_[i] = 1;
        y.v[i] = x.v[i] * scale;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    if (mask_.empty()) return dy;
    T scale = static_cast<T>(1.0 / (1.0 - p_));
    Tensor<T> dx(dy.shape);
    for (size_t i = 0; i < dy.v.size(); ++i) {
      dx.v[i] = mask_[i] ? dy.v[i] * scale : T(0);
    }
    return dx;
  }

 private:
  double p_;
  NormalSampler* rng_;
  std::vector<uint8_t> mask_;
};

// ------------------------------------------------------- upsample nearest

template <class T>
class Upsample2x : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool) override {
    in_shape_ = x.shape;
    int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({n, c, h * 2, w * 2});
    for (int i = 0; i < n * c; ++i) {
      const T* src = x.data() + static_cast<int64_t>(i) * h * w;
      T* dst = y.data() + static_cast<int64_t>(i) * h * w * 4;
      for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
          T v = src[yy * w + xx];
          dst[(2 * yy) * (2 * w) + 2 * xx] = v;
          dst[(2 * yy) * (2 * w) + 2 * xx + 1] = v;
          dst[(2 * yy + 1) * (2 * w) + 2 * xx] = v;
          dst[(2 * yy + 1) * (2 * w) + 2 * xx + 1] = v;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    int n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    Tensor<T> dx({n, c, h, w});
    for (int i = 0; i < n * c; ++i) {
      const T* src = dy.data() + static_cast<int64_t>(i) * h * w * 4;
      T* dst = dx.data() + static_cast<int64_t>(i) * h * w;
      for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
          dst[yy * w + xx] = src[(2 * yy) * (2 * w) + 2 * xx] +
                             src[(2 * yy) * (2 * w) + 2 * xx + 1] +
                             src[(2 * yy + 1) * (2 * w) + 2 * xx] +
                             src[(2 * yy + 1) * (2 * w) + 2 * xx + 1];
        }
      }
    }
    return dx;
  }

 private:
  std::vector<int> in_shape_;
};

// ------------------------------------------------------------------ loss

// Returns mean cross-entropy; fills dlogits with the mean-loss gradient.
template <class T>
double softmax_cross_entropy(const Tensor<T>& logits,
                             const std::vector<int>& labels,
                             Tensor<T>* dlogits,
                             std::vector<std::vector<double>>* probs_out = nullptr) {
  int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw UsageError("label count does not match batch");
  }
  if (dlogits) *dlogits = Tensor<T>(logits.shape);
  if (probs_out) probs_out->assign(n, std::vector<double>(k, 0.0));
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const T* row = logits.data() + static_cast<int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    double logz = std::log(z) + mx;
    loss += logz - row[labels[i]];
    for (int j = 0; j < k; ++j) {
      double p = std::exp(row[j] - logz);
      if (probs_out) (*probs_out)[i][j] = p;
      if (dlogits) {
        dlogits->v[static_cast<int64_t>(i) * k + j] =
            static_cast<T>((p - (j == labels[i] ? 1.0 : 0.0)) / n);
      }
    }
  }
  return loss / n;
}

// ------------------------------------------------------------------ adam

template <class T>
class Adam {
 public:
  explicit Adam(std::vector<Param<T>*> params, double lr = 1e-4,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->w.v.size(), 0.0);
      v_.emplace_back(p->w.v.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->g.zero();
  }

  void step() {
    ++t_;
    double c1 = 1.0 - std::pow(b1_, t_);
    double c2 = 1.0 - std::pow(b2_, t_);
    for (size_t k = 0; k < params_.size(); ++k) {
      auto& w = params_[k]->w.v;
      auto& g = params_[k]->g.v;
      for (size_t i = 0; i < w.size(); ++i) {
        double gi = g[i];
        m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * gi;
        v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * gi * gi;
        double mhat = m_[k][i] / c1;
        double vhat = v_[k][i] / c2;
        w[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  double lr() const { return lr_; }

 private:
  std::vector<Param<T>*> params_;
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace mmsd::nn
