#include "mmsd/deep_magnifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mmsd/errors.hpp"
#include "mmsd/weights_io.hpp"

namespace mmsd {

using nn::Conv2d;
using nn::NormalSampler;
using nn::ReLU;
using nn::Tensor;
using nn::Upsample2x;

struct DeepMagnifier::Net {
  Conv2d<float> conv1, conv2, shape_head, texture_head;
  ReLU<float> relu1, relu2;

  Conv2d<float> dec_in;
  ReLU<float> dec_in_relu;
  Conv2d<float> res1a, res1b, res2a, res2b;
  ReLU<float> res1_relu, res2_relu;
  Upsample2x<float> up;
  Conv2d<float> dec_up;
  ReLU<float> dec_up_relu;
  Conv2d<float> dec_out;

  Net(int base, NormalSampler* init)
      : conv1("enc.conv1", 3, base, 3, 1, 1, init),
        conv2("enc.conv2", base, base * 2, 3, 2, 1, init),
        shape_head("enc.shape", base * 2, base * 2, 3, 1, 1, init),
        texture_head("enc.texture", base * 2, base * 2, 3, 1, 1, init),
        dec_in("dec.in", base * 4, base * 2, 3, 1, 1, init),
        res1a("dec.res1a", base * 2, base * 2, 3, 1, 1, init),
        res1b("dec.res1b", base * 2, base * 2, 3, 1, 1, init),
        res2a("dec.res2a", base * 2, base * 2, 3, 1, 1, init),
        res2b("dec.res2b", base * 2, base * 2, 3, 1, 1, init),
        dec_up("dec.up", base * 2, base, 3, 1, 1, init),
        dec_out("dec.out", base, 3, 3, 1, 1, init) {}

  std::vector<nn::Param<float>*> params() {
    std::vector<nn::Param<float>*> out;
    for (auto* layer :
         std::initializer_list<nn::Layer<float>*>{
             &conv1, &conv2, &shape_head, &texture_head, &dec_in, &res1a,
             &res1b, &res2a, &res2b, &dec_up, &dec_out}) {
      for (auto* p : layer->params()) out.push_back(p);
    }
    return out;
  }

  std::pair<Tensor<float>, Tensor<float>> encode(const Tensor<float>& x,
                                                 bool train) {
    Tensor<float> h = relu1.forward(conv1.forward(x, train), train);
    h = relu2.forward(conv2.forward(h, train), train);
    return {shape_head.forward(h, train), texture_head.forward(h, train)};
  }

  // Gradient of the shared trunk; texture gradient optional because the
  // reference frame's texture never reaches the loss.
  void encode_backward(const Tensor<float>& dshape,
                       const Tensor<float>* dtexture) {
    Tensor<float> dh = shape_head.backward(dshape);
    if (dtexture) {
      Tensor<float> dt = texture_head.backward(*dtexture);
      for (size_t i = 0; i < dh.v.size(); ++i) dh.v[i] += dt.v[i];
    }
    conv1.backward(relu1.backward(conv2.backward(relu2.backward(dh))));
  }

  Tensor<float> decode(const Tensor<float>& texture,
                       const Tensor<float>& shape, bool train) {
    if (shape.shape != texture.shape) {
      throw UsageError("shape/texture representation mismatch");
    }
    int n = shape.dim(0), c = shape.dim(1), h = shape.dim(2), w = shape.dim(3);
    Tensor<float> cat({n, c * 2, h, w});
    int64_t plane = static_cast<int64_t>(c) * h * w;
    for (int i = 0; i < n; ++i) {
      std::copy(shape.data() + i * plane, shape.data() + (i + 1) * plane,
                cat.data() + i * 2 * plane);
      std::copy(texture.data() + i * plane, texture.data() + (i + 1) * plane,
                cat.data() + i * 2 * plane + plane);
    }
    Tensor<float> x = dec_in_relu.forward(dec_in.forward(cat, train), train);
    Tensor<float> r = res1b.forward(
        res1_relu.forward(res1a.forward(x, train), train), train);
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += r.v[i];
    r = res2b.forward(res2_relu.forward(res2a.forward(x, train), train),
                      train);
    for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += r.v[i];
    x = up.forward(x, train);
    x = dec_up_relu.forward(dec_up.forward(x, train), train);
    return dec_out.forward(x, train);
  }

  // Returns (dshape, dtexture).
  std::pair<Tensor<float>, Tensor<float>> decode_backward(
      const Tensor<float>& dy) {
    Tensor<float> d = dec_up.backward(dec_up_relu.backward(dec_out.backward(dy)));
    d = up.backward(d);
    {
      Tensor<float> dr =
          res2a.backward(res2_relu.backward(res2b.backward(d)));
      for (size_t i = 0; i < d.v.size(); ++i) d.v[i] += dr.v[i];
    }
    {
      Tensor<float> dr =
          res1a.backward(res1_relu.backward(res1b.backward(d)));
      for (size_t i = 0; i < d.v.size(); ++i) d.v[i] += dr.v[i];
    }
    Tensor<float> dcat = dec_in.backward(dec_in_relu.backward(d));
    int n = dcat.dim(0), c2 = dcat.dim(1), h = dcat.dim(2), w = dcat.dim(3);
    int c = c2 / 2;
    Tensor<float> dshape({n, c, h, w}), dtexture({n, c, h, w});
    int64_t plane = static_cast<int64_t>(c) * h * w;
    for (int i = 0; i < n; ++i) {
      std::copy(dcat.data() + i * 2 * plane, dcat.data() + i * 2 * plane + plane,
                dshape.data() + i * plane);
      std::copy(dcat.data() + i * 2 * plane + plane,
                dcat.data() + (i + 1) * 2 * plane, dtexture.data() + i * plane);
    }
    return {std::move(dshape), std::move(dtexture)};
  }
};

DeepMagnifier::DeepMagnifier(const DeepMagConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
  if (cfg.m < 1.0) throw UsageError("magnification m must be >= 1");
  if (cfg.base_channels < 1) throw UsageError("base channels must be >= 1");
  NormalSampler init(init_seed);
  net_ = std::make_unique<Net>(cfg.base_channels, &init);
}

DeepMagnifier::~DeepMagnifier() = default;
DeepMagnifier::DeepMagnifier(DeepMagnifier&&) noexcept = default;
DeepMagnifier& DeepMagnifier::operator=(DeepMagnifier&&) noexcept = default;

std::pair<Tensor<float>, Tensor<float>> DeepMagnifier::encode(
    const Tensor<float>& x) {
  if (x.shape.size() != 4 || x.dim(1) != 3) {
    throw UsageError("encode expects a 1x3xHxW tensor");
  }
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw UsageError("encode expects even spatial dims");
  }
  return net_->encode(x, false);
}

Tensor<float> DeepMagnifier::manipulate(const Tensor<float>& shape_a,
                                        const Tensor<float>& shape_b,
                                        double alpha) {
  if (shape_a.shape != shape_b.shape) {
    throw UsageError("manipulate requires same-shaped representations");
  }
  Tensor<float> out(shape_a.shape);
  float k = static_cast<float>(1.0 + alpha);
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = shape_a.v[i] + k * (shape_b.v[i] - shape_a.v[i]);
  }
  return out;
}

Tensor<float> DeepMagnifier::decode(const Tensor<float>& texture,
                                    const Tensor<float>& shape, bool clamp) {
  Tensor<float> y = net_->decode(texture, shape, false);
  if (clamp) {
    for (auto& v : y.v) v = std::min(1.0f, std::max(0.0f, v));
  }
  return y;
}

Tensor<float> DeepMagnifier::frame_tensor(const FrameClip& clip, int t) {
  if (clip.channels != 3) throw UsageError("expected a 3-channel clip");
  Tensor<float> x({1, 3, clip.height, clip.width});
  int64_t plane = static_cast<int64_t>(clip.height) * clip.width;
  const float* src = clip.data.data() + static_cast<int64_t>(t) * clip.frame_size();
  for (int64_t p = 0; p < plane; ++p) {
    x.v[p] = src[p * 3];
    x.v[plane + p] = src[p * 3 + 1];
    x.v[2 * plane + p] = src[p * 3 + 2];
  }
  return x;
}

void DeepMagnifier::tensor_to_frame(const Tensor<float>& x, FrameClip& clip,
                                    int t) {
  int64_t plane = static_cast<int64_t>(clip.height) * clip.width;
  float* dst = clip.data.data() + static_cast<int64_t>(t) * clip.frame_size();
  for (int64_t p = 0; p < plane; ++p) {
    dst[p * 3] = x.v[p];
    dst[p * 3 + 1] = x.v[plane + p];
    dst[p * 3 + 2] = x.v[2 * plane + p];
  }
}

FrameClip DeepMagnifier::magnify_clip(const SampleWindow& window) {
  if (!trained_) {
    throw UsageError("magnifier weights missing: train or load them first");
  }
  const FrameClip& in = window.frames;
  if (in.frames < 1) throw DataError("empty sample window");
  FrameClip out;
  out.width = in.width;
  out.height = in.height;
  out.frames = in.frames;
  out.channels = 3;
  out.fps = in.fps;
  out.data.assign(static_cast<size_t>(in.frames) * in.frame_size(), 0.0f);

  std::vector<Tensor<float>> shapes(in.frames);
  double alpha = cfg_.alpha();
  Tensor<float> first = frame_tensor(in, 0);
  tensor_to_frame(first, out, 0);
  auto [s0, t0] = net_->encode(first, false);
  shapes[0] = std::move(s0);
  for (int j = 1; j < in.frames; ++j) {
    Tensor<float> frame = frame_tensor(in, j);
    auto [sj, tj] = net_->encode(frame, false);
    shapes[j] = std::move(sj);
    const Tensor<float>& ref =
        (cfg_.mode == RefMode::dynamic_prev) ? shapes[j - 1] : shapes[0];
    Tensor<float> mag = manipulate(ref, shapes[j], alpha);
    Tensor<float> y = net_->decode(tj, mag, false);
    for (auto& v : y.v) v = std::min(1.0f, std::max(0.0f, v));
    tensor_to_frame(y, out, j);
  }
  return out;
}

namespace {

// Separable box-of-Gaussian blur used for band-limited toy textures.
void blur_canvas(std::vector<double>& v, int n, double sigma) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;
  std::vector<double> tmp(v.size());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int xx = std::clamp(x + i, 0, n - 1);
        acc += kernel[i + radius] * v[y * n + xx];
      }
      tmp[y * n + x] = acc;
    }
  }
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int yy = std::clamp(y + i, 0, n - 1);
        acc += kernel[i + radius] * tmp[yy * n + x];
      }
      v[y * n + x] = acc;
    }
  }
}

double bilinear(const std::vector<double>& v, int n, double x, double y) {
  x = std::clamp(x, 0.0, n - 1.0);
  y = std::clamp(y, 0.0, n - 1.0);
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  int x1 = std::min(x0 + 1, n - 1), y1 = std::min(y0 + 1, n - 1);
  double fx = x - x0, fy = y - y0;
  return (1 - fy) * ((1 - fx) * v[y0 * n + x0] + fx * v[y0 * n + x1]) +
         fy * ((1 - fx) * v[y1 * n + x0] + fx * v[y1 * n + x1]);
}

}  // namespace

std::vector<PairSample> DeepMagnifier::generate_synthetic_pairs(uint64_t seed,
                                                                int count) {
  if (count < 0) throw UsageError("pair count must be >= 0");
  const int size = 64, canvas = 96, margin = 16;
  NormalSampler rng(seed);
  std::vector<PairSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::vector<std::vector<double>> planes(3,
                                            std::vector<double>(canvas * canvas));
    std::vector<double> base(canvas * canvas), tint(canvas * canvas);
    for (auto& v : base) v = rng.normal();
    blur_canvas(base, canvas, 2.0);
    double mu = std::accumulate(base.begin(), base.end(), 0.0) / base.size();
    double var = 0.0;
    for (double v : base) var += (v - mu) * (v - mu);
    double sd = std::sqrt(var / base.size()) + 1e-9;
    for (int c = 0; c < 3; ++c) {
      for (auto& v : tint) v = rng.normal();
      blur_canvas(tint, canvas, 3.0);
      for (size_t p = 0; p < base.size(); ++p) {
        double v = 0.5 + 0.25 * (base[p] - mu) / sd + 0.12 * tint[p];
        planes[c][p] = std::clamp(v, 0.02, 0.98);
      }
    }
    PairSample ps;
    ps.delta = static_cast<float>(0.05 + 0.75 * rng.uniform());
    ps.alpha = static_cast<float>(4.0 * rng.uniform());
    ps.theta = static_cast<float>(2.0 * M_PI * rng.uniform());
    double dx = ps.delta * std::cos(ps.theta);
    double dy = ps.delta * std::sin(ps.theta);
    ps.a = Tensor<float>({1, 3, size, size});
    ps.b = Tensor<float>({1, 3, size, size});
    ps.target = Tensor<float>({1, 3, size, size});
    double k = 1.0 + ps.alpha;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          int64_t at = (static_cast<int64_t>(c) * size + y) * size + x;
          ps.a.v[at] = static_cast<float>(
              planes[c][(y + margin) * canvas + (x + margin)]);
          ps.b.v[at] = static_cast<float>(
              bilinear(planes[c], canvas, x + margin - dx, y + margin - dy));
          ps.target.v[at] = static_cast<float>(bilinear(
              planes[c], canvas, x + margin - k * dx, y + margin - k * dy));
        }
      }
    }
    out.push_back(std::move(ps));
  }
  return out;
}

std::vector<EpochLoss> DeepMagnifier::train_toy(
    const std::vector<PairSample>& pairs, const MagnifierTrainConfig& tc) {
  if (tc.epochs < 0) throw UsageError("epochs must be >= 0");
  if (tc.batch < 1) throw UsageError("batch must be >= 1");
  if (pairs.empty() && tc.epochs > 0) throw DataError("empty training set");
  std::vector<EpochLoss> log;
  nn::Adam<float> opt(net_->params(), tc.lr);
  NormalSampler shuffle_rng(tc.seed);

  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.raw() % i]);
    }
    double epoch_loss = 0.0;
    int64_t seen = 0;
    for (size_t at = 0; at < order.size(); at += tc.batch) {
      opt.zero_grad();
      size_t hi = std::min(order.size(), at + tc.batch);
      int n_batch = static_cast<int>(hi - at);
      double batch_loss = 0.0;
      for (size_t s = at; s < hi; ++s) {
        const PairSample& ps = pairs[order[s]];
        auto [sa, ta] = net_->encode(ps.a, true);
        auto [sb, tb] = net_->encode(ps.b, true);
        Tensor<float> mag = manipulate(sa, sb, ps.alpha);
        Tensor<float> y = net_->decode(tb, mag, true);

        Tensor<float> dy(y.shape);
        double inv = 1.0 / (static_cast<double>(y.size()) * n_batch);
        for (size_t i2 = 0; i2 < y.v.size(); ++i2) {
          double d = static_cast<double>(y.v[i2]) - ps.target.v[i2];
          batch_loss += std::abs(d) * inv * n_batch;
          dy.v[i2] = static_cast<float>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv);
        }

        auto [dshape, dtexture] = net_->decode_backward(dy);
        // caches hold frame b; shape grad (1+alpha)*d, texture grad direct
        Tensor<float> dsb(dshape.shape);
        float kb = static_cast<float>(1.0 + ps.alpha);
        for (size_t i2 = 0; i2 < dsb.v.size(); ++i2) {
          dsb.v[i2] = kb * dshape.v[i2];
        }
        net_->encode_backward(dsb, &dtexture);
        // re-run frame a to refresh caches, then its shape grad -alpha*d
        net_->encode(ps.a, true);
        Tensor<float> dsa(dshape.shape);
        float ka = static_cast<float>(-ps.alpha);
        for (size_t i2 = 0; i2 < dsa.v.size(); ++i2) {
          dsa.v[i2] = ka * dshape.v[i2];
        }
        net_->encode_backward(dsa, nullptr);
      }
      batch_loss /= n_batch;
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch
            << " sample offset " << at << " (lr " << tc.lr << ")";
        throw NumericError(msg.str());
      }
      epoch_loss += batch_loss * n_batch;
      seen += n_batch;
      opt.step();
    }
    log.push_back({epoch, epoch_loss / std::max<int64_t>(1, seen)});
  }
  trained_ = true;
  return log;
}

void DeepMagnifier::save(const std::string& path) const {
  WeightsFile file;
  for (auto* p : net_->params()) {
    NamedTensor t;
    t.name = p->name;
    t.shape = p->w.shape;
    t.data.assign(p->w.v.begin(), p->w.v.end());
    file.tensors.push_back(std::move(t));
  }
  save_weights(path, file);
}

void DeepMagnifier::load(const std::string& path) {
  WeightsFile file = load_weights(path);
  for (auto* p : net_->params()) {
    const NamedTensor* t = file.find(p->name);
    if (!t) throw DataError("weights file missing tensor: " + p->name);
    if (t->shape != p->w.shape) {
      throw DataError("weights shape mismatch for tensor " + p->name +
                      " (config widths differ?)");
    }
    std::copy(t->data.begin(), t->data.end(), p->w.v.begin());
  }
  trained_ = true;
}

std::vector<nn::Param<float>*> DeepMagnifier::params() {
  return net_->params();
}

}  // namespace mmsd
