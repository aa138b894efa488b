#include "mmsd/phase_magnifier.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "mmsd/errors.hpp"

namespace mmsd {
namespace {

constexpr double kPi = std::numbers::pi;

void validate(const PhaseConfig& cfg) {
  if (cfg.t < 2) throw UsageError("phase window length t must be >= 2");
  if (cfg.alpha_p < 0.0) throw UsageError("alpha_p must be >= 0");
  if (cfg.smooth_sigma < 0.0) throw UsageError("smooth sigma must be >= 0");
  if (cfg.filter == TemporalFilter::windowed_bandpass) {
    if (!(cfg.fps > 0.0)) throw UsageError("fps must be positive");
    if (cfg.f_lo < 0.0 || !(cfg.f_lo < cfg.f_hi) ||
        cfg.f_hi > cfg.fps / 2.0 + 1e-12) {
      throw UsageError("band limits infeasible: need 0 <= f_lo < f_hi <= fps/2");
    }
  }
}

double wrap_pi(double x) {
  x = std::fmod(x + kPi, 2.0 * kPi);
  if (x <= 0.0) x += 2.0 * kPi;
  return x - kPi;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

// Zero-padded separable Gaussian, shared by the weighted numerator and
// the weight field so edge pixels renormalize against what is in bounds.
RealGrid gaussian_blur(const RealGrid& in, double sigma) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[i + radius] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;

  RealGrid tmp(in.w, in.h), out(in.w, in.h);
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int xx = x + i;
        if (xx < 0 || xx >= in.w) continue;
        acc += kernel[i + radius] * in.at(y, xx);
      }
      tmp.at(y, x) = acc;
    }
  }
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int yy = y + i;
        if (yy < 0 || yy >= in.h) continue;
        acc += kernel[i + radius] * tmp.at(yy, x);
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

RealGrid magnify_from_pyramids(const std::vector<const PyramidDecomposition*>& pyrs,
                               const PhaseConfig& cfg,
                               const PyramidConfig& pyr_cfg,
                               const std::vector<double>& taps) {
  const int t = cfg.t;
  const int c = t / 2;
  PyramidDecomposition out = *pyrs[c];

  for (size_t b = 0; b < out.bands.size(); ++b) {
    ComplexGrid& coef = out.bands[b].coef;
    RealGrid deviation(coef.w, coef.h);
    RealGrid amplitude(coef.w, coef.h);
    std::vector<double> phase(t);
    for (size_t i = 0; i < coef.v.size(); ++i) {
      for (int j = 0; j < t; ++j) {
        const auto& z = pyrs[j]->bands[b].coef.v[i];
        double p = (z.real() == 0.0 && z.imag() == 0.0)
                       ? 0.0
                       : std::atan2(z.imag(), z.real());
        phase[j] = (j == 0) ? p : phase[j - 1] + wrap_pi(p - phase[j - 1]);
      }
      double dev = 0.0;
      for (int j = 0; j < t; ++j) dev += taps[j] * phase[j];
      deviation.v[i] = dev;
      amplitude.v[i] = std::abs(coef.v[i]);
    }

    if (cfg.smooth_sigma > 0.0) {
      RealGrid weighted(coef.w, coef.h);
      for (size_t i = 0; i < weighted.v.size(); ++i) {
        weighted.v[i] = deviation.v[i] * amplitude.v[i];
      }
      RealGrid num = gaussian_blur(weighted, cfg.smooth_sigma);
      RealGrid den = gaussian_blur(amplitude, cfg.smooth_sigma);
      for (size_t i = 0; i < deviation.v.size(); ++i) {
        deviation.v[i] = num.v[i] / (den.v[i] + 1e-12);
      }
    }

    for (size_t i = 0; i < coef.v.size(); ++i) {
      coef.v[i] *= std::polar(1.0, cfg.alpha_p * deviation.v[i]);
    }
  }
  return reconstruct(out, pyr_cfg);
}

}  // namespace

std::vector<double> temporal_filter_taps(const PhaseConfig& cfg) {
  validate(cfg);
  const int t = cfg.t;
  const int c = t / 2;
  std::vector<double> taps(t, 0.0);
  if (cfg.filter == TemporalFilter::mean_removal) {
    for (int j = 0; j < t; ++j) taps[j] = -1.0 / t;
    taps[c] += 1.0;
    return taps;
  }
  double nu_lo = cfg.f_lo / cfg.fps;
  double nu_hi = cfg.f_hi / cfg.fps;
  for (int j = 0; j < t; ++j) {
    double d = j - c;
    double ideal = 2.0 * nu_hi * sinc(2.0 * nu_hi * d) -
                   2.0 * nu_lo * sinc(2.0 * nu_lo * d);
    double hann = (t == 1) ? 1.0
                           : 0.5 * (1.0 - std::cos(2.0 * kPi * j / (t - 1)));
    taps[j] = ideal * hann;
  }
  return taps;
}

RealGrid magnify_window(const std::vector<RealGrid>& frames,
                        const PhaseConfig& cfg, const PyramidConfig& pyr_cfg) {
  validate(cfg);
  if (static_cast<int>(frames.size()) != cfg.t) {
    throw UsageError("magnify_window expects exactly t frames");
  }
  for (const auto& f : frames) {
    if (f.w != frames[0].w || f.h != frames[0].h) {
      throw UsageError("window frames must share dimensions");
    }
  }
  std::vector<double> taps = temporal_filter_taps(cfg);
  std::vector<PyramidDecomposition> pyrs;
  pyrs.reserve(frames.size());
  for (const auto& f : frames) pyrs.push_back(build(f, pyr_cfg));
  std::vector<const PyramidDecomposition*> view;
  view.reserve(pyrs.size());
  for (const auto& p : pyrs) view.push_back(&p);
  return magnify_from_pyramids(view, cfg, pyr_cfg, taps);
}

std::vector<RealGrid> magnify_frames(const std::vector<RealGrid>& frames,
                                     const PhaseConfig& cfg,
                                     const PyramidConfig& pyr_cfg) {
  validate(cfg);
  const int t = cfg.t;
  const int omega = static_cast<int>(frames.size());
  if (omega < t) throw UsageError("clip shorter than phase window length t");
  std::vector<double> taps = temporal_filter_taps(cfg);

  std::vector<PyramidDecomposition> pyrs;
  pyrs.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.w != frames[0].w || f.h != frames[0].h) {
      throw UsageError("window frames must share dimensions");
    }
    pyrs.push_back(build(f, pyr_cfg));
  }

  std::vector<RealGrid> out;
  out.reserve(omega - t + 1);
  for (int j = 0; j + t <= omega; ++j) {
    std::vector<const PyramidDecomposition*> view;
    view.reserve(t);
    for (int i = 0; i < t; ++i) view.push_back(&pyrs[j + i]);
    RealGrid frame = magnify_from_pyramids(view, cfg, pyr_cfg, taps);
    for (double& v : frame.v) v = std::min(1.0, std::max(0.0, v));
    out.push_back(std::move(frame));
  }
  return out;
}

std::vector<RealGrid> magnify_clip(const SampleWindow& window,
                                   const PhaseConfig& cfg,
                                   const PyramidConfig& pyr_cfg) {
  std::vector<RealGrid> luma;
  luma.reserve(window.frames.frames);
  for (int t = 0; t < window.frames.frames; ++t) {
    luma.push_back(window.frames.luminance(t));
  }
  return magnify_frames(luma, cfg, pyr_cfg);
}

}  // namespace mmsd
