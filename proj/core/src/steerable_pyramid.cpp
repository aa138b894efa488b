#include "mmsd/steerable_pyramid.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>

#include "mmsd/errors.hpp"
#include "mmsd/fft2.hpp"

namespace mmsd {
namespace {

constexpr double kPi = std::numbers::pi;

// Raised-cosine highpass edge on a log2 frequency axis: 0 below
// cutoff/2^tau, 1 above cutoff.
double radial_high(double r, double cutoff, double tau) {
  if (r >= cutoff) return 1.0;
  if (r <= cutoff * std::exp2(-tau) || r <= 0.0) return 0.0;
  return std::cos(kPi / 2.0 * std::log2(cutoff / r) / tau);
}

double radial_low(double r, double cutoff, double tau) {
  double h = radial_high(r, cutoff, tau);
  return std::sqrt(std::max(0.0, 1.0 - h * h));
}

// Normalization making the squared angular windows of all 2*O lobe centers
// sum to 1 at every angle.
double angular_gain(int orientations) {
  int o = orientations;
  double num = std::exp2(o - 1) * std::tgamma(static_cast<double>(o));
  double den = std::sqrt(o * std::tgamma(2.0 * o - 1.0));
  return num / den;
}

double angular_window(double theta, double center, int orientations,
                      double gain) {
  double c = std::cos(theta - center);
  if (c <= 0.0) return 0.0;
  return gain * std::pow(c, orientations - 1);
}

// Signed frequency in radians per sample for DFT index k on an axis of
// size n; k = n/2 maps to +pi.
double freq_of(int k, int n) {
  int s = (k <= n / 2) ? k : k - n;
  return 2.0 * kPi * s / n;
}

int parent_index(int child_k, int child_n, int parent_n) {
  int s = (child_k <= child_n / 2) ? child_k : child_k - child_n;
  return (s % parent_n + parent_n) % parent_n;
}

struct LevelMasks {
  int w = 0, h = 0;
  std::vector<RealGrid> oriented;
  RealGrid low;
};

struct PyramidMasks {
  RealGrid h0, l0;
  std::vector<LevelMasks> levels;
  int low_w = 0, low_h = 0;
};

std::shared_ptr<const PyramidMasks> make_masks(int w, int h,
                                               const PyramidConfig& cfg) {
  auto m = std::make_shared<PyramidMasks>();
  m->h0 = RealGrid(w, h);
  m->l0 = RealGrid(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double r = std::hypot(freq_of(x, w), freq_of(y, h));
      m->h0.at(y, x) = radial_high(r, kPi, cfg.transition);
      m->l0.at(y, x) = radial_low(r, kPi, cfg.transition);
    }
  }
  double gain = angular_gain(cfg.orientations);
  int gw = w, gh = h;
  for (int level = 0; level < cfg.levels; ++level) {
    LevelMasks lm;
    lm.w = gw;
    lm.h = gh;
    lm.low = RealGrid(gw, gh);
    lm.oriented.assign(cfg.orientations, RealGrid(gw, gh));
    for (int y = 0; y < gh; ++y) {
      for (int x = 0; x < gw; ++x) {
        double wx = freq_of(x, gw), wy = freq_of(y, gh);
        double r = std::hypot(wx, wy);
        double theta = std::atan2(wy, wx);
        double band = radial_high(r, kPi / 2.0, cfg.transition);
        lm.low.at(y, x) = radial_low(r, kPi / 2.0, cfg.transition);
        for (int o = 0; o < cfg.orientations; ++o) {
          double center = kPi * o / cfg.orientations;
          lm.oriented[o].at(y, x) =
              band * angular_window(theta, center, cfg.orientations, gain);
        }
      }
    }
    m->levels.push_back(std::move(lm));
    gw /= 2;
    gh /= 2;
  }
  m->low_w = gw;
  m->low_h = gh;
  return m;
}

std::shared_ptr<const PyramidMasks> masks_for(int w, int h,
                                              const PyramidConfig& cfg) {
  using Key = std::tuple<int, int, int, int, double>;
  static std::map<Key, std::shared_ptr<const PyramidMasks>> cache;
  static std::mutex mu;
  Key key{w, h, cfg.levels, cfg.orientations, cfg.transition};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto m = make_masks(w, h, cfg);
  cache.emplace(key, m);
  return m;
}

ComplexGrid crop_spectrum(const ComplexGrid& parent, int cw, int ch) {
  ComplexGrid child(cw, ch);
  for (int y = 0; y < ch; ++y) {
    int py = parent_index(y, ch, parent.h);
    for (int x = 0; x < cw; ++x) {
      child.at(y, x) = parent.at(py, parent_index(x, cw, parent.w));
    }
  }
  return child;
}

void embed_spectrum(const ComplexGrid& child, ComplexGrid& parent) {
  for (int y = 0; y < child.h; ++y) {
    int py = parent_index(y, child.h, parent.h);
    for (int x = 0; x < child.w; ++x) {
      parent.at(py, parent_index(x, child.w, parent.w)) += child.at(y, x);
    }
  }
}

void validate_config(const PyramidConfig& cfg) {
  if (cfg.levels < 1) throw UsageError("pyramid levels must be >= 1");
  if (cfg.orientations < 1) throw UsageError("pyramid orientations must be >= 1");
  if (!(cfg.transition > 0.0) || cfg.transition > 3.0) {
    throw UsageError("pyramid transition must be in (0, 3]");
  }
}

void validate_image(const RealGrid& image, const PyramidConfig& cfg) {
  int div = 1 << cfg.levels;
  if (image.w < 1 || image.h < 1) throw DataError("empty image");
  if (image.w % div != 0 || image.h % div != 0) {
    throw DataError("image dimensions must be divisible by 2^levels");
  }
  int coarsest = std::min(image.w, image.h) >> (cfg.levels - 1);
  if (coarsest < 8) {
    throw DataError("image too small: coarsest oriented band would be under 8x8");
  }
  for (double v : image.v) {
    if (!std::isfinite(v)) throw NumericError("non-finite pixel value");
  }
}

}  // namespace

PyramidDecomposition build(const RealGrid& image, const PyramidConfig& cfg) {
  validate_config(cfg);
  validate_image(image, cfg);
  auto masks = masks_for(image.w, image.h, cfg);
  double n_full = static_cast<double>(image.w) * image.h;

  PyramidDecomposition pyr;
  pyr.width = image.w;
  pyr.height = image.h;
  ComplexGrid spectrum = fft2(image);

  {
    ComplexGrid hp(image.w, image.h);
    for (size_t i = 0; i < hp.v.size(); ++i) {
      hp.v[i] = spectrum.v[i] * masks->h0.v[i];
    }
    ComplexGrid sp = ifft2(hp);
    pyr.highpass = RealGrid(image.w, image.h);
    for (size_t i = 0; i < sp.v.size(); ++i) {
      pyr.highpass.v[i] = sp.v[i].real() / n_full;
    }
  }

  ComplexGrid s(image.w, image.h);
  for (size_t i = 0; i < s.v.size(); ++i) {
    s.v[i] = spectrum.v[i] * masks->l0.v[i];
  }

  const double sqrt2 = std::numbers::sqrt2;
  for (int level = 0; level < cfg.levels; ++level) {
    const LevelMasks& lm = masks->levels[level];
    double n_g = static_cast<double>(lm.w) * lm.h;
    double scale = sqrt2 / std::sqrt(n_g * n_full);
    for (int o = 0; o < cfg.orientations; ++o) {
      ComplexGrid z(lm.w, lm.h);
      for (size_t i = 0; i < z.v.size(); ++i) {
        z.v[i] = s.v[i] * lm.oriented[o].v[i];
      }
      PyramidBand band;
      band.level = level;
      band.orientation = o;
      band.coef = ifft2(z);
      for (auto& c : band.coef.v) c *= scale;
      pyr.bands.push_back(std::move(band));
    }
    for (size_t i = 0; i < s.v.size(); ++i) s.v[i] *= lm.low.v[i];
    s = crop_spectrum(s, lm.w / 2, lm.h / 2);
  }

  {
    double n_g = static_cast<double>(s.w) * s.h;
    double scale = 1.0 / std::sqrt(n_g * n_full);
    ComplexGrid sp = ifft2(s);
    pyr.lowpass = RealGrid(s.w, s.h);
    for (size_t i = 0; i < sp.v.size(); ++i) {
      pyr.lowpass.v[i] = sp.v[i].real() * scale;
    }
  }
  return pyr;
}

RealGrid reconstruct(const PyramidDecomposition& pyr,
                     const PyramidConfig& cfg) {
  validate_config(cfg);
  if (pyr.width < 1 || pyr.height < 1 ||
      pyr.bands.size() !=
          static_cast<size_t>(cfg.levels) * cfg.orientations) {
    throw UsageError("pyramid does not match config");
  }
  auto masks = masks_for(pyr.width, pyr.height, cfg);
  double n_full = static_cast<double>(pyr.width) * pyr.height;
  const double sqrt2 = std::numbers::sqrt2;

  // Walk coarse to fine, accumulating the spectrum estimate. Oriented
  // bands enter with twice their analysis weight; the imaginary half of
  // that shortcut cancels in the final real part.
  ComplexGrid acc(masks->low_w, masks->low_h);
  {
    double n_g = static_cast<double>(masks->low_w) * masks->low_h;
    ComplexGrid lp(masks->low_w, masks->low_h);
    for (size_t i = 0; i < lp.v.size(); ++i) lp.v[i] = pyr.lowpass.v[i];
    acc = fft2(lp);
    double recover = std::sqrt(n_full / n_g);
    for (auto& c : acc.v) c *= recover;
  }

  for (int level = cfg.levels - 1; level >= 0; --level) {
    const LevelMasks& lm = masks->levels[level];
    double n_g = static_cast<double>(lm.w) * lm.h;
    ComplexGrid up(lm.w, lm.h);
    for (size_t i = 0; i < up.v.size(); ++i) up.v[i] = 0.0;
    embed_spectrum(acc, up);
    for (size_t i = 0; i < up.v.size(); ++i) up.v[i] *= lm.low.v[i];
    double recover = sqrt2 * std::sqrt(n_full / n_g);
    for (int o = 0; o < cfg.orientations; ++o) {
      const PyramidBand& band = pyr.band(level, o, cfg.orientations);
      if (band.coef.w != lm.w || band.coef.h != lm.h) {
        throw UsageError("pyramid band size does not match config");
      }
      ComplexGrid z = fft2(band.coef);
      for (size_t i = 0; i < z.v.size(); ++i) {
        up.v[i] += z.v[i] * (recover * lm.oriented[o].v[i]);
      }
    }
    acc = std::move(up);
  }

  ComplexGrid top(pyr.width, pyr.height);
  for (size_t i = 0; i < top.v.size(); ++i) {
    top.v[i] = acc.v[i] * masks->l0.v[i];
  }
  {
    if (pyr.highpass.w != pyr.width || pyr.highpass.h != pyr.height) {
      throw UsageError("highpass size does not match config");
    }
    ComplexGrid hp(pyr.width, pyr.height);
    for (size_t i = 0; i < hp.v.size(); ++i) hp.v[i] = pyr.highpass.v[i];
    ComplexGrid z = fft2(hp);
    for (size_t i = 0; i < top.v.size(); ++i) {
      top.v[i] += z.v[i] * masks->h0.v[i];
    }
  }

  ComplexGrid sp = ifft2(top);
  RealGrid out(pyr.width, pyr.height);
  for (size_t i = 0; i < sp.v.size(); ++i) {
    out.v[i] = sp.v[i].real() / n_full;
  }
  return out;
}

RealGrid phase_of(const ComplexGrid& band) {
  RealGrid out(band.w, band.h);
  for (size_t i = 0; i < band.v.size(); ++i) {
    const auto& c = band.v[i];
    out.v[i] = (c.real() == 0.0 && c.imag() == 0.0)
                   ? 0.0
                   : std::atan2(c.imag(), c.real());
  }
  return out;
}

RealGrid amplitude_of(const ComplexGrid& band) {
  RealGrid out(band.w, band.h);
  for (size_t i = 0; i < band.v.size(); ++i) out.v[i] = std::abs(band.v[i]);
  return out;
}

double window_energy_at(double r, double theta, const PyramidConfig& cfg) {
  validate_config(cfg);
  double h0 = radial_high(r, kPi, cfg.transition);
  double total = h0 * h0;
  double chain = radial_low(r, kPi, cfg.transition);
  double gain = angular_gain(cfg.orientations);
  double ang = 0.0;
  for (int o = 0; o < cfg.orientations; ++o) {
    double center = kPi * o / cfg.orientations;
    double a = angular_window(theta, center, cfg.orientations, gain);
    double b = angular_window(theta + kPi, center, cfg.orientations, gain);
    ang += a * a + b * b;
  }
  double rl = r;
  for (int level = 0; level < cfg.levels; ++level) {
    double band = chain * radial_high(rl, kPi / 2.0, cfg.transition);
    total += band * band * ang;
    chain *= radial_low(rl, kPi / 2.0, cfg.transition);
    rl *= 2.0;
  }
  total += chain * chain;
  return total;
}

double band_window_energy_at(double r, double theta, int level,
                             int orientation, const PyramidConfig& cfg) {
  validate_config(cfg);
  if (level < 0 || level >= cfg.levels || orientation < 0 ||
      orientation >= cfg.orientations) {
    throw UsageError("band index out of range");
  }
  double chain = radial_low(r, kPi, cfg.transition);
  double rl = r;
  for (int j = 0; j < level; ++j) {
    chain *= radial_low(rl, kPi / 2.0, cfg.transition);
    rl *= 2.0;
  }
  chain *= radial_high(rl, kPi / 2.0, cfg.transition);
  double a = angular_window(theta, kPi * orientation / cfg.orientations,
                            cfg.orientations, angular_gain(cfg.orientations));
  double w = chain * a;
  return 2.0 * w * w;
}

}  // namespace mmsd
