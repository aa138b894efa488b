#pragma once

#include <vector>

#include "mmsd/grid.hpp"

namespace mmsd {

// Frequency-domain complex steerable pyramid. Radial raised-cosine
// windows split octaves; angular cos^(O-1) windows select orientation on
// a half-plane, so band coefficients are complex with local amplitude and
// phase. Coefficients are scaled so that the transform is a tight frame
// for real images: sum of band energies equals image energy, and
// reconstruct() inverts build() to machine precision.
struct PyramidConfig {
  int levels = 4;
  int orientations = 4;
  // Width of the radial raised-cosine transition, in octaves.
  double transition = 1.0;
};

struct PyramidBand {
  int level = 0;        // 0 = finest
  int orientation = 0;  // angular center pi*o/orientations
  ComplexGrid coef;
};

struct PyramidDecomposition {
  int width = 0;
  int height = 0;
  RealGrid highpass;  // full resolution real residual
  RealGrid lowpass;   // coarsest real residual (w/2^L)
  std::vector<PyramidBand> bands;  // level-major, orientation-minor

  PyramidBand& band(int level, int orientation, int num_orientations) {
    return bands[static_cast<size_t>(level) * num_orientations + orientation];
  }
  const PyramidBand& band(int level, int orientation,
                          int num_orientations) const {
    return bands[static_cast<size_t>(level) * num_orientations + orientation];
  }
};

// Requires finite pixels, width and height divisible by 2^levels, and the
// coarsest oriented band at least 8x8 (w / 2^(levels-1) >= 8).
PyramidDecomposition build(const RealGrid& image, const PyramidConfig& cfg);

RealGrid reconstruct(const PyramidDecomposition& pyr, const PyramidConfig& cfg);

RealGrid phase_of(const ComplexGrid& band);      // atan2; phase of 0 is 0
RealGrid amplitude_of(const ComplexGrid& band);  // modulus

// Sum of squared analysis windows at one absolute frequency (r in radians
// per pixel at full resolution, theta in radians), counting an oriented
// window and its conjugate reflection once each. Equals 1 on the whole
// plane for any valid config; exposed for frequency-domain test oracles.
double window_energy_at(double r, double theta, const PyramidConfig& cfg);

// Squared response of one oriented analysis window (level, orientation) at
// an absolute frequency, including the sqrt(2) analytic-band scaling; the
// expected energy share of a unit impulse pair at +/-(r, theta) in that
// band is response(r, theta) / 2 + response(r, theta + pi) / 2.
double band_window_energy_at(double r, double theta, int level,
                             int orientation, const PyramidConfig& cfg);

}  // namespace mmsd
