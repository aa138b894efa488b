#pragma once

#include <complex>
#include <vector>

namespace mmsd {

// Dense single-channel raster, row-major. The pixel currency of the
// pyramid and phase code (T = double) and of mask tables.
template <typename T>
struct Grid {
  int w = 0;
  int h = 0;
  std::vector<T> v;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : w(width), h(height), v(static_cast<size_t>(width) * height, fill) {}

  T& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  const T& at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  size_t size() const { return v.size(); }
};

using RealGrid = Grid<double>;
using ComplexGrid = Grid<std::complex<double>>;

}  // namespace mmsd
