#include "mmsd/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "mmsd/errors.hpp"
#include "mmsd/png_io.hpp"

namespace mmsd {
namespace {

// dark blue -> teal -> yellow ramp
void colormap(double v, uint8_t* rgb) {
  v = std::clamp(v, 0.0, 1.0);
  double r, g, b;
  if (v < 0.5) {
    double u = v / 0.5;
    r = 0.05 + 0.05 * u;
    g = 0.09 + 0.46 * u;
    b = 0.35 + 0.22 * u;
  } else {
    double u = (v - 0.5) / 0.5;
    r = 0.10 + 0.85 * u;
    g = 0.55 + 0.38 * u;
    b = 0.57 - 0.45 * u;
  }
  rgb[0] = static_cast<uint8_t>(std::lround(r * 255));
  rgb[1] = static_cast<uint8_t>(std::lround(g * 255));
  rgb[2] = static_cast<uint8_t>(std::lround(b * 255));
}

}  // namespace

void render_confusion_png(const std::vector<std::vector<int>>& confusion,
                          const std::string& path, int cell_size) {
  if (confusion.empty()) throw UsageError("empty confusion matrix");
  size_t k = confusion.size();
  for (const auto& row : confusion) {
    if (row.size() != k) throw UsageError("confusion matrix must be square");
  }
  if (cell_size < 4) throw UsageError("cell size too small");

  const int border = 1;
  int side = static_cast<int>(k) * cell_size + (static_cast<int>(k) + 1) * border;
  Image8 img;
  img.width = side;
  img.height = side;
  img.channels = 3;
  img.pixels.assign(static_cast<size_t>(side) * side * 3, 255);

  for (size_t row = 0; row < k; ++row) {
    int row_sum = 0;
    for (int v : confusion[row]) row_sum += v;
    for (size_t col = 0; col < k; ++col) {
      double frac = row_sum > 0
                        ? static_cast<double>(confusion[row][col]) / row_sum
                        : 0.0;
      uint8_t rgb[3];
      colormap(frac, rgb);
      int y0 = border + static_cast<int>(row) * (cell_size + border);
      int x0 = border + static_cast<int>(col) * (cell_size + border);
      for (int y = y0; y < y0 + cell_size; ++y) {
        for (int x = x0; x < x0 + cell_size; ++x) {
          uint8_t* px = img.pixels.data() + (static_cast<size_t>(y) * side + x) * 3;
          px[0] = rgb[0];
          px[1] = rgb[1];
          px[2] = rgb[2];
        }
      }
    }
  }
  save_png(path, img);
}

}  // namespace mmsd
