#include "mmsd/similarity.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "mmsd/errors.hpp"

namespace mmsd {

SimilarityTransform SimilarityTransform::inverse() const {
  double det = a * a + b * b;
  SimilarityTransform inv;
  inv.a = a / det;
  inv.b = -b / det;
  inv.tx = (-a * tx - b * ty) / det;
  inv.ty = (b * tx - a * ty) / det;
  return inv;
}

double SimilarityTransform::scale() const { return std::hypot(a, b); }

double SimilarityTransform::rotation_deg() const {
  return std::atan2(b, a) * 180.0 / M_PI;
}

SimilarityTransform fit_similarity(const Landmarks5& src,
                                   const Landmarks5& dst) {
  for (const auto& p : src)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
      throw DataError("fit_similarity: non-finite landmark coordinate");

  // Collinearity check: smallest principal spread of the source points.
  double mx = 0, my = 0;
  for (const auto& p : src) {
    mx += p[0] / 5.0;
    my += p[1] / 5.0;
  }
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : src) {
    sxx += (p[0] - mx) * (p[0] - mx);
    sxy += (p[0] - mx) * (p[1] - my);
    syy += (p[1] - my) * (p[1] - my);
  }
  double tr = sxx + syy;
  double det = sxx * syy - sxy * sxy;
  double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  double lam_min = tr / 2.0 - disc;
  if (tr <= 0.0 || lam_min < 1e-9 * tr)
    throw DataError("fit_similarity: degenerate (collinear) landmarks");

  Eigen::Matrix<double, 10, 4> A;
  Eigen::Matrix<double, 10, 1> y;
  for (int i = 0; i < 5; ++i) {
    A.row(2 * i) << src[i][0], -src[i][1], 1, 0;
    A.row(2 * i + 1) << src[i][1], src[i][0], 0, 1;
    y(2 * i) = dst[i][0];
    y(2 * i + 1) = dst[i][1];
  }
  Eigen::Vector4d sol = (A.transpose() * A).ldlt().solve(A.transpose() * y);
  SimilarityTransform t;
  t.a = sol(0);
  t.b = sol(1);
  t.tx = sol(2);
  t.ty = sol(3);
  return t;
}

FrameClip warp_frame(const FrameClip& clip, int frame,
                     const SimilarityTransform& to_template, int out_w,
                     int out_h) {
  SimilarityTransform inv = to_template.inverse();
  FrameClip out(out_w, out_h, 1, clip.channels, clip.fps);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      Point2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      double sx = s[0], sy = s[1];
      int x0 = static_cast<int>(std::floor(sx));
      int y0 = static_cast<int>(std::floor(sy));
      double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < clip.channels; ++c) {
        auto tap = [&](int yy, int xx) -> double {
          if (xx < 0 || xx >= clip.width || yy < 0 || yy >= clip.height)
            return 0.0;
          return clip.at(frame, yy, xx, c);
        };
        double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                   fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
        out.at(0, y, x, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace mmsd
