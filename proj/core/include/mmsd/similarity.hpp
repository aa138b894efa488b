#pragma once

#include "mmsd/clip.hpp"
#include "mmsd/landmarks.hpp"

namespace mmsd {

// 2D similarity x' = a*x - b*y + tx, y' = b*x + a*y + ty
// (rotation + uniform scale + translation, no reflection).
struct SimilarityTransform {
  double a = 1.0, b = 0.0, tx = 0.0, ty = 0.0;

  Point2 apply(const Point2& p) const {
    return {a * p[0] - b * p[1] + tx, b * p[0] + a * p[1] + ty};
  }
  SimilarityTransform inverse() const;
  double scale() const;
  double rotation_deg() const;

  static SimilarityTransform identity() { return {}; }
};

// Least-squares fit mapping src points onto dst points. The model is
// linear in (a, b, tx, ty), so the minimizer is the normal-equation
// solution. Throws DataError for degenerate (collinear within tolerance
// or non-finite) source points.
SimilarityTransform fit_similarity(const Landmarks5& src,
                                   const Landmarks5& dst);

// Resample one clip frame under the transform: output pixel (x, y) reads
// the source at transform^-1(x, y) with bilinear interpolation; samples
// outside the frame are zero.
FrameClip warp_frame(const FrameClip& clip, int frame,
                     const SimilarityTransform& to_template, int out_w,
                     int out_h);

}  // namespace mmsd
