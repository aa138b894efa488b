#pragma once

#include "mmsd/grid.hpp"

namespace mmsd {

// 2D complex DFTs, unnormalized (inverse does NOT divide by w*h).
// Plans are cached per size; safe for concurrent use on distinct grids.
ComplexGrid fft2(const ComplexGrid& in);
ComplexGrid ifft2(const ComplexGrid& in);

ComplexGrid fft2(const RealGrid& in);

}  // namespace mmsd
