#pragma once

#include <vector>

#include "block_operator.hpp"

namespace relkam {

// Uniform grid of (3L+1)^d angles. Products of two slices supported in
// [-L, L]^d evaluated here and transformed back give the truncated
// θ-convolution without aliasing.
struct AngleGrid {
  int d = 1;
  int L = 1;
  int side = 4;
  std::size_t points = 0;
  Mat phase;  // points x lattice size, e^{iℓ·θ_g}
};

const AngleGrid& angle_grid(int d, int L);

std::vector<Mat> to_grid(const BlockOperator& a, const AngleGrid& grid);
BlockOperator from_grid(const std::vector<Mat>& values, const Truncation& t,
                        const AngleGrid& grid);

}  // namespace relkam
