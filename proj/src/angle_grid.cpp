#include "angle_grid.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "parallel.hpp"

namespace relkam {

const AngleGrid& angle_grid(int d, int L) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<AngleGrid>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{d, L}];
  if (slot) return *slot;

  auto g = std::make_unique<AngleGrid>();
  g->d = d;
  g->L = L;
  g->side = 3 * L + 1;
  g->points = 1;
  for (int c = 0; c < d; ++c) g->points *= static_cast<std::size_t>(g->side);
  AngleLattice lat(d, L);
  g->phase.resize(static_cast<Eigen::Index>(g->points), static_cast<Eigen::Index>(lat.size()));
  std::vector<int> k(d, 0);
  for (std::size_t p = 0; p < g->points; ++p) {
    std::size_t rem = p;
    for (int c = d - 1; c >= 0; --c) {
      k[c] = static_cast<int>(rem % g->side);
      rem /= g->side;
    }
    for (std::size_t l = 0; l < lat.size(); ++l) {
      // Reduce ℓ·k modulo side in integers so the phase is exact to rounding.
      long prod = 0;
      const int* e = lat.ell(l);
      for (int c = 0; c < d; ++c) prod += static_cast<long>(e[c]) * k[c];
      prod %= g->side;
      if (prod < 0) prod += g->side;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(prod) / g->side;
      g->phase(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(l)) =
          cplx(std::cos(angle), std::sin(angle));
    }
  }
  slot = std::move(g);
  return *slot;
}

std::vector<Mat> to_grid(const BlockOperator& a, const AngleGrid& grid) {
  const int n = a.modes();
  std::vector<std::size_t> present;
  for (std::size_t l = 0; l < a.slice_count(); ++l)
    if (a.has_slice(l)) present.push_back(l);
  std::vector<Mat> out(grid.points);
  parallel_for(grid.points, [&](std::size_t p) {
    Mat v = Mat::Zero(n, n);
    for (std::size_t l : present)
      v += grid.phase(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(l)) * a.slice(l);
    out[p] = std::move(v);
  });
  return out;
}

BlockOperator from_grid(const std::vector<Mat>& values, const Truncation& t,
                        const AngleGrid& grid) {
  BlockOperator out(t);
  const int n = t.modes();
  const double scale = 1.0 / static_cast<double>(grid.points);
  std::vector<Mat> slices(out.slice_count());
  parallel_for(out.slice_count(), [&](std::size_t l) {
    Mat acc = Mat::Zero(n, n);
    for (std::size_t p = 0; p < grid.points; ++p)
      acc += std::conj(grid.phase(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(l))) *
             values[p];
    slices[l] = acc * scale;
  });
  for (std::size_t l = 0; l < slices.size(); ++l) out.set_slice(l, std::move(slices[l]));
  return out;
}

}  // namespace relkam
