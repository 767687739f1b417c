#pragma once

// Shared fixtures and independent reference computations for the test suites.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "block_operator.hpp"
#include "spectral.hpp"

namespace relkam::testing {

inline cplx random_cplx(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  const double re = nd(rng);
  return {re, nd(rng)};
}

// Random operator with roughly `fill` of its slices present and entries decaying
// like e^{-decay·(|ℓ| + |n − m|)}.
inline BlockOperator random_operator(const Truncation& t, std::mt19937_64& rng, double fill = 1.0,
                                     double decay = 0.0, bool hermitian = false) {
  BlockOperator A(t);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const AngleLattice& lat = A.lattice();
  for (std::size_t l = 0; l < lat.size(); ++l) {
    if (u(rng) > fill) continue;
    Mat m(t.modes(), t.modes());
    for (int n = -t.J; n <= t.J; ++n)
      for (int k = -t.J; k <= t.J; ++k)
        m(t.row(n), t.row(k)) =
            random_cplx(rng) * std::exp(-decay * (lat.sup_norm(l) + std::abs(n - k)));
    A.set_slice(l, std::move(m));
  }
  if (hermitian) A = hermitian_symmetrize(A);
  return A;
}

// Operator whose slices sit only at ℓ with sup norm ≤ reach.
inline BlockOperator random_operator_reach(const Truncation& t, std::mt19937_64& rng, int reach,
                                           double scale = 1.0, bool hermitian = false) {
  BlockOperator A = random_operator(t, rng, 1.0, 0.0, false);
  for (std::size_t l = 0; l < A.slice_count(); ++l)
    if (A.lattice().sup_norm(l) > reach) A.drop_slice(l);
  A *= scale;
  if (hermitian) A = hermitian_symmetrize(A);
  return A;
}

inline std::vector<int> block_row_list(int J, int i) {
  if (i == 0) return {J};
  return {J + i, J - i};
}

inline Mat extract_block(const Mat& m, int J, int i, int j) {
  const auto ri = block_row_list(J, i), rj = block_row_list(J, j);
  Mat b(ri.size(), rj.size());
  for (std::size_t a = 0; a < ri.size(); ++a)
    for (std::size_t c = 0; c < rj.size(); ++c) b(a, c) = m(ri[a], rj[c]);
  return b;
}

// The decay norm straight from its definition, with the block norm taken from
// a full SVD.
inline double brute_decay_norm(const BlockOperator& A, const NormSpec& spec) {
  const Truncation& t = A.truncation();
  const AngleLattice& lat = A.lattice();
  std::map<std::pair<std::size_t, int>, double> sup;
  for (std::size_t l = 0; l < lat.size(); ++l) {
    if (!A.has_slice(l)) continue;
    for (int i = 0; i <= t.J; ++i)
      for (int j = 0; j <= t.J; ++j) {
        const Mat b = extract_block(A.slice(l), t.J, i, j);
        Eigen::JacobiSVD<Mat> svd(b);
        const double w = std::pow(bracket(i), spec.m_right) * svd.singularValues()(0) *
                         std::pow(bracket(j), -spec.m_left);
        auto& cell = sup[{l, std::abs(i - j)}];
        cell = std::max(cell, w);
      }
  }
  double acc = 0.0;
  for (const auto& [key, v] : sup) {
    const double br = std::max({1, lat.sup_norm(key.first), key.second});
    acc += std::pow(br, 2.0 * spec.s) * v * v;
  }
  return std::sqrt(acc);
}

// e^{-iA} for Hermitian A through a full eigendecomposition.
inline Mat dense_unitary(const Mat& A, double sign = -1.0) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.adjoint()));
  Vec ph(es.eigenvalues().size());
  for (Eigen::Index k = 0; k < ph.size(); ++k)
    ph(k) = std::exp(cplx(0.0, sign * es.eigenvalues()(k)));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

inline double rel_error(const Mat& a, const Mat& b) {
  const double den = b.norm();
  return den == 0.0 ? a.norm() : (a - b).norm() / den;
}

inline std::vector<double> theta_point(int d, double base) {
  std::vector<double> th(d);
  for (int c = 0; c < d; ++c) th[c] = base * (c + 1) + 0.3 * c;
  return th;
}

}  // namespace relkam::testing

namespace relkam::testing {

// Exact length of {ω ∈ [1,2] : |ωℓ + m| < α/(1+|ℓ|³) for some (ℓ,m) ≠ 0 in the box},
// as a union of open intervals.
inline double interval_union_fraction(double alpha, int ell_max, int m_max) {
  std::vector<std::pair<double, double>> iv;
  for (int l = 1; l <= ell_max; ++l) {
    const double delta = alpha / (1.0 + static_cast<double>(l) * l * l);
    for (int m = -m_max; m <= m_max; ++m) {
      const double lo = std::max(1.0, (-m - delta) / l), hi = std::min(2.0, (-m + delta) / l);
      if (hi > lo) iv.emplace_back(lo, hi);
    }
  }
  std::sort(iv.begin(), iv.end());
  double total = 0.0, cur_lo = 0.0, cur_hi = -1.0;
  for (const auto& [lo, hi] : iv) {
    if (lo > cur_hi) {
      if (cur_hi > cur_lo) total += cur_hi - cur_lo;
      cur_lo = lo;
      cur_hi = hi;
    } else {
      cur_hi = std::max(cur_hi, hi);
    }
  }
  if (cur_hi > cur_lo) total += cur_hi - cur_lo;
  return total;
}

}  // namespace relkam::testing
