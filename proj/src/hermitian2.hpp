#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "spectral.hpp"

namespace relkam {

// Eigendecomposition of a 1x1 or 2x2 Hermitian block: ascending eigenvalues,
// orthonormal eigenvector columns, first nonzero component real positive.
struct SmallEigen {
  int size = 1;
  double lambda[2] = {0.0, 0.0};
  Eigen::Matrix2cd U = Eigen::Matrix2cd::Identity();
};

inline void fix_phase(cplx& a, cplx& b) {
  const cplx lead = std::abs(a) > 0.0 ? a : b;
  if (std::abs(lead) == 0.0) return;
  const cplx ph = std::conj(lead) / std::abs(lead);
  a *= ph;
  b *= ph;
  if (std::abs(a) > 0.0) a = std::abs(a); else b = std::abs(b);
}

inline SmallEigen hermitian_eigen(const Eigen::MatrixXcd& h) {
  SmallEigen e;
  if (h.rows() == 1) {
    e.size = 1;
    e.lambda[0] = h(0, 0).real();
    return e;
  }
  e.size = 2;
  const double a = h(0, 0).real(), d = h(1, 1).real();
  const cplx b = 0.5 * (h(0, 1) + std::conj(h(1, 0)));
  const double mu = 0.5 * (a + d), delta = 0.5 * (a - d);
  const double r = std::hypot(delta, std::abs(b));
  e.lambda[0] = mu - r;
  e.lambda[1] = mu + r;
  if (std::abs(b) == 0.0) {
    if (a <= d) {
      e.U << 1.0, 0.0, 0.0, 1.0;
    } else {
      e.U << 0.0, 1.0, 1.0, 0.0;
    }
    return e;
  }
  cplx p1, p2;  // eigenvector of mu + r
  if (delta >= 0.0) {
    p1 = r + delta;
    p2 = std::conj(b);
  } else {
    p1 = b;
    p2 = r - delta;
  }
  const double nrm = std::hypot(std::abs(p1), std::abs(p2));
  p1 /= nrm;
  p2 /= nrm;
  cplx m1 = -std::conj(p2), m2 = std::conj(p1);
  fix_phase(p1, p2);
  fix_phase(m1, m2);
  e.U << m1, p1, m2, p2;
  return e;
}

}  // namespace relkam
