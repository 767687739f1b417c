#include "symbol.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace relkam {

Symbol::Symbol(const Truncation& t, int K_x, double order)
    : trunc_(t), lattice_(t.d, t.L), K_x_(K_x), order_(order) {
  t.validate();
  if (K_x < 0) throw std::invalid_argument("symbol: K_x must be >= 0");
  w_.assign(lattice_.size() * static_cast<std::size_t>(2 * K_x + 1) * t.modes(), 0.0);
}

std::size_t Symbol::offset(std::size_t l, int k, int j) const {
  if (l >= lattice_.size() || std::abs(k) > K_x_ || std::abs(j) > trunc_.J)
    throw std::out_of_range("symbol: index outside truncation");
  return (l * static_cast<std::size_t>(2 * K_x_ + 1) + static_cast<std::size_t>(k + K_x_)) *
             trunc_.modes() +
         static_cast<std::size_t>(j + trunc_.J);
}

cplx& Symbol::at(std::size_t l, int k, int j) { return w_[offset(l, k, j)]; }
cplx Symbol::at(std::size_t l, int k, int j) const { return w_[offset(l, k, j)]; }

Symbol& Symbol::operator*=(cplx c) {
  for (auto& v : w_) v *= c;
  return *this;
}

bool Symbol::operator==(const Symbol& o) const {
  return trunc_ == o.trunc_ && K_x_ == o.K_x_ && order_ == o.order_ && w_ == o.w_;
}

StateVector op_apply(const Symbol& a, const StateVector& u, const std::vector<double>& theta) {
  const Truncation& t = a.truncation();
  if (u.J() != t.J) throw std::invalid_argument("op_apply: truncation mismatch");
  if (static_cast<int>(theta.size()) != t.d)
    throw std::invalid_argument("op_apply: angle dimension mismatch");
  const AngleLattice& lat = a.lattice();
  std::vector<cplx> phase(lat.size());
  for (std::size_t l = 0; l < lat.size(); ++l) {
    double ph = 0.0;
    for (int c = 0; c < t.d; ++c) ph += lat.ell(l)[c] * theta[c];
    phase[l] = std::polar(1.0, ph);
  }
  StateVector out(t.J);
  for (int j = -t.J; j <= t.J; ++j) {
    const cplx uj = u(j);
    if (uj == cplx(0.0)) continue;
    for (int k = -a.K_x(); k <= a.K_x(); ++k) {
      const int n = j + k;
      if (std::abs(n) > t.J) continue;
      cplx s = 0.0;
      for (std::size_t l = 0; l < lat.size(); ++l) s += a.at(l, k, j) * phase[l];
      out(n) += s * uj;
    }
  }
  return out;
}

double slice_seminorm(const Symbol& a, std::size_t l, int rho) {
  const int J = a.truncation().J, Kx = a.K_x();
  if (rho < 0) throw std::invalid_argument("seminorm: rho must be >= 0");
  if (rho > 2 * J) throw std::invalid_argument("seminorm: rho exceeds the j-range for differences");
  const int P = 2 * (2 * Kx + 1);
  const int nk = 2 * Kx + 1;
  // x-grid phases e^{ik x_p}
  std::vector<cplx> ex(static_cast<std::size_t>(P) * nk);
  for (int p = 0; p < P; ++p)
    for (int k = -Kx; k <= Kx; ++k)
      ex[p * nk + (k + Kx)] = std::polar(1.0, 2.0 * std::numbers::pi * p * k / P);
  double total = 0.0;
  // diff[k][j] holds Δ^β w_{ℓ,k}(j) for j in [-J, J-β]
  std::vector<std::vector<cplx>> diff(nk, std::vector<cplx>(2 * J + 1));
  for (int k = -Kx; k <= Kx; ++k)
    for (int j = -J; j <= J; ++j) diff[k + Kx][j + J] = a.at(l, k, j);
  for (int beta = 0; beta <= rho; ++beta) {
    if (beta > 0)
      for (auto& row : diff)
        for (int idx = 0; idx + beta <= 2 * J; ++idx) row[idx] = row[idx + 1] - row[idx];
    const int jmax = J - beta;
    for (int alpha = 0; alpha + beta <= rho; ++alpha) {
      double sup = 0.0;
      for (int j = -J; j <= jmax; ++j) {
        const double w = std::pow(bracket(j), -a.order() + beta);
        for (int p = 0; p < P; ++p) {
          cplx v = 0.0;
          for (int k = -Kx; k <= Kx; ++k) {
            const cplx dk = alpha == 0 ? cplx(1.0) : std::pow(cplx(0.0, k), alpha);
            v += dk * diff[k + Kx][j + J] * ex[p * nk + (k + Kx)];
          }
          sup = std::max(sup, w * std::abs(v));
        }
      }
      total += sup;
    }
  }
  return total;
}

SeminormReport seminorm(const Symbol& a, int rho, double s, const std::vector<Symbol>& family,
                        const std::vector<FrequencyPoint>& omegas) {
  if (family.size() != omegas.size())
    throw std::invalid_argument("seminorm: family and frequency samples differ in size");
  SeminormReport rep;
  const AngleLattice& lat = a.lattice();
  rep.values.assign(rho + 1, 0.0);
  double wsum = 0.0;
  for (std::size_t l = 0; l < lat.size(); ++l) {
    for (int r = 0; r <= rho; ++r) {
      const double v = slice_seminorm(a, l, r);
      rep.values[r] += v;
      if (r == rho) {
        const double br = std::pow(bracket(lat.sup_norm(l)), s);
        wsum += br * br * v * v;
      }
    }
  }
  rep.weighted = std::sqrt(wsum);
  for (std::size_t p = 0; p < family.size(); ++p)
    for (std::size_t q = p + 1; q < family.size(); ++q) {
      double dist = 0.0;
      for (std::size_t c = 0; c < omegas[p].omega.size(); ++c)
        dist = std::max(dist, std::abs(omegas[p].omega[c] - omegas[q].omega[c]));
      if (dist == 0.0) continue;
      Symbol diffsym = family[p];
      if (!(diffsym.truncation() == family[q].truncation()) || diffsym.K_x() != family[q].K_x())
        throw std::invalid_argument("seminorm: family members differ in shape");
      for (std::size_t l = 0; l < lat.size(); ++l)
        for (int k = -a.K_x(); k <= a.K_x(); ++k)
          for (int j = -a.truncation().J; j <= a.truncation().J; ++j)
            diffsym.at(l, k, j) -= family[q].at(l, k, j);
      double v = 0.0;
      for (std::size_t l = 0; l < lat.size(); ++l) v += slice_seminorm(diffsym, l, rho);
      rep.lipschitz = std::max(rep.lipschitz, v / dist);
    }
  return rep;
}

Symbol symbol_compose(const Symbol& a, const Symbol& b) {
  if (!(a.truncation() == b.truncation()))
    throw std::invalid_argument("symbol_compose: truncation mismatch");
  const Truncation& t = a.truncation();
  const AngleLattice& lat = a.lattice();
  Symbol out(t, a.K_x() + b.K_x(), a.order() + b.order());
  std::vector<int> e(t.d);
  for (std::size_t l1 = 0; l1 < lat.size(); ++l1)
    for (std::size_t l2 = 0; l2 < lat.size(); ++l2) {
      for (int c = 0; c < t.d; ++c) e[c] = lat.ell(l1)[c] + lat.ell(l2)[c];
      const std::size_t l = lat.index_of(e.data());
      if (l >= lat.size()) continue;
      for (int k2 = -b.K_x(); k2 <= b.K_x(); ++k2)
        for (int xi = -t.J; xi <= t.J; ++xi) {
          const cplx bv = b.at(l2, k2, xi);
          if (bv == cplx(0.0)) continue;
          const int shifted = xi + k2;
          if (std::abs(shifted) > t.J) continue;
          for (int k1 = -a.K_x(); k1 <= a.K_x(); ++k1)
            out.at(l, k1 + k2, xi) += a.at(l1, k1, shifted) * bv;
        }
    }
  return out;
}

BlockOperator matrix_of(const Symbol& a) {
  const Truncation& t = a.truncation();
  BlockOperator A(t);
  for (std::size_t l = 0; l < a.lattice().size(); ++l) {
    Mat s = Mat::Zero(t.modes(), t.modes());
    bool any = false;
    for (int m = -t.J; m <= t.J; ++m)
      for (int k = -a.K_x(); k <= a.K_x(); ++k) {
        const int n = m + k;
        if (std::abs(n) > t.J) continue;
        const cplx v = a.at(l, k, m);
        if (v == cplx(0.0)) continue;
        s(t.row(n), t.row(m)) = v;
        any = true;
      }
    if (any) A.set_slice(l, std::move(s));
  }
  return A;
}

Symbol symbol_of(const BlockOperator& A, int K_x, double order) {
  const Truncation& t = A.truncation();
  Symbol a(t, K_x, order);
  for (std::size_t l = 0; l < A.slice_count(); ++l) {
    if (!A.has_slice(l)) continue;
    for (int m = -t.J; m <= t.J; ++m)
      for (int k = -K_x; k <= K_x; ++k) {
        const int n = m + k;
        if (std::abs(n) > t.J) continue;
        a.at(l, k, m) = A.slice(l)(t.row(n), t.row(m));
      }
  }
  return a;
}

C2Report check_condition_C2(const Symbol& a) {
  const int J = a.truncation().J;
  const std::size_t z = a.lattice().zero();
  C2Report rep;
  double sum = 0.0;
  int count = 0;
  for (int j = -J; j <= J; ++j) {
    if (2 * std::abs(j) < J) continue;
    sum += a.at(z, 0, j).real() / std::sqrt(bracket(j));
    ++count;
  }
  rep.a_coeff = sum / count;
  double ss = 0.0;
  for (int j = -J; j <= J; ++j) {
    const double m = a.at(z, 0, j).real();
    rep.b_bound = std::max(rep.b_bound, std::abs(m - rep.a_coeff * std::sqrt(bracket(j))));
    if (2 * std::abs(j) >= J) {
      const double r = m / std::sqrt(bracket(j)) - rep.a_coeff;
      ss += r * r;
    }
  }
  rep.residual = std::sqrt(ss / count);
  return rep;
}

}  // namespace relkam
