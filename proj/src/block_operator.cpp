#include "block_operator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

#include "angle_grid.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace relkam {
namespace {

std::shared_ptr<const AngleLattice> shared_lattice(int d, int L) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const AngleLattice>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{d, L}];
  if (!slot) slot = std::make_shared<const AngleLattice>(d, L);
  return slot;
}

// Scaled sum of squares (LAPACK nrm2 style) so large weights cannot overflow.
struct SquareAccumulator {
  double scale = 0.0;
  double ssq = 1.0;
  void add(double x) {
    if (x == 0.0) return;
    const double ax = std::abs(x);
    if (scale < ax) {
      ssq = 1.0 + ssq * (scale / ax) * (scale / ax);
      scale = ax;
    } else {
      ssq += (ax / scale) * (ax / scale);
    }
  }
  double value() const { return scale * std::sqrt(ssq); }
};

double spectral_norm_2x2(cplx a, cplx b, cplx c, cplx d) {
  const double mx = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
  if (mx == 0.0) return 0.0;
  a /= mx;
  b /= mx;
  c /= mx;
  d /= mx;
  const double f = std::norm(a) + std::norm(b) + std::norm(c) + std::norm(d);
  const double det = std::abs(a * d - b * c);
  const double disc = std::max(0.0, f * f - 4.0 * det * det);
  return mx * std::sqrt(0.5 * (f + std::sqrt(disc)));
}

double block_norm_at(const Mat& s, int J, int i, int j) {
  const BlockRows ri = block_rows(J, i), rj = block_rows(J, j);
  if (ri.size == 1 && rj.size == 1) return std::abs(s(ri.r[0], rj.r[0]));
  if (ri.size == 1)
    return std::hypot(std::abs(s(ri.r[0], rj.r[0])), std::abs(s(ri.r[0], rj.r[1])));
  if (rj.size == 1)
    return std::hypot(std::abs(s(ri.r[0], rj.r[0])), std::abs(s(ri.r[1], rj.r[0])));
  return spectral_norm_2x2(s(ri.r[0], rj.r[0]), s(ri.r[0], rj.r[1]), s(ri.r[1], rj.r[0]),
                           s(ri.r[1], rj.r[1]));
}

std::vector<std::size_t> present_list(const BlockOperator& a) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < a.slice_count(); ++l)
    if (a.has_slice(l)) out.push_back(l);
  return out;
}

// Index of ℓ1 + ℓ2, or lattice size when it leaves the box.
std::size_t sum_index(const AngleLattice& lat, std::size_t l1, std::size_t l2) {
  const int d = lat.d();
  int buf[16];
  std::vector<int> big;
  int* e = buf;
  if (d > 16) {
    big.resize(d);
    e = big.data();
  }
  const int *a = lat.ell(l1), *b = lat.ell(l2);
  for (int c = 0; c < d; ++c) e[c] = a[c] + b[c];
  return lat.index_of(e);
}

std::size_t pair_count(const BlockOperator& a, const BlockOperator& b) {
  const auto pa = present_list(a), pb = present_list(b);
  std::size_t n = 0;
  for (std::size_t x : pa)
    for (std::size_t y : pb)
      if (sum_index(a.lattice(), x, y) < a.slice_count()) ++n;
  return n;
}

// Estimated cost of the grid path in units of one slice GEMM.
double grid_cost(const BlockOperator& a, const BlockOperator& b, int gemms_per_point) {
  const AngleGrid& g = angle_grid(a.truncation().d, a.truncation().L);
  const double transforms =
      static_cast<double>(a.present_slices() + b.present_slices() + a.slice_count()) *
      static_cast<double>(g.points) / static_cast<double>(a.modes());
  return static_cast<double>(g.points) * gemms_per_point + transforms;
}

// out(ℓ) = Σ_{ℓ1+ℓ2=ℓ} f(ℓ1, ℓ2); f accumulates into its third argument.
template <class F>
BlockOperator convolve_direct(const BlockOperator& a, const BlockOperator& b, F&& f) {
  const AngleLattice& lat = a.lattice();
  const auto pa = present_list(a), pb = present_list(b);
  const int n = a.modes();
  std::vector<Mat> out(a.slice_count());
  parallel_for(a.slice_count(), [&](std::size_t l) {
    Mat acc;
    const int* target = lat.ell(l);
    std::vector<int> e(lat.d());
    for (std::size_t x : pa) {
      const int* lx = lat.ell(x);
      for (int c = 0; c < lat.d(); ++c) e[c] = target[c] - lx[c];
      const std::size_t y = lat.index_of(e.data());
      if (y >= lat.size() || !b.has_slice(y)) continue;
      if (acc.size() == 0) acc = Mat::Zero(n, n);
      f(x, y, acc);
    }
    out[l] = std::move(acc);
  });
  BlockOperator res(a.truncation());
  for (std::size_t l = 0; l < out.size(); ++l)
    if (out[l].size() != 0) res.set_slice(l, std::move(out[l]));
  return res;
}

}  // namespace

BlockOperator::BlockOperator() : BlockOperator(Truncation{}) {}

BlockOperator::BlockOperator(const Truncation& t) : trunc_(t) {
  t.validate();
  lattice_ = shared_lattice(t.d, t.L);
  slices_.resize(lattice_->size());
}

BlockOperator BlockOperator::identity(const Truncation& t) {
  return multiplier(t, [](int) { return 1.0; });
}

BlockOperator BlockOperator::multiplier(const Truncation& t, const std::function<double(int)>& f) {
  BlockOperator op(t);
  Mat m = Mat::Zero(t.modes(), t.modes());
  for (int n = -t.J; n <= t.J; ++n) m(t.row(n), t.row(n)) = f(n);
  op.set_slice(op.lattice().zero(), std::move(m));
  return op;
}

std::size_t BlockOperator::present_slices() const {
  std::size_t n = 0;
  for (const auto& s : slices_)
    if (s.size() != 0) ++n;
  return n;
}

Mat& BlockOperator::slice_mut(std::size_t l) {
  if (slices_[l].size() == 0) slices_[l] = Mat::Zero(modes(), modes());
  return slices_[l];
}

void BlockOperator::set_slice(std::size_t l, Mat m) {
  if (m.size() != 0 && (m.rows() != modes() || m.cols() != modes()))
    throw std::invalid_argument("set_slice: slice shape does not match truncation");
  slices_.at(l) = std::move(m);
}

void BlockOperator::prune() {
  for (auto& s : slices_)
    if (s.size() != 0 && (s.array() == cplx(0.0)).all()) s.resize(0, 0);
}

cplx BlockOperator::entry(std::size_t l, int n, int m) const {
  if (std::abs(n) > trunc_.J || std::abs(m) > trunc_.J)
    throw std::out_of_range("entry: mode outside truncation");
  if (!has_slice(l)) return 0.0;
  return slices_[l](trunc_.row(n), trunc_.row(m));
}

void BlockOperator::set_entry(std::size_t l, int n, int m, cplx value) {
  if (std::abs(n) > trunc_.J || std::abs(m) > trunc_.J)
    throw std::out_of_range("set_entry: mode outside truncation");
  slice_mut(l)(trunc_.row(n), trunc_.row(m)) = value;
}

Mat BlockOperator::block(std::size_t l, int i, int j) const {
  if (i < 0 || j < 0 || i > trunc_.J || j > trunc_.J)
    throw std::out_of_range("block: index outside truncation");
  const BlockRows ri = block_rows(trunc_.J, i), rj = block_rows(trunc_.J, j);
  Mat b = Mat::Zero(ri.size, rj.size);
  if (!has_slice(l)) return b;
  for (int a = 0; a < ri.size; ++a)
    for (int c = 0; c < rj.size; ++c) b(a, c) = slices_[l](ri.r[a], rj.r[c]);
  return b;
}

void BlockOperator::set_block(std::size_t l, int i, int j, const Mat& b) {
  if (i < 0 || j < 0 || i > trunc_.J || j > trunc_.J)
    throw std::out_of_range("set_block: index outside truncation");
  const BlockRows ri = block_rows(trunc_.J, i), rj = block_rows(trunc_.J, j);
  if (b.rows() != ri.size || b.cols() != rj.size)
    throw std::invalid_argument("set_block: block shape does not match E_i x E_j");
  Mat& s = slice_mut(l);
  for (int a = 0; a < ri.size; ++a)
    for (int c = 0; c < rj.size; ++c) s(ri.r[a], rj.r[c]) = b(a, c);
}

void BlockOperator::require_same(const BlockOperator& o) const {
  if (!(trunc_ == o.trunc_)) throw std::invalid_argument("block operator: truncation mismatch");
}

BlockOperator& BlockOperator::add_scaled(cplx c, const BlockOperator& o) {
  require_same(o);
  if (c == cplx(0.0)) return *this;
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    if (!o.has_slice(l)) continue;
    if (has_slice(l))
      slices_[l] += c * o.slices_[l];
    else
      slices_[l] = c * o.slices_[l];
  }
  return *this;
}

BlockOperator& BlockOperator::operator+=(const BlockOperator& o) { return add_scaled(1.0, o); }
BlockOperator& BlockOperator::operator-=(const BlockOperator& o) { return add_scaled(-1.0, o); }

BlockOperator& BlockOperator::operator*=(cplx c) {
  for (auto& s : slices_)
    if (s.size() != 0) s *= c;
  return *this;
}

BlockOperator operator+(BlockOperator a, const BlockOperator& b) { return a += b; }
BlockOperator operator-(BlockOperator a, const BlockOperator& b) { return a -= b; }
BlockOperator operator*(cplx c, BlockOperator a) { return a *= c; }

BlockOperator BlockOperator::adjoint() const {
  BlockOperator out(trunc_);
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    const std::size_t neg = lattice_->negate(l);
    if (has_slice(neg)) out.slices_[l] = slices_[neg].adjoint();
  }
  return out;
}

double BlockOperator::max_abs() const {
  double m = 0.0;
  for (const auto& s : slices_)
    if (s.size() != 0) {
      if (s.hasNaN()) return std::numeric_limits<double>::quiet_NaN();
      m = std::max(m, s.cwiseAbs().maxCoeff());
    }
  return m;
}

bool BlockOperator::is_zero() const { return max_abs() == 0.0; }

bool BlockOperator::identical(const BlockOperator& o) const {
  if (!(trunc_ == o.trunc_)) return false;
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    const bool a = has_slice(l), b = o.has_slice(l);
    if (a && b) {
      if (!(slices_[l].array() == o.slices_[l].array()).all()) return false;
    } else if (a) {
      if (!(slices_[l].array() == cplx(0.0)).all()) return false;
    } else if (b) {
      if (!(o.slices_[l].array() == cplx(0.0)).all()) return false;
    }
  }
  return true;
}

Mat BlockOperator::evaluate(const std::vector<double>& theta) const {
  if (static_cast<int>(theta.size()) != trunc_.d)
    throw std::invalid_argument("evaluate: angle dimension mismatch");
  Mat out = Mat::Zero(modes(), modes());
  for (std::size_t l = 0; l < slices_.size(); ++l) {
    if (!has_slice(l)) continue;
    double phase = 0.0;
    const int* e = lattice_->ell(l);
    for (int c = 0; c < trunc_.d; ++c) phase += e[c] * theta[c];
    out += std::polar(1.0, phase) * slices_[l];
  }
  return out;
}

double block_spectral_norm(const Mat& b) {
  if (b.rows() > 2 || b.cols() > 2 || b.size() == 0)
    throw std::invalid_argument("block_spectral_norm: expected a block of at most 2x2");
  if (b.rows() == 1 && b.cols() == 1) return std::abs(b(0, 0));
  if (b.rows() == 1) return std::hypot(std::abs(b(0, 0)), std::abs(b(0, 1)));
  if (b.cols() == 1) return std::hypot(std::abs(b(0, 0)), std::abs(b(1, 0)));
  return spectral_norm_2x2(b(0, 0), b(0, 1), b(1, 0), b(1, 1));
}

double decay_norm(const BlockOperator& a, const NormSpec& spec) {
  const int J = a.truncation().J;
  const AngleLattice& lat = a.lattice();
  std::vector<double> wr(J + 1), wl(J + 1);
  for (int i = 0; i <= J; ++i) {
    wr[i] = std::pow(bracket(i), spec.m_right);
    wl[i] = std::pow(bracket(i), -spec.m_left);
  }
  const auto present = present_list(a);
  std::vector<std::vector<double>> hsup(present.size());
  parallel_for(present.size(), [&](std::size_t k) {
    const Mat& s = a.slice(present[k]);
    std::vector<double> sup(J + 1, 0.0);
    for (int i = 0; i <= J; ++i)
      for (int j = 0; j <= J; ++j) {
        const double v = wr[i] * block_norm_at(s, J, i, j) * wl[j];
        const int h = std::abs(i - j);
        if (v > sup[h] || std::isnan(v)) sup[h] = v;
      }
    hsup[k] = std::move(sup);
  });
  SquareAccumulator acc;
  for (std::size_t k = 0; k < present.size(); ++k) {
    const int lsup = lat.sup_norm(present[k]);
    for (int h = 0; h <= J; ++h) {
      if (std::isnan(hsup[k][h])) return hsup[k][h];
      if (hsup[k][h] == 0.0) continue;
      const double w = std::pow(static_cast<double>(std::max({lsup, h, 1})), spec.s);
      acc.add(w * hsup[k][h]);
    }
  }
  return acc.value();
}

double lipschitz_decay_norm(const std::vector<BlockOperator>& family,
                            const std::vector<FrequencyPoint>& omegas, const NormSpec& spec) {
  if (family.size() != omegas.size() || family.empty())
    throw std::invalid_argument("lipschitz_decay_norm: family and samples must match");
  double sup = 0.0, lip = 0.0;
  for (const auto& op : family) sup = std::max(sup, decay_norm(op, spec));
  for (std::size_t a = 0; a < family.size(); ++a)
    for (std::size_t b = a + 1; b < family.size(); ++b) {
      double dist = 0.0;
      for (std::size_t c = 0; c < omegas[a].omega.size(); ++c)
        dist = std::max(dist, std::abs(omegas[a].omega[c] - omegas[b].omega[c]));
      if (omegas[a].v && omegas[b].v) dist = std::max(dist, std::abs(*omegas[a].v - *omegas[b].v));
      if (dist == 0.0) continue;
      lip = std::max(lip, decay_norm(family[a] - family[b], spec) / dist);
    }
  return sup + lip;
}

CutoffParts cutoff(const BlockOperator& a, int N) {
  if (N < 1) throw std::invalid_argument("cutoff: N must be >= 1");
  const int J = a.truncation().J;
  CutoffParts parts{BlockOperator(a.truncation()), BlockOperator(a.truncation())};
  for (std::size_t l = 0; l < a.slice_count(); ++l) {
    if (!a.has_slice(l)) continue;
    if (a.lattice().sup_norm(l) >= N) {
      parts.tail.set_slice(l, a.slice(l));
      continue;
    }
    Mat head = a.slice(l), tail = Mat::Zero(a.modes(), a.modes());
    for (int n = -J; n <= J; ++n)
      for (int m = -J; m <= J; ++m)
        if (std::abs(std::abs(n) - std::abs(m)) >= N) {
          tail(n + J, m + J) = head(n + J, m + J);
          head(n + J, m + J) = 0.0;
        }
    parts.head.set_slice(l, std::move(head));
    parts.tail.set_slice(l, std::move(tail));
  }
  parts.head.prune();
  parts.tail.prune();
  return parts;
}

BlockOperator block_product(const BlockOperator& a, const BlockOperator& b) {
  if (!(a.truncation() == b.truncation()))
    throw std::invalid_argument("block_product: truncation mismatch");
  if (static_cast<double>(pair_count(a, b)) <= grid_cost(a, b, 1)) {
    return convolve_direct(a, b, [&](std::size_t x, std::size_t y, Mat& acc) {
      acc.noalias() += a.slice(x) * b.slice(y);
    });
  }
  const AngleGrid& g = angle_grid(a.truncation().d, a.truncation().L);
  auto va = to_grid(a, g);
  const auto vb = to_grid(b, g);
  parallel_for(g.points, [&](std::size_t p) { va[p] = (va[p] * vb[p]).eval(); });
  return from_grid(va, a.truncation(), g);
}

BlockOperator commutator(const BlockOperator& a, const BlockOperator& b) {
  if (!(a.truncation() == b.truncation()))
    throw std::invalid_argument("commutator: truncation mismatch");
  if (static_cast<double>(pair_count(a, b) + pair_count(b, a)) <= grid_cost(a, b, 2)) {
    auto prod = [](const BlockOperator& x, const BlockOperator& y) {
      return convolve_direct(x, y, [&](std::size_t p, std::size_t q, Mat& acc) {
        acc.noalias() += x.slice(p) * y.slice(q);
      });
    };
    return prod(a, b) - prod(b, a);
  }
  const AngleGrid& g = angle_grid(a.truncation().d, a.truncation().L);
  auto va = to_grid(a, g);
  const auto vb = to_grid(b, g);
  parallel_for(g.points, [&](std::size_t p) {
    Mat c = va[p] * vb[p];
    c.noalias() -= vb[p] * va[p];
    va[p] = std::move(c);
  });
  return from_grid(va, a.truncation(), g);
}

BlockOperator omega_derivative(const BlockOperator& a, const FrequencyPoint& omega) {
  if (omega.d() != a.truncation().d)
    throw std::invalid_argument("omega_derivative: frequency dimension mismatch");
  BlockOperator out(a.truncation());
  for (std::size_t l = 0; l < a.slice_count(); ++l) {
    if (!a.has_slice(l)) continue;
    const double w = a.lattice().dot(omega.omega, l);
    if (w == 0.0) continue;
    out.set_slice(l, cplx(0.0, w) * a.slice(l));
  }
  return out;
}

BlockOperator hermitian_symmetrize(const BlockOperator& a) {
  BlockOperator out = a.adjoint();
  out += a;
  out *= 0.5;
  return out;
}

double hermiticity_defect(const BlockOperator& a) { return (a - a.adjoint()).max_abs(); }

BlockOperator diagonal_average(const BlockOperator& a) {
  BlockOperator out(a.truncation());
  const std::size_t z = a.lattice().zero();
  if (!a.has_slice(z)) return out;
  const int J = a.truncation().J;
  for (int i = 0; i <= J; ++i) out.set_block(z, i, i, a.block(z, i, i));
  return out;
}

BlockOperator off_block_diagonal(const BlockOperator& a) { return a - diagonal_average(a); }

std::vector<double> exp_coefficients(int order, int skip) {
  std::vector<double> c(order + 1, 0.0);
  double f = 1.0;
  for (int p = 0; p <= order; ++p) {
    if (p > 0) f /= p;
    if (p >= skip) c[p] = f;
  }
  return c;
}

std::vector<double> integral_coefficients(int order, int skip) {
  std::vector<double> c(order + 1, 0.0);
  double f = 1.0;
  for (int p = 0; p <= order; ++p) {
    f /= (p + 1);
    if (p >= skip) c[p] = f;
  }
  return c;
}

LieSeriesResult lie_series(const BlockOperator& G, const BlockOperator& H,
                           const std::vector<double>& coeff, const LieOptions& opt) {
  if (coeff.empty()) throw std::invalid_argument("lie_series: empty coefficient list");
  const int order = static_cast<int>(coeff.size()) - 1;
  LieSeriesResult res{BlockOperator(H.truncation()), 0.0, 0, {}};
  double ref = 0.0;
  if (coeff[0] != 0.0) {
    res.value.add_scaled(coeff[0], H);
    ref = std::abs(coeff[0]) * decay_norm(H, opt.monitor);
  }
  if (G.is_zero() || H.is_zero()) return res;

  BlockOperator term = H;
  double prev = -1.0;
  for (int p = 1; p <= order; ++p) {
    term = commutator(G, term);
    term *= cplx(0.0, 1.0);
    const double tn = decay_norm(term, opt.monitor);
    const double cn = std::abs(coeff[p]) * tn;
    if (!std::isfinite(tn)) throw DivergenceError("Lie series: non-finite term at power " + std::to_string(p));
    res.term_norms.push_back(cn);
    res.value.add_scaled(coeff[p], term);
    res.terms = p;
    res.remainder = cn;
    if (tn == 0.0) return res;
    if (coeff[p] != 0.0) {
      ref = std::max(ref, cn);
      if (cn <= opt.rel_stop * ref) return res;
      if (prev > 0.0 && 2 * p > order && cn > prev)
        throw DivergenceError("Lie series: terms grow after power " + std::to_string(p - 1));
      if (p == order && prev > 0.0 && cn >= 0.5 * prev)
        throw DivergenceError("Lie series: tail ratio >= 1/2 at order " + std::to_string(order));
      prev = cn;
    }
  }
  return res;
}

LieSeriesResult exp_conjugate(const BlockOperator& G, const BlockOperator& H,
                              const LieOptions& opt) {
  if (opt.order < 4) throw std::invalid_argument("exp_conjugate: order must be >= 4");
  return lie_series(G, H, exp_coefficients(opt.order), opt);
}

}  // namespace relkam
