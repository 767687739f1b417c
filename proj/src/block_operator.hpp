#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "spectral.hpp"

namespace relkam {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

// Rows of the block E_i inside a (2J+1)-mode matrix: (+i, -i), or just 0.
struct BlockRows {
  int r[2];
  int size;
};
inline BlockRows block_rows(int J, int i) {
  if (i == 0) return {{J, J}, 1};
  return {{J + i, J - i}, 2};
}

// θ-Fourier block operator. Stored as one dense (2J+1)x(2J+1) mode matrix per
// present ℓ; the block (ℓ, i, j) is the restriction to rows E_i, columns E_j.
// Missing slices are zero.
class BlockOperator {
 public:
  BlockOperator();
  explicit BlockOperator(const Truncation& t);

  static BlockOperator identity(const Truncation& t);
  // Time-independent Fourier multiplier n ↦ f(n).
  static BlockOperator multiplier(const Truncation& t, const std::function<double(int)>& f);

  const Truncation& truncation() const { return trunc_; }
  const AngleLattice& lattice() const { return *lattice_; }
  std::shared_ptr<const AngleLattice> lattice_ptr() const { return lattice_; }
  std::size_t slice_count() const { return slices_.size(); }
  int modes() const { return trunc_.modes(); }

  bool has_slice(std::size_t l) const { return slices_[l].size() != 0; }
  std::size_t present_slices() const;
  const Mat& slice(std::size_t l) const { return slices_[l]; }
  Mat& slice_mut(std::size_t l);
  void set_slice(std::size_t l, Mat m);
  void drop_slice(std::size_t l) { slices_[l].resize(0, 0); }
  // Drops slices whose entries are all exactly zero.
  void prune();

  cplx entry(std::size_t l, int n, int m) const;
  void set_entry(std::size_t l, int n, int m, cplx value);
  Mat block(std::size_t l, int i, int j) const;
  void set_block(std::size_t l, int i, int j, const Mat& b);

  BlockOperator& operator+=(const BlockOperator& o);
  BlockOperator& operator-=(const BlockOperator& o);
  BlockOperator& operator*=(cplx c);
  BlockOperator& add_scaled(cplx c, const BlockOperator& o);

  BlockOperator adjoint() const;
  double max_abs() const;
  bool is_zero() const;
  bool identical(const BlockOperator& o) const;

  // A(θ) = Σ_ℓ Â(ℓ) e^{iℓ·θ} on modes [-J, J].
  Mat evaluate(const std::vector<double>& theta) const;

 private:
  void require_same(const BlockOperator& o) const;

  Truncation trunc_;
  std::shared_ptr<const AngleLattice> lattice_;
  std::vector<Mat> slices_;
};

BlockOperator operator+(BlockOperator a, const BlockOperator& b);
BlockOperator operator-(BlockOperator a, const BlockOperator& b);
BlockOperator operator*(cplx c, BlockOperator a);

struct NormSpec {
  double s = 2.0;
  double m_left = 0.0;
  double m_right = 0.0;
};

// Largest singular value of a block with at most 2 rows and 2 columns.
double block_spectral_norm(const Mat& b);
double decay_norm(const BlockOperator& a, const NormSpec& spec);
// sup_k ‖A_k‖ + max_{k≠k'} ‖A_k − A_k'‖ / |ω_k − ω_k'| (sup-norm distance of the
// frequency vectors, including v when present).
double lipschitz_decay_norm(const std::vector<BlockOperator>& family,
                            const std::vector<FrequencyPoint>& omegas, const NormSpec& spec);

struct CutoffParts {
  BlockOperator head;
  BlockOperator tail;
};
// head keeps |ℓ| < N and |i − j| < N.
CutoffParts cutoff(const BlockOperator& a, int N);

BlockOperator block_product(const BlockOperator& a, const BlockOperator& b);
BlockOperator commutator(const BlockOperator& a, const BlockOperator& b);

// Multiplies slice ℓ by i(ω·ℓ).
BlockOperator omega_derivative(const BlockOperator& a, const FrequencyPoint& omega);

BlockOperator hermitian_symmetrize(const BlockOperator& a);
// max |A − A*| entrywise
double hermiticity_defect(const BlockOperator& a);

// Keeps the ℓ = 0 slice, blocks with i = j only.
BlockOperator diagonal_average(const BlockOperator& a);
// A − diagonal_average(A)
BlockOperator off_block_diagonal(const BlockOperator& a);

struct LieSeriesResult {
  BlockOperator value;
  double remainder = 0.0;  // monitored norm of the last retained term
  int terms = 0;           // highest power actually computed
  std::vector<double> term_norms;
};

struct LieOptions {
  int order = 12;
  NormSpec monitor{2.0, 0.0, 0.0};
  double rel_stop = 1e-18;
};

// Σ_{p=0}^{order} coeff[p] ad^p_{iG}(H), ad_{iG}(X) = i(GX − XG).
// Throws DivergenceError if the monitored terms stop decreasing after order/2
// or the last ratio is ≥ 1/2.
LieSeriesResult lie_series(const BlockOperator& G, const BlockOperator& H,
                           const std::vector<double>& coeff, const LieOptions& opt);
// e^{iG} H e^{-iG}
LieSeriesResult exp_conjugate(const BlockOperator& G, const BlockOperator& H,
                              const LieOptions& opt = {});
std::vector<double> exp_coefficients(int order, int skip = 0);       // 1/p!
std::vector<double> integral_coefficients(int order, int skip = 0);  // 1/(p+1)!

}  // namespace relkam
