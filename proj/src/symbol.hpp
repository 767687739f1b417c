#pragma once

#include <vector>

#include "block_operator.hpp"
#include "spectral.hpp"

namespace relkam {

// a(θ, x, j) = Σ_{ℓ,k} w_{ℓ,k}(j) e^{iℓ·θ} e^{ikx}, k in [-K_x, K_x], j in [-J, J].
class Symbol {
 public:
  Symbol(const Truncation& t, int K_x, double order);

  const Truncation& truncation() const { return trunc_; }
  const AngleLattice& lattice() const { return lattice_; }
  int K_x() const { return K_x_; }
  double order() const { return order_; }
  void set_order(double m) { order_ = m; }

  cplx& at(std::size_t l, int k, int j);
  cplx at(std::size_t l, int k, int j) const;
  const std::vector<cplx>& data() const { return w_; }

  Symbol& operator*=(cplx c);
  bool operator==(const Symbol& o) const;

 private:
  std::size_t offset(std::size_t l, int k, int j) const;

  Truncation trunc_;
  AngleLattice lattice_;
  int K_x_;
  double order_;
  std::vector<cplx> w_;
};

struct SeminormReport {
  std::vector<double> values;  // χ^m_ρ for ρ = 0..rho
  double weighted = 0.0;       // (Σ_ℓ ⟨ℓ⟩^{2s} χ^m_ρ(â(ℓ))²)^{1/2} at the top ρ
  double lipschitz = 0.0;      // max finite-difference quotient over the sample family
};

// Output mode n gets Σ_j Σ_ℓ w_{ℓ,n−j}(j) e^{iℓ·θ} û(j); modes beyond J dropped.
StateVector op_apply(const Symbol& a, const StateVector& u, const std::vector<double>& theta);

// Seminorm of a symbol of declared order; values[ρ] sums the per-ℓ slice
// seminorms (equal to the plain seminorm for θ-independent symbols). The
// family/omegas pair, when non-empty, feeds the Lipschitz estimate.
SeminormReport seminorm(const Symbol& a, int rho, double s,
                        const std::vector<Symbol>& family = {},
                        const std::vector<FrequencyPoint>& omegas = {});
// χ^m_ρ of the single θ-slice l.
double slice_seminorm(const Symbol& a, std::size_t l, int rho);

Symbol symbol_compose(const Symbol& a, const Symbol& b);

BlockOperator matrix_of(const Symbol& a);
// Inverse of matrix_of on entries representable with |n − m| ≤ K_x.
Symbol symbol_of(const BlockOperator& A, int K_x, double order);

struct C2Report {
  double a_coeff = 0.0;
  double b_bound = 0.0;
  double residual = 0.0;
};
C2Report check_condition_C2(const Symbol& a);

}  // namespace relkam
