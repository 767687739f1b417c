#pragma once

#include <vector>

#include "block_operator.hpp"
#include "symbol.hpp"

namespace relkam {

enum class TorusMode { standard, beta_torus };

struct RegParams {
  int M = 21;
  int lie_order = 12;
  double alpha0 = 1e-3;
  TorusMode mode = TorusMode::standard;
  double c2_tolerance = 1.0;  // largest accepted b_bound in check_condition_C2

  void validate() const;
};

struct DecayEntry {
  int step = 0;
  double norm_s0 = 0.0;     // ‖W^i‖ in the plain s0 norm
  double weighted = 0.0;    // rows weighted by ⟨i⟩^{i/2 − 1/2}
  double hermiticity = 0.0; // max(defect of Z, defect of W)
  double lie_remainder = 0.0;
};

struct RegularizationState {
  int step = 0;
  BlockOperator Z;
  BlockOperator W;
  std::vector<BlockOperator> B_log;
  double epsilon = 0.0;
  FrequencyPoint omega;
  double m_mass = 0.0;
  TorusMode mode = TorusMode::standard;
  std::vector<DecayEntry> decay_report;
};

// K (or vK) + Q as a time-independent multiplier.
BlockOperator unperturbed_operator(const Truncation& t, double m_mass, TorusMode mode,
                                   const FrequencyPoint& omega);

// Keeps the ℓ = 0 entries with |n| = |m|.
BlockOperator kappa_theta_average(const BlockOperator& W);

struct Omega0Check {
  bool ok = true;
  double min_margin = 0.0;  // min over the box of |divisor| · (1 + |ℓ|^{d+2}) / α
  std::vector<int> worst_ell;
  int worst_m = 0;
};
// Standard mode: |ω·ℓ + m| ≥ α/(1+|ℓ|^{d+2}). With v set: |ω·ℓ + v m| ≥ α/(|ℓ|+|m|)^{d+1}.
Omega0Check check_omega0(const FrequencyPoint& omega, double alpha0, int ell_max, int m_max);

// Solves ω·∂θB + i[K,B] = W − ⟨W⟩ entrywise.
BlockOperator solve_homological_reg(const BlockOperator& W, const FrequencyPoint& omega,
                                    double alpha0, TorusMode mode = TorusMode::standard);
// ω·∂θB + i[K,B] − (W − ⟨W⟩)
BlockOperator homological_reg_residual(const BlockOperator& B, const BlockOperator& W,
                                       const FrequencyPoint& omega,
                                       TorusMode mode = TorusMode::standard);

RegularizationState initial_regularization_state(const BlockOperator& W0,
                                                 const FrequencyPoint& omega, double epsilon,
                                                 double m_mass, TorusMode mode);
RegularizationState regularization_step(const RegularizationState& state, const RegParams& params);
RegularizationState run_cascade(const BlockOperator& W0, const RegParams& params,
                                const FrequencyPoint& omega, double epsilon, double m_mass);
// Checks the symbol (order 1/2, condition C2 in standard mode), symmetrizes its
// matrix and runs the cascade.
RegularizationState run_cascade(const Symbol& W0, const RegParams& params,
                                const FrequencyPoint& omega, double epsilon, double m_mass);

// True when every nonzero entry sits at ℓ = 0 with |n| = |m|, i.e. [A, K] = 0.
bool commutes_with_K(const BlockOperator& A);

// K + Q + εZ + εW
BlockOperator regularized_hamiltonian(const RegularizationState& s);

struct EigenRow {
  int j = 0;
  int size = 1;
  double lambda[2] = {0.0, 0.0};
  double r[2] = {0.0, 0.0};
};
struct EigenAsymptotics {
  std::vector<EigenRow> rows;
  double sup_r = 0.0;       // max |r| over j ≤ interior_J
  double C_r = 0.0;         // sup_r / ε (0 when ε = 0)
  double sup_r_edge = 0.0;  // max |r| over the boundary layer j > interior_J
  int interior_J = 0;
  double c0 = 0.0;        // min over i ≠ j of |λ_i − λ_j| / |i − j|
};
// Rows within `boundary` of the truncation edge miss couplings past J; they are
// reported separately in sup_r_edge.
EigenAsymptotics eigenvalue_asymptotics(const RegularizationState& s, double a_coeff,
                                        int boundary = 0);

}  // namespace relkam
