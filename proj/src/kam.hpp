#pragma once

#include <optional>
#include <vector>

#include "block_operator.hpp"
#include "hermitian2.hpp"
#include "regularization.hpp"

namespace relkam {

struct KamParams {
  double tau = 2.5;
  double sigma = 1.5;
  double alpha = 1e-4;  // Diophantine constant
  double N0 = 8.0;
  int K_steps = 3;
  int lie_order = 12;
  double gate_constant = 0.0;  // C in C·N0^{2τ+2σ+2+a_decay}·‖P^0‖ ≤ 1/2; 0 disables

  void validate(int d) const;
  static double s0(int d) { return (d + 3) / 2.0; }
  double m_weight() const { return 2.0 * sigma + 2.0; }
  double a_decay() const { return 6.0 * tau + 6.0 * sigma + 7.0; }
  double beta() const { return a_decay() + 1.0; }
  // N_0..N_{count-1}; N_k = N0^{(3/2)^k} rounded, forced ≥ N_{k-1} + 1.
  std::vector<long> schedule(int count) const;
  NormSpec low_norm(int d) const { return {s0(d), -m_weight(), m_weight()}; }
  NormSpec high_norm(int d) const { return {s0(d) + beta(), -m_weight(), m_weight()}; }
};

struct NormRecord {
  int k = 0;
  long N = 0;          // scale N_k used by the step that starts from P^k
  double low = 0.0;
  double high = 0.0;
  double hermiticity = 0.0;
  double gap = 0.0;    // min |λ_i − λ_j| / |i − j| over i ≠ j
};

struct KamState {
  int k = 0;
  std::vector<Mat> Lambda;  // Λ_j, j = 0..J (1x1 at j = 0)
  BlockOperator P;
  std::vector<BlockOperator> G_log;
  std::vector<SmallEigen> eigen_table;
  FrequencyPoint omega;
  std::vector<NormRecord> norm_history;
};

struct ResonanceCertificate {
  bool ok = true;
  double min_margin = 0.0;  // |divisor| at the worst tuple
  double min_ratio = 0.0;   // |divisor| / threshold at the worst tuple
  std::vector<int> worst_ell;
  int worst_i = 0, worst_j = 0, worst_v = 0, worst_w = 0;
  long conditions_checked = 0;
};

KamState initial_kam_state(const RegularizationState& reg, const KamParams& params);
KamState kam_state_from(std::vector<Mat> Lambda, BlockOperator P, const FrequencyPoint& omega,
                        const KamParams& params);
void refresh_eigen_table(KamState& s);
double eigen_gap(const KamState& s);

double kam_threshold(const KamParams& p, long N, int i, int j);
ResonanceCertificate resonance_check(const KamState& s, const KamParams& params);
BlockOperator solve_homological_kam(const KamState& s, const KamParams& params);
// iω·ℓĜ + iΛ_iĜ − iĜΛ_j − (ΠP − [P])^ over the whole operator
BlockOperator homological_kam_residual(const KamState& s, const BlockOperator& G,
                                       const KamParams& params);
KamState kam_step(const KamState& s, const KamParams& params);

struct KamStepReport {
  int k = 0;
  long N = 0;
  double margin = 0.0;
  double margin_ratio = 0.0;
  double G_norm = 0.0;
  double G_ratio = 0.0;  // ‖G‖ / (N^{2τ+2σ+2} ‖P‖) in the s0 norm
  double lie_remainder = 0.0;
};

struct KamReport {
  bool completed = false;
  std::optional<ResonanceCertificate> failure;
  int failed_step = -1;
  double gate_value = 0.0;
  std::vector<KamStepReport> steps;
  std::optional<double> fitted_exponent;
};

struct KamRun {
  KamState state;
  KamReport report;
};
// Runs up to K_steps steps; stops at the first failed resonance certificate.
// Throws DivergenceError if the smallness gate is enabled and fails.
KamRun kam_iterate(const KamState& state0, const KamParams& params);
std::optional<double> fit_decay_exponent(const std::vector<NormRecord>& history);

// Applies e^{iG}·e^{-iG} − ∫e^{isG}(ω·∂θG)e^{-isG}ds to H without using any
// homological identity; the independent route for checking reducibility.
BlockOperator transform_hamiltonian(const BlockOperator& G, const BlockOperator& H,
                                    const FrequencyPoint& omega, int lie_order);

// N(θ) = e^{-iεB_0(θ)}···e^{-iεB_{M-1}(θ)}·e^{-iG^1(θ)}···e^{-iG^K(θ)}
Mat compose_transformations(const RegularizationState& reg, const KamState& kam,
                            const std::vector<double>& theta);
// e^{-iA} for Hermitian A
Mat unitary_exp(const Mat& A);

struct TransformBounds {
  double sup_norm = 0.0;      // sup_θ ‖N(θ)‖ on H^r
  double sup_inverse = 0.0;   // sup_θ ‖N(θ)^{-1}‖ on H^r
  double C_bound = 0.0;       // product of the two
  double unitarity = 0.0;     // max ‖N*N − I‖ on the grid
};
TransformBounds transformation_bounds(const RegularizationState& reg, const KamState& kam,
                                      double r, int points_per_dim);

}  // namespace relkam
