#pragma once

#include <functional>
#include <vector>

#include "block_operator.hpp"
#include "kam.hpp"
#include "regularization.hpp"

namespace relkam {

struct EvolutionConfig {
  double T = 1.0;
  double dt = 0.01;
  std::vector<double> r_list{0.0, 1.0};
  int integrator_order = 2;
  int record_every = 1;  // trace sampling stride in steps
  StateVector u0{1};

  void validate(int J) const;
};

struct NormTrace {
  std::vector<double> times;
  std::vector<double> r_list;
  std::vector<std::vector<double>> norms;  // [sample][r]
  std::vector<double> initial;             // ‖u0‖_{H^r}
  std::vector<double> ratio_max, ratio_min;  // over every step, not only samples
  double l2_drift = 0.0;
  StateVector final_state{1};
  long steps = 0;
};

// Steps i∂t u = H(ωt) u with H given as a θ-family. Exponential midpoint
// (order 2) or the two-exponential commutator-free scheme (order 4); each
// exponential is applied to the vector by a Taylor series run to round-off.
class Propagator {
 public:
  Propagator(const BlockOperator& H, const FrequencyPoint& omega, int order);

  // Bound used by the stability rule dt·bound ≤ 0.5.
  double generator_bound() const { return bound_; }
  // One step from time t to t + h (h may be negative).
  void step(Vec& u, double t, double h) const;
  void assemble(double t, Mat& out) const;

 private:
  void apply_exp(const Mat& H, double h, Vec& u) const;
  void matvec(const Mat& H, const Vec& x, Vec& y) const;

  const BlockOperator& H_;
  FrequencyPoint omega_;
  int order_;
  double bound_ = 0.0;
  std::vector<int> lo_, hi_;  // nonzero column range per row
  std::vector<std::size_t> present_;
};

using StateObserver = std::function<void(double t, const Vec& u)>;

NormTrace evolve(const BlockOperator& H, const FrequencyPoint& omega, const EvolutionConfig& cfg,
                 const StateObserver& observer = {});
// Advances u from t0 to t1 in steps of size close to dt.
Vec evolve_between(const BlockOperator& H, const FrequencyPoint& omega, const Vec& u, double t0,
                   double t1, double dt, int order);

struct BoundednessResult {
  double ratio_max = 1.0;
  double ratio_min = 1.0;
  bool pass = true;
};
BoundednessResult verify_boundedness(const NormTrace& trace, std::size_t r_index, double C_bound);

// e^{-iΛt} applied blockwise
Vec apply_reduced_flow(const std::vector<Mat>& Lambda, const Vec& v, double t);

struct ConjugacyResult {
  double max_error = 0.0;  // max_t ‖u_red(t) − u(t)‖ / ‖u0‖
  std::vector<double> times;
  std::vector<double> errors;
};
// u_red(t) = N(ωt) e^{-iΛt} N(0)^{-1} u0 against the integrated u(t), sampled
// every cfg.record_every steps.
ConjugacyResult verify_conjugacy(const RegularizationState& reg, const KamState& kam,
                                 const BlockOperator& H, const EvolutionConfig& cfg);

// K + Q + εW0 as the θ-family driving the original equation.
BlockOperator original_hamiltonian(const BlockOperator& W0, double epsilon, double m_mass,
                                   TorusMode mode, const FrequencyPoint& omega);

}  // namespace relkam
