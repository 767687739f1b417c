#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "kam.hpp"
#include "spectral.hpp"

namespace relkam {

enum class SamplerMode { grid, monte_carlo };

// Deterministic sampler of the parameter box [1,2]^dims. Grid mode uses
// `count` midpoints per dimension; monte_carlo draws `count` points from a
// counter-based generator, so sample i depends only on (seed, i).
struct OmegaSampler {
  SamplerMode mode = SamplerMode::monte_carlo;
  long count = 10000;
  std::uint64_t seed = 1;

  std::size_t size(int dims) const;
  std::vector<double> point(std::size_t idx, int dims) const;
};

double uniform01(std::uint64_t seed, std::uint64_t counter);

struct StepFraction {
  int k = 0;
  long N = 0;
  double fraction = 0.0;    // failing the step-k certificate
  double stderr_ = 0.0;
  double newly = 0.0;       // failing at k but at no earlier step
  double cumulative = 0.0;  // failing at some step ≤ k
  double alpha_over_N = 0.0;
};

struct ExclusionReport {
  std::vector<double> alpha_values;
  std::vector<double> fractions;
  std::vector<double> stderrs;
  double fit_slope = 0.0;
  double slope_stderr = 0.0;
  std::optional<double> exponent;
  std::vector<StepFraction> per_step;
  std::uint64_t seed = 0;
  int ell_max = 0;
  int m_max = 0;
  long samples = 0;
};

// Smallest α at which ω fails the Ω_0 condition over the box (ℓ, m) ≠ 0.
// With `beta` the second coordinate of ω is read as v (d+1 box).
double omega0_critical_alpha(const std::vector<double>& point, int d, bool beta, int ell_max,
                             int m_max);

ExclusionReport measure_omega0(const std::vector<double>& alphas, const OmegaSampler& sampler,
                               int d, bool beta, int ell_max, int m_max);

struct ScalingFit {
  double slope = 0.0;
  double slope_stderr = 0.0;
  std::optional<double> exponent;  // unset when fewer than two fractions are positive
};
ScalingFit fit_scaling(const ExclusionReport& report);

// Eigenvalues λ^k_{j,v}(ω) interpolated from a grid of full runs. Flat layout
// per step: j = 0 first (one value), then two ascending values per j ≥ 1.
using EigenProvider =
    std::function<std::optional<std::vector<std::vector<double>>>(const FrequencyPoint&)>;

class EigenModel {
 public:
  // Nodes per dimension sit at 1 + (i + 0.618…)/n so no node is rational.
  static EigenModel build(const EigenProvider& provider, int d, int nodes_per_dim, int steps);
  // Constant model (frozen Λ independent of ω), mostly for tests.
  static EigenModel constant(int d, std::vector<std::vector<double>> per_step);

  int d() const { return d_; }
  int steps() const { return steps_; }
  int J() const { return J_; }
  int failed_nodes() const { return failed_; }
  std::vector<double> eigenvalues(const std::vector<double>& omega, int step) const;

 private:
  int d_ = 1;
  int steps_ = 0;
  int J_ = 0;
  int n_ = 0;
  int failed_ = 0;
  std::vector<double> coords_;                          // node coordinates along one axis
  std::vector<std::vector<std::vector<double>>> table_;  // [node][step][flat λ]
};

// Fraction of sampled ω failing the KAM non-resonance check at each step
// 0..model.steps()-1 over |ℓ| ≤ min(N_k, ell_box), i, j ≤ model.J().
std::vector<StepFraction> measure_kam_steps(const EigenModel& model, const KamParams& params,
                                            double alpha, const OmegaSampler& sampler,
                                            int ell_box);
double measure_kam_step(const EigenModel& model, const KamParams& params, int k, double alpha,
                        const OmegaSampler& sampler, int ell_box);

}  // namespace relkam
