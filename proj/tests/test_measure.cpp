#include <doctest.h>

#include <cmath>

#include "measure.hpp"
#include "support.hpp"

using namespace relkam;
using namespace relkam::testing;

namespace {

// λ_{j,v} = (j² + m²)^{1/2} ± split/⟨j⟩ in the flat layout.
std::vector<double> flat_eigen(int J, double split) {
  std::vector<double> v{0.25};
  for (int j = 1; j <= J; ++j) {
    const double c = std::sqrt(j * j + 0.0625);
    v.push_back(c - split / j);
    v.push_back(c + split / j);
  }
  return v;
}

}  // namespace

TEST_CASE("sampler determinism and coverage") {
  const OmegaSampler mc{SamplerMode::monte_carlo, 100, 7};
  CHECK(mc.size(2) == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto p = mc.point(i, 2);
    CHECK(p == mc.point(i, 2));
    for (double x : p) {
      CHECK(x >= 1.0);
      CHECK(x <= 2.0);
    }
  }
  CHECK(mc.point(3, 1) != OmegaSampler{SamplerMode::monte_carlo, 100, 8}.point(3, 1));
  const OmegaSampler g{SamplerMode::grid, 4, 1};
  CHECK(g.size(2) == 16);
  double sum = 0.0;
  for (std::size_t i = 0; i < g.size(1); ++i) sum += g.point(i, 1)[0];
  CHECK(sum / 4 == doctest::Approx(1.5));
  CHECK(uniform01(1, 2) == uniform01(1, 2));
}

TEST_CASE("omega0 exclusion against the interval union") {
  const OmegaSampler mc{SamplerMode::monte_carlo, 40000, 3};
  const std::vector<double> alphas{0.0, 0.01, 0.02, 0.04};
  const ExclusionReport r = measure_omega0(alphas, mc, 1, false, 20, 40);
  CHECK(r.fractions[0] == 0.0);
  for (std::size_t k = 1; k < alphas.size(); ++k) {
    CHECK(r.fractions[k] >= r.fractions[k - 1]);
    const double exact = interval_union_fraction(alphas[k], 20, 40);
    CHECK(std::abs(r.fractions[k] - exact) <= 3.0 * r.stderrs[k]);
  }
  for (double a : {0.02, 0.04}) {
    const double ratio = interval_union_fraction(2 * a, 20, 40) / interval_union_fraction(a, 20, 40);
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 2.5);
  }
  REQUIRE(r.exponent.has_value());
  CHECK(*r.exponent >= 0.8);
  CHECK(*r.exponent <= 1.2);
}

TEST_CASE("tuples with |m| beyond twice |l| never exclude") {
  const OmegaSampler g{SamplerMode::grid, 5000, 1};
  const ExclusionReport a = measure_omega0({0.05}, g, 1, false, 6, 13);
  const ExclusionReport b = measure_omega0({0.05}, g, 1, false, 6, 60);
  CHECK(a.fractions[0] == b.fractions[0]);
  CHECK(omega0_critical_alpha({1.37}, 1, false, 6, 13) == omega0_critical_alpha({1.37}, 1, false, 6, 60));
}

TEST_CASE("critical alpha") {
  const double w = 1.37;
  double best = INFINITY;
  for (int l = -8; l <= 8; ++l)
    for (int m = -20; m <= 20; ++m) {
      if (l == 0 && m == 0) continue;
      best = std::min(best, std::abs(w * l + m) * (1.0 + std::pow(std::abs(l), 3)));
    }
  CHECK(omega0_critical_alpha({w}, 1, false, 8, 20) == doctest::Approx(best).epsilon(1e-13));
  CHECK(omega0_critical_alpha({1.5}, 1, false, 8, 20) == 0.0);
}

TEST_CASE("scaling fit") {
  ExclusionReport r;
  r.alpha_values = {0.01, 0.02, 0.04};
  r.fractions = {0.003, 0.006, 0.012};
  r.stderrs = {0, 0, 0};
  const ScalingFit f = fit_scaling(r);
  REQUIRE(f.exponent.has_value());
  CHECK(*f.exponent == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.slope == doctest::Approx(0.3).epsilon(1e-12));
  r.fractions = {0, 0, 0};
  CHECK_FALSE(fit_scaling(r).exponent.has_value());
}

TEST_CASE("estimator consistency under more samples") {
  const OmegaSampler a{SamplerMode::monte_carlo, 20000, 5};
  const OmegaSampler b{SamplerMode::monte_carlo, 40000, 5};
  const ExclusionReport ra = measure_omega0({0.02}, a, 1, false, 16, 64);
  const ExclusionReport rb = measure_omega0({0.02}, b, 1, false, 16, 64);
  CHECK(std::abs(ra.fractions[0] - rb.fractions[0]) < 2.0 * ra.stderrs[0]);
}

TEST_CASE("KAM step fractions from a frozen eigenvalue model") {
  const int J = 12;
  KamParams p;
  const std::vector<double> e = flat_eigen(J, 0.01);
  const EigenModel model = EigenModel::constant(1, {e, e, e});
  const OmegaSampler mc{SamplerMode::monte_carlo, 20000, 9};

  // ℓ = 0 only: the eigenvalue gap keeps every divisor away from zero
  const auto gap_only = measure_kam_steps(model, p, 0.2, mc, 0);
  for (const auto& f : gap_only) CHECK(f.fraction == 0.0);

  const auto steps = measure_kam_steps(model, p, 0.05, mc, 8);
  REQUIRE(steps.size() == 3);
  CHECK(steps[0].fraction > 0.0);
  for (std::size_t k = 1; k < steps.size(); ++k) {
    CHECK(steps[k].fraction <= 2.0 * steps[k - 1].fraction + 2.0 * steps[k - 1].stderr_);
    CHECK(steps[k].cumulative >= steps[k - 1].cumulative);
    CHECK(steps[k].alpha_over_N == doctest::Approx(0.05 / steps[k].N));
  }
  CHECK(measure_kam_step(model, p, 1, 0.05, mc, 8) == steps[1].fraction);
}

TEST_CASE("eigenvalue model interpolation") {
  const int J = 4;
  auto provider = [&](const FrequencyPoint& w) -> std::optional<std::vector<std::vector<double>>> {
    std::vector<double> v = flat_eigen(J, 0.0);
    for (auto& x : v) x += 0.1 * w.omega[0];
    return std::vector<std::vector<double>>{v};
  };
  const EigenModel m = EigenModel::build(provider, 1, 5, 1);
  CHECK(m.failed_nodes() == 0);
  CHECK(m.J() == J);
  const auto v = m.eigenvalues({1.4}, 0);
  CHECK(v[0] == doctest::Approx(0.25 + 0.14).epsilon(1e-12));
}
