#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "errors.hpp"
#include "kam.hpp"
#include "pipeline.hpp"
#include "regularization.hpp"
#include "support.hpp"

using namespace relkam;
using namespace relkam::testing;

namespace {

const FrequencyPoint golden{{(1.0 + std::sqrt(5.0)) / 2.0}, std::nullopt};

// Exhaustive minimum of |ω·ℓ + m|(1 + |ℓ|^{d+2}) / α over the box, d = 1.
double enumerate_margin(double w, double alpha, int ell_max, int m_max) {
  double best = INFINITY;
  for (int l = -ell_max; l <= ell_max; ++l)
    for (int m = -m_max; m <= m_max; ++m) {
      if (l == 0 && m == 0) continue;
      const double al = std::abs(l);
      best = std::min(best, std::abs(w * l + m) * (1.0 + al * al * al) / alpha);
    }
  return best;
}

Symbol reference_symbol(const Truncation& t) {
  const json params = {{"a0", 1.0}, {"terms", {{{"l", {1}}, {"k", 1}, {"c", 0.5}}}}};
  return builtin_symbol("c2_cosine", params, t, 1, 1);
}

}  // namespace

TEST_CASE("kappa-theta average examples") {
  const Truncation t{6, 2, 1};
  const BlockOperator M = BlockOperator::multiplier(t, [](int j) { return 0.5 * j + 2.0; });
  CHECK((kappa_theta_average(M) - M).max_abs() == 0.0);

  std::mt19937_64 rng(30);
  BlockOperator off = random_operator(t, rng);
  off.drop_slice(off.lattice().zero());
  CHECK(kappa_theta_average(off).is_zero());

  const BlockOperator W = random_operator(t, rng);
  const BlockOperator A = kappa_theta_average(W);
  CHECK((kappa_theta_average(A) - A).max_abs() == 0.0);
}

TEST_CASE("kappa-theta average against quadrature") {
  std::mt19937_64 rng(31);
  const Truncation t{6, 2, 1};
  const BlockOperator W = random_operator(t, rng);
  const int Pt = 4 * t.L + 1;
  const int Pk = 4 * t.J + 1;
  Mat avg = Mat::Zero(t.modes(), t.modes());
  for (int a = 0; a < Pt; ++a) {
    const Mat Wt = W.evaluate({2.0 * std::numbers::pi * a / Pt});
    for (int b = 0; b < Pk; ++b) {
      const double kappa = 2.0 * std::numbers::pi * b / Pk;
      Vec ph(t.modes());
      for (int n = -t.J; n <= t.J; ++n) ph(t.row(n)) = std::polar(1.0, kappa * std::abs(n));
      avg += ph.asDiagonal() * Wt * ph.conjugate().asDiagonal();
    }
  }
  avg /= static_cast<double>(Pt) * Pk;
  CHECK((kappa_theta_average(W).evaluate({0.3}) - avg).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("omega0 condition") {
  const Omega0Check c = check_omega0(golden, 1e-3, 20, 20);
  CHECK(c.ok);
  CHECK(c.min_margin == doctest::Approx(enumerate_margin(golden.omega[0], 1e-3, 20, 20)).epsilon(1e-12));

  const FrequencyPoint res{{1.5}, std::nullopt};
  const Omega0Check r = check_omega0(res, 1e-3, 4, 8);
  CHECK_FALSE(r.ok);
  CHECK(r.min_margin == 0.0);
  CHECK(r.worst_ell[0] != 0);
  CHECK(r.worst_ell[0] % 2 == 0);

  CHECK(check_omega0(golden, 0.0, 20, 40).ok);
  CHECK_FALSE(check_omega0(res, 0.0, 4, 8).ok);
}

TEST_CASE("regularizing homological equation examples") {
  const Truncation t{6, 3, 1};
  BlockOperator W(t);
  const int ell[1] = {2};
  const std::size_t l0 = W.lattice().index_of(ell);
  W.set_entry(l0, 2, 1, 1.0);
  const BlockOperator B = solve_homological_reg(W, golden, 1e-3);
  const cplx expect = 1.0 / cplx(0.0, golden.omega[0] * 2 + 1.0);
  CHECK(std::abs(B.entry(l0, 2, 1) - expect) < 1e-15);
  CHECK(B.present_slices() == 1);

  std::mt19937_64 rng(32);
  const BlockOperator Wa = kappa_theta_average(random_operator(t, rng, 1.0, 0.0, true));
  CHECK(solve_homological_reg(Wa, golden, 1e-3).is_zero());

  const FrequencyPoint res{{1.5}, std::nullopt};
  BlockOperator Wr(t);
  const int e2[1] = {2};
  Wr.set_entry(Wr.lattice().index_of(e2), 0, 3, 1.0);
  CHECK_THROWS_AS(solve_homological_reg(Wr, res, 1e-3), ResonanceError);
}

TEST_CASE("regularizing homological equation on random Hermitian input") {
  std::mt19937_64 rng(33);
  const Truncation t{12, 4, 1};
  for (int k = 0; k < 5; ++k) {
    const BlockOperator W = random_operator(t, rng, 1.0, 0.2, true);
    const BlockOperator B = solve_homological_reg(W, golden, 1e-3);
    CHECK(decay_norm(homological_reg_residual(B, W, golden), {2.0, 0, 0}) <= 1e-12);
    CHECK(hermiticity_defect(B) < 1e-14);
  }
}

TEST_CASE("regularization step examples") {
  const Truncation t{8, 2, 1};
  RegParams p;
  p.M = 3;
  const RegularizationState zero =
      initial_regularization_state(BlockOperator(t), golden, 1e-3, 0.25, TorusMode::standard);
  const RegularizationState z1 = regularization_step(zero, p);
  CHECK(z1.step == 1);
  CHECK(z1.W.is_zero());
  CHECK(z1.Z.is_zero());

  std::mt19937_64 rng(34);
  const BlockOperator avg = kappa_theta_average(random_operator(t, rng, 1.0, 0.0, true));
  const RegularizationState a0 =
      initial_regularization_state(avg, golden, 1e-3, 0.25, TorusMode::standard);
  const RegularizationState a1 = regularization_step(a0, p);
  CHECK(a1.B_log.back().is_zero());
  CHECK((a1.Z - avg).max_abs() == 0.0);
  CHECK(a1.W.max_abs() < 1e-15);
}

TEST_CASE("regularization step agrees with direct conjugation") {
  std::mt19937_64 rng(35);
  const Truncation t{10, 3, 1};
  const double eps = 1e-2;
  RegParams p;
  const BlockOperator W0 = random_operator(t, rng, 1.0, 0.5, true);
  const RegularizationState s0 = initial_regularization_state(W0, golden, eps, 0.25, TorusMode::standard);
  const RegularizationState s1 = regularization_step(s0, p);
  const BlockOperator G = cplx(eps) * s1.B_log.back();
  const BlockOperator direct = transform_hamiltonian(G, regularized_hamiltonian(s0), golden, 16);
  CHECK((direct - regularized_hamiltonian(s1)).max_abs() < 1e-12);
  CHECK(hermiticity_defect(s1.W) < 1e-11);
  CHECK(hermiticity_defect(s1.Z) < 1e-11);
  CHECK(commutes_with_K(s1.Z));
}

TEST_CASE("cascade examples") {
  const Truncation t{16, 4, 1};
  RegParams p;
  p.M = 4;
  const Symbol a = reference_symbol(t);
  const RegularizationState e0 = run_cascade(a, p, golden, 0.0, 0.25);
  CHECK(e0.Z.is_zero());
  CHECK(e0.W.is_zero());
  CHECK(e0.B_log.empty());

  std::mt19937_64 rng(36);
  const BlockOperator W0 = random_operator(t, rng, 1.0, 0.8, true);
  RegParams one = p;
  one.M = 1;
  const RegularizationState m1 = run_cascade(W0, one, golden, 1e-3, 0.25);
  CHECK((m1.Z - kappa_theta_average(W0)).max_abs() == 0.0);

  const RegularizationState r = run_cascade(a, p, golden, 1e-3, 0.25);
  for (const auto& e : r.decay_report) {
    CHECK(e.hermiticity < 1e-11);
    CHECK(e.weighted <= 4.0 * r.decay_report.front().weighted);
  }
}

TEST_CASE("cascade reduces the reference perturbation") {
  const Truncation t{64, 8, 1};
  RegParams p;
  p.M = 4;
  const Symbol a = reference_symbol(t);
  const RegularizationState r = run_cascade(a, p, golden, 1e-3, 0.25);
  const double s0 = KamParams::s0(1);
  const double w0 = decay_norm(hermitian_symmetrize(matrix_of(a)), {s0, 0, 0});
  CHECK(decay_norm(r.W, {s0, 0, 0}) <= 1e-2 * w0);
  CHECK(commutes_with_K(r.Z));
}

TEST_CASE("condition C2 gate on the cascade") {
  const Truncation t{16, 2, 1};
  Symbol bad(t, 1, 0.5);
  for (int j = -16; j <= 16; ++j) bad.at(bad.lattice().zero(), 0, j) = 10.0 * (j % 2 == 0 ? 1 : -1);
  RegParams p;
  p.M = 1;
  CHECK_THROWS_AS(run_cascade(bad, p, golden, 1e-3, 0.25), ConfigError);
}

TEST_CASE("eigenvalue asymptotics examples") {
  const Truncation t{16, 2, 1};
  RegParams p;
  p.M = 2;
  const Symbol a = reference_symbol(t);
  const RegularizationState e0 = run_cascade(a, p, golden, 0.0, 0.25);
  const EigenAsymptotics z = eigenvalue_asymptotics(e0, 1.0);
  for (const auto& row : z.rows)
    for (int v = 0; v < row.size; ++v) {
      CHECK(row.r[v] == 0.0);
      CHECK(row.lambda[v] == doctest::Approx(std::sqrt(row.j * row.j + 0.0625)).epsilon(1e-15));
    }

  const BlockOperator M = BlockOperator::multiplier(t, [](int j) { return 1.3 * std::sqrt(bracket(j)); });
  const RegularizationState m = run_cascade(M, p, golden, 1e-3, 0.25);
  const EigenAsymptotics em = eigenvalue_asymptotics(m, 1.3);
  CHECK(em.sup_r < 1e-14);
  CHECK(em.c0 > 0.7);
}
