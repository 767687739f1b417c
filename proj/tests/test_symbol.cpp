#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "symbol.hpp"

using namespace relkam;
using namespace relkam::testing;

namespace {

Symbol multiplier_symbol(const Truncation& t, double order, double (*f)(int)) {
  Symbol a(t, 1, order);
  const std::size_t z = a.lattice().zero();
  for (int j = -t.J; j <= t.J; ++j) a.at(z, 0, j) = f(j);
  return a;
}

Symbol shift_symbol(const Truncation& t) {
  Symbol a(t, 1, 0.0);
  for (int j = -t.J; j <= t.J; ++j) a.at(a.lattice().zero(), 1, j) = 1.0;
  return a;
}

Symbol random_symbol(const Truncation& t, int K_x, std::mt19937_64& rng) {
  Symbol a(t, K_x, 0.5);
  for (std::size_t l = 0; l < a.lattice().size(); ++l)
    for (int k = -K_x; k <= K_x; ++k)
      for (int j = -t.J; j <= t.J; ++j) a.at(l, k, j) = random_cplx(rng) * std::sqrt(bracket(j));
  return a;
}

}  // namespace

TEST_CASE("op_apply examples") {
  const Truncation t{8, 2, 1};
  std::mt19937_64 rng(3);
  StateVector u(8);
  for (auto& c : u.coeffs()) c = random_cplx(rng);

  const Symbol one = multiplier_symbol(t, 0.0, [](int) { return 1.0; });
  const StateVector v = op_apply(one, u, {0.4});
  for (int n = -8; n <= 8; ++n) CHECK(std::abs(v(n) - u(n)) == 0.0);

  const Symbol br = multiplier_symbol(t, 1.0, [](int j) { return bracket(j); });
  StateVector e2(8);
  e2(2) = 1.0;
  const StateVector w = op_apply(br, e2, {0.0});
  CHECK(std::abs(w(2) - cplx(2.0)) < 1e-15);

  const StateVector s = op_apply(shift_symbol(t), u, {1.1});
  for (int n = -8; n <= 8; ++n) {
    const cplx expect = n - 1 >= -8 ? u(n - 1) : cplx(0.0);
    CHECK(std::abs(s(n) - expect) < 1e-15);
  }
}

TEST_CASE("op_apply agrees with the matrix at a phase") {
  const Truncation t{6, 2, 1};
  std::mt19937_64 rng(5);
  const Symbol a = random_symbol(t, 2, rng);
  StateVector u(6);
  for (auto& c : u.coeffs()) c = random_cplx(rng);
  const std::vector<double> th{0.77};
  const StateVector v = op_apply(a, u, th);
  const Mat m = matrix_of(a).evaluate(th);
  const Vec mv = m * Eigen::Map<const Vec>(u.coeffs().data(), u.coeffs().size());
  for (int n = -6; n <= 6; ++n) CHECK(std::abs(mv(t.row(n)) - v(n)) < 1e-12);
}

TEST_CASE("seminorm examples") {
  const Truncation t{16, 1, 1};
  const Symbol one = multiplier_symbol(t, 0.0, [](int) { return 1.0; });
  CHECK(seminorm(one, 0, 2.0).values[0] == doctest::Approx(1.0).epsilon(1e-14));

  const Symbol br = multiplier_symbol(t, 1.0, [](int j) { return bracket(j); });
  CHECK(seminorm(br, 1, 2.0).values[1] == doctest::Approx(2.0).epsilon(1e-14));

  CHECK(seminorm(shift_symbol(t), 1, 2.0).values[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("seminorm Lipschitz quotient") {
  const Truncation t{8, 1, 1};
  Symbol a = multiplier_symbol(t, 0.0, [](int) { return 1.0; });
  Symbol b = a;
  b *= 1.5;
  const FrequencyPoint w1{{1.2}, std::nullopt}, w2{{1.4}, std::nullopt};
  const SeminormReport r = seminorm(a, 0, 2.0, {a, b}, {w1, w2});
  CHECK(r.lipschitz == doctest::Approx(0.5 / 0.2));
}

TEST_CASE("symbol composition") {
  const Truncation t{10, 2, 1};
  const Symbol a = multiplier_symbol(t, 1.0, [](int j) { return bracket(j); });
  const Symbol b = multiplier_symbol(t, 0.5, [](int j) { return std::sqrt(bracket(j)) + j; });
  const Symbol ab = symbol_compose(a, b);
  for (int j = -10; j <= 10; ++j)
    CHECK(std::abs(ab.at(ab.lattice().zero(), 0, j) - bracket(j) * (std::sqrt(bracket(j)) + j)) <
          1e-12);

  const Symbol es = symbol_compose(shift_symbol(t), a);
  for (int xi = -10; xi < 10; ++xi)
    CHECK(std::abs(es.at(es.lattice().zero(), 1, xi) - bracket(xi)) < 1e-15);
}

TEST_CASE("composition is the operator product") {
  const Truncation t{8, 2, 1};
  std::mt19937_64 rng(11);
  Symbol a = random_symbol(t, 1, rng), b = random_symbol(t, 1, rng);
  // keep |ℓ| ≤ 1 so the θ-convolution stays inside the box
  for (Symbol* s : {&a, &b})
    for (std::size_t l = 0; l < s->lattice().size(); ++l)
      if (s->lattice().sup_norm(l) > 1)
        for (int k = -1; k <= 1; ++k)
          for (int j = -8; j <= 8; ++j) s->at(l, k, j) = 0.0;
  const BlockOperator prod = block_product(matrix_of(a), matrix_of(b));
  const BlockOperator comp = matrix_of(symbol_compose(a, b));
  // rows away from the edge see no modes dropped
  for (std::size_t l = 0; l < prod.slice_count(); ++l) {
    if (!prod.has_slice(l)) continue;
    for (int n = -6; n <= 6; ++n)
      for (int m = -8; m <= 8; ++m) CHECK(std::abs(prod.entry(l, n, m) - comp.entry(l, n, m)) < 1e-12);
  }
}

TEST_CASE("matrix_of and symbol_of") {
  const Truncation t{8, 2, 1};
  const Symbol a = multiplier_symbol(t, 0.5, [](int j) { return std::sqrt(bracket(j)); });
  const BlockOperator A = matrix_of(a);
  for (int i = 0; i <= 8; ++i)
    for (int j = 0; j <= 8; ++j)
      if (i != j) CHECK(A.block(A.lattice().zero(), i, j).norm() == 0.0);

  std::mt19937_64 rng(2);
  const Symbol r = random_symbol(t, 2, rng);
  const BlockOperator H = hermitian_symmetrize(matrix_of(r));
  const AngleLattice& lat = H.lattice();
  for (std::size_t l = 0; l < lat.size(); ++l)
    for (int n = -8; n <= 8; ++n)
      for (int m = -8; m <= 8; ++m)
        CHECK(std::abs(std::conj(H.entry(lat.negate(l), m, n)) - H.entry(l, n, m)) < 1e-15);

  // Entries with |j+k| > J fall outside the matrix and cannot come back.
  Symbol kept = r;
  for (std::size_t l = 0; l < lat.size(); ++l)
    for (int k = -2; k <= 2; ++k)
      for (int j = -8; j <= 8; ++j)
        if (std::abs(j + k) > 8) kept.at(l, k, j) = 0.0;
  CHECK(symbol_of(matrix_of(r), 2, 0.5) == kept);
}

TEST_CASE("condition C2 examples") {
  const Truncation t{64, 1, 1};
  const Symbol pure = multiplier_symbol(t, 0.5, [](int j) { return 2.0 * std::sqrt(bracket(j)); });
  Symbol cosine = pure;
  for (int j = -64; j <= 64; ++j) {
    cosine.at(cosine.lattice().zero(), 1, j) = 0.5 * std::sqrt(bracket(j));
    cosine.at(cosine.lattice().zero(), -1, j) = 0.5 * std::sqrt(bracket(j));
  }
  const C2Report c = check_condition_C2(cosine);
  CHECK(c.a_coeff == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(c.b_bound < 1e-14);

  const Symbol inv =
      multiplier_symbol(t, 0.5, [](int j) { return std::sqrt(bracket(j)) + 1.0 / bracket(j); });
  const C2Report ci = check_condition_C2(inv);
  CHECK(ci.a_coeff == doctest::Approx(1.0).epsilon(0.05));
  CHECK(ci.b_bound <= 1.0 + 1e-12);

  const Symbol alt = multiplier_symbol(
      t, 0.5, [](int j) { return std::sqrt(bracket(j)) + (j % 2 == 0 ? 1.0 : -1.0); });
  const C2Report ca = check_condition_C2(alt);
  CHECK(ca.a_coeff == doctest::Approx(1.0).epsilon(0.05));
  CHECK(ca.b_bound == doctest::Approx(1.0).epsilon(0.2));
}
