#include <doctest.h>

#include <cmath>
#include <random>

#include "spectral.hpp"
#include "support.hpp"

using namespace relkam;

TEST_CASE("multiplier K") {
  CHECK(multiplier_K(0, 8) == 0.0);
  CHECK(multiplier_K(-3, 8) == 3.0);
  CHECK(multiplier_K(3, 8, 1.5) == doctest::Approx(4.5).epsilon(1e-15));
  CHECK_THROWS(multiplier_K(9, 8));
}

TEST_CASE("multiplier Q") {
  CHECK(multiplier_Q(0, 8, 0.25) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(multiplier_Q(5, 8, 0.0) == 0.0);
  const long double ref = std::sqrt(1.0625L) - 1.0L;
  CHECK(std::abs(multiplier_Q(1, 8, 0.25) - static_cast<double>(ref)) < 1e-16);
  // no cancellation far out: the leading term is m²/(2j)
  const double j = 1e6;
  CHECK(multiplier_Q(1000000, 1000000, 0.25) == doctest::Approx(0.0625 / (2 * j)).epsilon(1e-9));
  CHECK_THROWS(validate_mass(-0.1));
}

TEST_CASE("sobolev norm") {
  StateVector u(8);
  u(4) = 1.0;
  CHECK(sobolev_norm(u, 2.0) == doctest::Approx(16.0));
  StateVector c(8);
  c(0) = 1.0;
  CHECK(sobolev_norm(c, 0.0) == 1.0);
  CHECK(sobolev_norm(c, 3.7) == 1.0);
  StateVector w(8);
  w(1) = 1.0;
  w(-1) = 1.0;
  CHECK(sobolev_norm(w, 1.0) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("angle lattice indexing") {
  AngleLattice lat(2, 3);
  CHECK(lat.size() == 49);
  for (std::size_t i = 0; i < lat.size(); ++i) {
    CHECK(lat.index_of(lat.ell(i)) == i);
    const auto e = lat.ell_vector(i);
    const auto n = lat.ell_vector(lat.negate(i));
    CHECK(n[0] == -e[0]);
    CHECK(n[1] == -e[1]);
  }
  const int outside[2] = {4, 0};
  CHECK(lat.index_of(outside) == lat.size());
  CHECK(lat.ell(lat.zero())[0] == 0);
}

TEST_CASE("frequency and truncation validation") {
  FrequencyPoint w{{1.5}, std::nullopt};
  CHECK_NOTHROW(w.validate());
  FrequencyPoint bad{{2.5}, std::nullopt};
  CHECK_THROWS(bad.validate());
  FrequencyPoint badv{{1.5}, 0.5};
  CHECK_THROWS(badv.validate());
  Truncation t{0, 1, 1};
  CHECK_THROWS(t.validate());
}
