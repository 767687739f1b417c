#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

namespace relkam {

using cplx = std::complex<double>;

// ⟨j⟩ = max(1, |j|)
inline double bracket(long j) { return j == 0 ? 1.0 : static_cast<double>(j < 0 ? -j : j); }

// Truncation box: modes j in [-J, J], angle modes ℓ in [-L, L]^d.
struct Truncation {
  int J = 1;
  int L = 1;
  int d = 1;

  void validate() const;
  int modes() const { return 2 * J + 1; }
  int row(int n) const { return n + J; }
  bool operator==(const Truncation&) const = default;
};

// Enumerates the angle lattice [-L, L]^d in lexicographic order (first
// component slowest). Index of ℓ = Σ (ℓ_c + L)(2L+1)^{d-1-c}.
class AngleLattice {
 public:
  AngleLattice(int d, int L);

  int d() const { return d_; }
  int L() const { return L_; }
  std::size_t size() const { return count_; }
  std::size_t zero() const { return zero_; }

  const int* ell(std::size_t idx) const { return &table_[idx * static_cast<std::size_t>(d_)]; }
  std::vector<int> ell_vector(std::size_t idx) const;
  // Returns size() when ℓ lies outside the box.
  std::size_t index_of(const int* ell) const;
  std::size_t index_of(const std::vector<int>& ell) const { return index_of(ell.data()); }
  std::size_t negate(std::size_t idx) const { return count_ - 1 - idx; }
  int sup_norm(std::size_t idx) const { return sup_[idx]; }
  double dot(const std::vector<double>& omega, std::size_t idx) const;

 private:
  int d_, L_;
  std::size_t count_, zero_;
  std::vector<int> table_;
  std::vector<int> sup_;
};

class StateVector {
 public:
  explicit StateVector(int J);
  StateVector(int J, std::vector<cplx> coeffs);

  int J() const { return J_; }
  cplx& operator()(int n);
  cplx operator()(int n) const;
  const std::vector<cplx>& coeffs() const { return c_; }
  std::vector<cplx>& coeffs() { return c_; }

 private:
  int J_;
  std::vector<cplx> c_;
};

// ω in [1,2]^d, with the optional torus-speed parameter v in [1,2].
struct FrequencyPoint {
  std::vector<double> omega;
  std::optional<double> v;

  void validate() const;
  int d() const { return static_cast<int>(omega.size()); }
  double speed() const { return v.value_or(1.0); }
};

void validate_mass(double m_mass);

double multiplier_K(int j, int J, std::optional<double> v = std::nullopt);
// (v²j² + 𝔪²)^{1/2} − v|j|, with v = 1 in standard mode. Evaluated without
// cancellation as 𝔪²/((v²j²+𝔪²)^{1/2} + v|j|).
double multiplier_Q(int j, int J, double m_mass, std::optional<double> v = std::nullopt);

double sobolev_norm(const StateVector& u, double r);

}  // namespace relkam
