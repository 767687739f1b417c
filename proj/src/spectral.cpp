#include "spectral.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace relkam {

void Truncation::validate() const {
  if (J < 1) throw std::invalid_argument("truncation: J must be >= 1");
  if (L < 1) throw std::invalid_argument("truncation: L must be >= 1");
  if (d < 1) throw std::invalid_argument("truncation: d must be >= 1");
}

AngleLattice::AngleLattice(int d, int L) : d_(d), L_(L) {
  if (d < 1 || L < 0) throw std::invalid_argument("angle lattice: bad dimensions");
  const int side = 2 * L + 1;
  count_ = 1;
  for (int c = 0; c < d; ++c) count_ *= static_cast<std::size_t>(side);
  table_.resize(count_ * static_cast<std::size_t>(d));
  sup_.resize(count_);
  for (std::size_t idx = 0; idx < count_; ++idx) {
    std::size_t rem = idx;
    int sup = 0;
    for (int c = d - 1; c >= 0; --c) {
      const int v = static_cast<int>(rem % side) - L;
      rem /= side;
      table_[idx * d + c] = v;
      sup = std::max(sup, std::abs(v));
    }
    sup_[idx] = sup;
  }
  zero_ = (count_ - 1) / 2;
}

std::vector<int> AngleLattice::ell_vector(std::size_t idx) const {
  return std::vector<int>(ell(idx), ell(idx) + d_);
}

std::size_t AngleLattice::index_of(const int* e) const {
  const int side = 2 * L_ + 1;
  std::size_t idx = 0;
  for (int c = 0; c < d_; ++c) {
    if (e[c] < -L_ || e[c] > L_) return count_;
    idx = idx * side + static_cast<std::size_t>(e[c] + L_);
  }
  return idx;
}

double AngleLattice::dot(const std::vector<double>& omega, std::size_t idx) const {
  const int* e = ell(idx);
  double s = 0.0;
  for (int c = 0; c < d_; ++c) s += omega[c] * e[c];
  return s;
}

StateVector::StateVector(int J) : J_(J), c_(static_cast<std::size_t>(2 * J + 1)) {
  if (J < 1) throw std::invalid_argument("state vector: J must be >= 1");
}

StateVector::StateVector(int J, std::vector<cplx> coeffs) : J_(J), c_(std::move(coeffs)) {
  if (J < 1) throw std::invalid_argument("state vector: J must be >= 1");
  if (c_.size() != static_cast<std::size_t>(2 * J + 1))
    throw std::invalid_argument("state vector: expected 2J+1 coefficients");
}

cplx& StateVector::operator()(int n) {
  if (n < -J_ || n > J_) throw std::out_of_range("state vector: mode outside truncation");
  return c_[static_cast<std::size_t>(n + J_)];
}

cplx StateVector::operator()(int n) const {
  if (n < -J_ || n > J_) throw std::out_of_range("state vector: mode outside truncation");
  return c_[static_cast<std::size_t>(n + J_)];
}

void FrequencyPoint::validate() const {
  if (omega.empty()) throw std::invalid_argument("omega: empty frequency vector");
  for (std::size_t c = 0; c < omega.size(); ++c)
    if (!(omega[c] >= 1.0 && omega[c] <= 2.0))
      throw std::invalid_argument("omega[" + std::to_string(c) + "] outside [1,2]");
  if (v && !(*v >= 1.0 && *v <= 2.0)) throw std::invalid_argument("v outside [1,2]");
}

void validate_mass(double m_mass) {
  if (!(m_mass >= 0.0 && m_mass <= 0.25)) throw std::invalid_argument("m_mass outside [0, 1/4]");
}

double multiplier_K(int j, int J, std::optional<double> v) {
  if (j < -J || j > J) throw std::out_of_range("multiplier_K: mode outside truncation");
  return v.value_or(1.0) * std::abs(j);
}

double multiplier_Q(int j, int J, double m_mass, std::optional<double> v) {
  if (j < -J || j > J) throw std::out_of_range("multiplier_Q: mode outside truncation");
  validate_mass(m_mass);
  if (m_mass == 0.0) return 0.0;
  const double vj = v.value_or(1.0) * std::abs(j);
  const double m2 = m_mass * m_mass;
  return m2 / (std::sqrt(vj * vj + m2) + vj);
}

double sobolev_norm(const StateVector& u, double r) {
  if (!(r >= 0.0)) throw std::invalid_argument("sobolev_norm: r must be >= 0");
  const int J = u.J();
  double sum = 0.0;
  for (int n = -J; n <= J; ++n) {
    const double w = std::pow(bracket(n), 2.0 * r);
    sum += w * std::norm(u(n));
  }
  return std::sqrt(sum);
}

}  // namespace relkam
