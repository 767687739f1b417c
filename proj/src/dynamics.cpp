#include "dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "errors.hpp"

namespace relkam {
namespace {

Vec to_vec(const StateVector& u) {
  Vec v(static_cast<Eigen::Index>(u.coeffs().size()));
  for (std::size_t k = 0; k < u.coeffs().size(); ++k) v(static_cast<Eigen::Index>(k)) = u.coeffs()[k];
  return v;
}

StateVector to_state(const Vec& v, int J) {
  std::vector<cplx> c(v.data(), v.data() + v.size());
  return StateVector(J, std::move(c));
}

double weighted_norm(const Vec& v, const Eigen::VectorXd& w) {
  return std::sqrt((v.cwiseAbs2().array() * w.array()).sum());
}

}  // namespace

void EvolutionConfig::validate(int J) const {
  if (!(T >= 0.0)) throw ConfigError("evolution.T", "must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("evolution.dt", "must be > 0");
  if (integrator_order != 2 && integrator_order != 4)
    throw ConfigError("evolution.integrator_order", "must be 2 or 4");
  if (record_every < 1) throw ConfigError("evolution.record_every", "must be >= 1");
  for (double r : r_list)
    if (!(r >= 0.0)) throw ConfigError("evolution.r_list", "exponents must be >= 0");
  if (u0.J() != J) throw ConfigError("evolution.u0", "state truncation differs from J");
}

Propagator::Propagator(const BlockOperator& H, const FrequencyPoint& omega, int order)
    : H_(H), omega_(omega), order_(order) {
  if (order != 2 && order != 4) throw std::invalid_argument("propagator: order must be 2 or 4");
  const int n = H.modes();
  lo_.assign(n, n);
  hi_.assign(n, -1);
  double offdiag = 0.0, diag = 0.0;
  for (std::size_t l = 0; l < H.slice_count(); ++l) {
    if (!H.has_slice(l)) continue;
    present_.push_back(l);
    const Mat& s = H.slice(l);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (s(r, c) != cplx(0.0)) {
          lo_[r] = std::min(lo_[r], c);
          hi_[r] = std::max(hi_[r], c);
        }
    if (l == H.lattice().zero())
      diag = s.diagonal().cwiseAbs().maxCoeff(), offdiag += (s - Mat(s.diagonal().asDiagonal())).norm();
    else
      offdiag += s.norm();
  }
  bound_ = diag + offdiag;
}

void Propagator::assemble(double t, Mat& out) const {
  const int d = H_.truncation().d;
  const int n = H_.modes();
  out.setZero(n, n);
  for (std::size_t l : present_) {
    double phase = 0.0;
    const int* e = H_.lattice().ell(l);
    for (int c = 0; c < d; ++c)
      phase += e[c] * std::fmod(omega_.omega[c] * t, 2.0 * std::numbers::pi);
    const cplx f = std::polar(1.0, phase);
    const Mat& s = H_.slice(l);
    for (int r = 0; r < n; ++r)
      for (int c = lo_[r]; c <= hi_[r]; ++c) out(r, c) += f * s(r, c);
  }
}

void Propagator::matvec(const Mat& H, const Vec& x, Vec& y) const {
  const int n = static_cast<int>(x.size());
  for (int r = 0; r < n; ++r) {
    cplx acc = 0.0;
    for (int c = lo_[r]; c <= hi_[r]; ++c) acc += H(r, c) * x(c);
    y(r) = acc;
  }
}

void Propagator::apply_exp(const Mat& H, double h, Vec& u) const {
  // e^{-ihH}u by Taylor series; |h|·‖H‖ ≤ 1/2 keeps every term smaller than the last.
  Vec term = u, next(u.size());
  Vec sum = u;
  const double scale = u.norm();
  if (scale == 0.0) return;
  for (int p = 1; p <= 60; ++p) {
    matvec(H, term, next);
    term = cplx(0.0, -h / p) * next;
    sum += term;
    if (term.norm() <= 1e-18 * scale) break;
  }
  u = std::move(sum);
}

void Propagator::step(Vec& u, double t, double h) const {
  Mat Hm;
  if (order_ == 2) {
    assemble(t + 0.5 * h, Hm);
    apply_exp(Hm, h, u);
    return;
  }
  const double s3 = std::sqrt(3.0);
  const double c1 = 0.5 - s3 / 6.0, c2 = 0.5 + s3 / 6.0;
  const double a1 = 0.25 + s3 / 6.0, a2 = 0.25 - s3 / 6.0;
  Mat H1, H2;
  assemble(t + c1 * h, H1);
  assemble(t + c2 * h, H2);
  Hm = a1 * H1 + a2 * H2;
  apply_exp(Hm, h, u);
  Hm = a2 * H1 + a1 * H2;
  apply_exp(Hm, h, u);
}

NormTrace evolve(const BlockOperator& H, const FrequencyPoint& omega, const EvolutionConfig& cfg,
                 const StateObserver& observer) {
  const int J = H.truncation().J;
  cfg.validate(J);
  Propagator prop(H, omega, cfg.integrator_order);
  if (cfg.dt * prop.generator_bound() > 0.5)
    throw ConfigError("evolution.dt", "dt*bound = " + std::to_string(cfg.dt * prop.generator_bound()) +
                                          " exceeds the stability limit 0.5");
  const long steps = static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-9));
  const double h = steps > 0 ? cfg.T / steps : 0.0;

  NormTrace tr;
  tr.r_list = cfg.r_list;
  tr.steps = steps;
  std::vector<Eigen::VectorXd> weights;
  for (double r : cfg.r_list) {
    Eigen::VectorXd w(2 * J + 1);
    for (int n = -J; n <= J; ++n) w(n + J) = std::pow(bracket(n), 2.0 * r);
    weights.push_back(w);
  }
  Vec u = to_vec(cfg.u0);
  const double l2_0 = u.norm();
  for (const auto& w : weights) tr.initial.push_back(weighted_norm(u, w));
  tr.ratio_max.assign(weights.size(), 1.0);
  tr.ratio_min.assign(weights.size(), 1.0);

  auto record = [&](double t) {
    tr.times.push_back(t);
    std::vector<double> row;
    for (const auto& w : weights) row.push_back(weighted_norm(u, w));
    tr.norms.push_back(std::move(row));
    if (observer) observer(t, u);
  };
  record(0.0);
  for (long k = 0; k < steps; ++k) {
    prop.step(u, k * h, h);
    tr.l2_drift = std::max(tr.l2_drift, std::abs(u.norm() - l2_0));
    for (std::size_t q = 0; q < weights.size(); ++q) {
      if (tr.initial[q] == 0.0) continue;
      const double ratio = weighted_norm(u, weights[q]) / tr.initial[q];
      tr.ratio_max[q] = std::max(tr.ratio_max[q], ratio);
      tr.ratio_min[q] = std::min(tr.ratio_min[q], ratio);
    }
    if ((k + 1) % cfg.record_every == 0 || k + 1 == steps) record((k + 1) * h);
  }
  tr.final_state = to_state(u, J);
  return tr;
}

Vec evolve_between(const BlockOperator& H, const FrequencyPoint& omega, const Vec& u, double t0,
                   double t1, double dt, int order) {
  Propagator prop(H, omega, order);
  const long steps = static_cast<long>(std::ceil(std::abs(t1 - t0) / dt - 1e-9));
  Vec v = u;
  if (steps == 0) return v;
  const double h = (t1 - t0) / steps;
  for (long k = 0; k < steps; ++k) prop.step(v, t0 + k * h, h);
  return v;
}

BoundednessResult verify_boundedness(const NormTrace& trace, std::size_t r_index, double C_bound) {
  if (r_index >= trace.r_list.size()) throw std::out_of_range("verify_boundedness: bad r index");
  BoundednessResult res;
  res.ratio_max = trace.ratio_max[r_index];
  res.ratio_min = trace.ratio_min[r_index];
  res.pass = res.ratio_max <= C_bound && res.ratio_min >= 1.0 / C_bound;
  return res;
}

Vec apply_reduced_flow(const std::vector<Mat>& Lambda, const Vec& v, double t) {
  const int J = static_cast<int>(Lambda.size()) - 1;
  Vec out = v;
  for (int j = 0; j <= J; ++j) {
    const SmallEigen e = hermitian_eigen(Lambda[j]);
    const BlockRows rows = block_rows(J, j);
    Eigen::Vector2cd x = Eigen::Vector2cd::Zero();
    for (int a = 0; a < rows.size; ++a) x(a) = v(rows.r[a]);
    const auto U = e.U.topLeftCorner(rows.size, rows.size);
    Eigen::VectorXcd y = U.adjoint() * x.head(rows.size);
    for (int a = 0; a < rows.size; ++a) y(a) *= std::polar(1.0, -e.lambda[a] * t);
    y = U * y;
    for (int a = 0; a < rows.size; ++a) out(rows.r[a]) = y(a);
  }
  return out;
}

ConjugacyResult verify_conjugacy(const RegularizationState& reg, const KamState& kam,
                                 const BlockOperator& H, const EvolutionConfig& cfg) {
  const int d = H.truncation().d;
  const Vec u0 = to_vec(cfg.u0);
  const double n0 = u0.norm();
  const std::vector<double> theta0(d, 0.0);
  const Vec v0 = compose_transformations(reg, kam, theta0).adjoint() * u0;
  ConjugacyResult res;
  evolve(H, kam.omega, cfg, [&](double t, const Vec& u) {
    std::vector<double> theta(d);
    for (int c = 0; c < d; ++c) theta[c] = std::fmod(kam.omega.omega[c] * t, 2.0 * std::numbers::pi);
    const Vec ured = compose_transformations(reg, kam, theta) * apply_reduced_flow(kam.Lambda, v0, t);
    const double err = n0 > 0.0 ? (ured - u).norm() / n0 : 0.0;
    res.times.push_back(t);
    res.errors.push_back(err);
    res.max_error = std::max(res.max_error, err);
  });
  return res;
}

BlockOperator original_hamiltonian(const BlockOperator& W0, double epsilon, double m_mass,
                                   TorusMode mode, const FrequencyPoint& omega) {
  BlockOperator H = unperturbed_operator(W0.truncation(), m_mass, mode, omega);
  H.add_scaled(epsilon, W0);
  return H;
}

}  // namespace relkam
