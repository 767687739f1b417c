#include "regularization.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "errors.hpp"
#include "hermitian2.hpp"
#include "parallel.hpp"

namespace relkam {
namespace {

double s0_of(const Truncation& t) { return (t.d + 3) / 2.0; }

double reg_threshold(double alpha0, int ell_sup, int k, int d, bool beta) {
  if (beta) return alpha0 / std::pow(static_cast<double>(ell_sup + std::abs(k)), d + 1);
  return alpha0 / (1.0 + std::pow(static_cast<double>(ell_sup), d + 2));
}

std::string ell_string(const std::vector<int>& ell) {
  std::string s = "(";
  for (std::size_t c = 0; c < ell.size(); ++c) s += (c ? "," : "") + std::to_string(ell[c]);
  return s + ")";
}

DecayEntry decay_entry(const RegularizationState& s, double remainder) {
  const double s0 = s0_of(s.W.truncation());
  DecayEntry e;
  e.step = s.step;
  e.norm_s0 = decay_norm(s.W, {s0, 0.0, 0.0});
  e.weighted = decay_norm(s.W, {s0, 0.0, 0.5 * s.step - 0.5});
  e.hermiticity = std::max(hermiticity_defect(s.Z), hermiticity_defect(s.W));
  e.lie_remainder = remainder;
  return e;
}

}  // namespace

void RegParams::validate() const {
  if (M < 1) throw ConfigError("reg.M", "must be >= 1");
  if (lie_order < 4) throw ConfigError("reg.lie_order", "must be >= 4");
  if (!(alpha0 >= 0.0)) throw ConfigError("reg.alpha0", "must be >= 0");
  if (!(c2_tolerance >= 0.0)) throw ConfigError("reg.c2_tolerance", "must be >= 0");
}

BlockOperator unperturbed_operator(const Truncation& t, double m_mass, TorusMode mode,
                                   const FrequencyPoint& omega) {
  const std::optional<double> v =
      mode == TorusMode::beta_torus ? std::optional<double>(omega.speed()) : std::nullopt;
  return BlockOperator::multiplier(
      t, [&](int n) { return multiplier_K(n, t.J, v) + multiplier_Q(n, t.J, m_mass, v); });
}

BlockOperator kappa_theta_average(const BlockOperator& W) {
  BlockOperator out(W.truncation());
  const std::size_t z = W.lattice().zero();
  if (!W.has_slice(z)) return out;
  const int J = W.truncation().J;
  Mat s = Mat::Zero(W.modes(), W.modes());
  for (int n = -J; n <= J; ++n)
    for (int m : {n, -n}) s(n + J, m + J) = W.slice(z)(n + J, m + J);
  out.set_slice(z, std::move(s));
  return out;
}

bool commutes_with_K(const BlockOperator& A) {
  const int J = A.truncation().J;
  for (std::size_t l = 0; l < A.slice_count(); ++l) {
    if (!A.has_slice(l)) continue;
    const Mat& s = A.slice(l);
    for (int n = -J; n <= J; ++n)
      for (int m = -J; m <= J; ++m) {
        if (s(n + J, m + J) == cplx(0.0)) continue;
        if (l != A.lattice().zero() || std::abs(n) != std::abs(m)) return false;
      }
  }
  return true;
}

Omega0Check check_omega0(const FrequencyPoint& omega, double alpha0, int ell_max, int m_max) {
  const int d = omega.d();
  const bool beta = omega.v.has_value();
  const double v = omega.speed();
  AngleLattice box(d, ell_max);
  Omega0Check res;
  res.min_margin = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < box.size(); ++l) {
    const double w = box.dot(omega.omega, l);
    const int sup = box.sup_norm(l);
    for (int m = -m_max; m <= m_max; ++m) {
      if (sup == 0 && m == 0) continue;
      const double div = std::abs(w + v * m);
      double ratio;
      if (alpha0 > 0.0) {
        ratio = div / reg_threshold(alpha0, sup, m, d, beta);
      } else {
        ratio = div == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
      }
      if (ratio < res.min_margin) {
        res.min_margin = ratio;
        res.worst_ell = box.ell_vector(l);
        res.worst_m = m;
      }
      if (div == 0.0 || ratio < 1.0) res.ok = false;
    }
  }
  return res;
}

BlockOperator solve_homological_reg(const BlockOperator& W, const FrequencyPoint& omega,
                                    double alpha0, TorusMode mode) {
  const Truncation& t = W.truncation();
  if (omega.d() != t.d) throw std::invalid_argument("solve_homological_reg: dimension mismatch");
  const bool beta = mode == TorusMode::beta_torus;
  const double v = beta ? omega.speed() : 1.0;
  const int J = t.J;
  const AngleLattice& lat = W.lattice();
  struct Failure {
    bool hit = false;
    int n = 0, m = 0;
    double div = 0.0, thr = 0.0;
  };
  std::vector<Mat> out(W.slice_count());
  std::vector<Failure> fail(W.slice_count());
  parallel_for(W.slice_count(), [&](std::size_t l) {
    if (!W.has_slice(l)) return;
    const Mat& w = W.slice(l);
    const double wl = lat.dot(omega.omega, l);
    const int sup = lat.sup_norm(l);
    Mat b = Mat::Zero(t.modes(), t.modes());
    for (int n = -J; n <= J; ++n)
      for (int m = -J; m <= J; ++m) {
        const int k = std::abs(n) - std::abs(m);
        if (sup == 0 && k == 0) continue;
        const cplx num = w(n + J, m + J);
        if (num == cplx(0.0)) continue;
        const double div = wl + v * k;
        const double thr = reg_threshold(alpha0, sup, k, t.d, beta);
        if (div == 0.0 || std::abs(div) < thr) {
          if (!fail[l].hit) fail[l] = {true, n, m, div, thr};
          continue;
        }
        b(n + J, m + J) = num / cplx(0.0, div);
      }
    out[l] = std::move(b);
  });
  for (std::size_t l = 0; l < fail.size(); ++l)
    if (fail[l].hit) {
      const auto ell = lat.ell_vector(l);
      throw ResonanceError("homological equation: divisor " + std::to_string(fail[l].div) +
                               " below threshold " + std::to_string(fail[l].thr) + " at l=" +
                               ell_string(ell) + " n=" + std::to_string(fail[l].n) +
                               " m=" + std::to_string(fail[l].m),
                           ell, fail[l].n, fail[l].m, fail[l].div, fail[l].thr);
    }
  BlockOperator B(t);
  for (std::size_t l = 0; l < out.size(); ++l)
    if (out[l].size() != 0) B.set_slice(l, std::move(out[l]));
  B.prune();
  return B;
}

BlockOperator homological_reg_residual(const BlockOperator& B, const BlockOperator& W,
                                       const FrequencyPoint& omega, TorusMode mode) {
  const Truncation& t = B.truncation();
  const std::optional<double> v =
      mode == TorusMode::beta_torus ? std::optional<double>(omega.speed()) : std::nullopt;
  const BlockOperator K = BlockOperator::multiplier(t, [&](int n) { return multiplier_K(n, t.J, v); });
  BlockOperator r = omega_derivative(B, omega);
  r.add_scaled(cplx(0.0, 1.0), commutator(K, B));
  r -= W;
  r += kappa_theta_average(W);
  return r;
}

RegularizationState initial_regularization_state(const BlockOperator& W0,
                                                 const FrequencyPoint& omega, double epsilon,
                                                 double m_mass, TorusMode mode) {
  RegularizationState s;
  s.step = 0;
  s.Z = BlockOperator(W0.truncation());
  s.W = epsilon == 0.0 ? BlockOperator(W0.truncation()) : W0;
  s.epsilon = epsilon;
  s.omega = omega;
  s.m_mass = m_mass;
  s.mode = mode;
  s.decay_report.push_back(decay_entry(s, 0.0));
  return s;
}

RegularizationState regularization_step(const RegularizationState& state, const RegParams& params) {
  RegularizationState next = state;
  next.step = state.step + 1;
  const Truncation& t = state.W.truncation();
  if (state.epsilon == 0.0 || state.W.is_zero()) {
    next.W = BlockOperator(t);
    next.B_log.push_back(BlockOperator(t));
    next.decay_report.push_back(decay_entry(next, 0.0));
    return next;
  }
  const double eps = state.epsilon;
  const BlockOperator Wbar = kappa_theta_average(state.W);
  BlockOperator B = solve_homological_reg(state.W, state.omega, params.alpha0, params.mode);

  const std::optional<double> v = params.mode == TorusMode::beta_torus
                                      ? std::optional<double>(state.omega.speed())
                                      : std::nullopt;
  BlockOperator R = BlockOperator::multiplier(t, [&](int n) { return multiplier_Q(n, t.J, state.m_mass, v); });
  R.add_scaled(eps, state.Z);
  R.add_scaled(eps, state.W);

  const BlockOperator G = cplx(eps) * B;
  LieOptions opt;
  opt.order = params.lie_order;
  opt.monitor = {s0_of(t), 0.0, 0.0};
  const LieSeriesResult s1 = lie_series(G, R, exp_coefficients(params.lie_order, 1), opt);
  const LieSeriesResult s2 =
      lie_series(G, Wbar - state.W, integral_coefficients(params.lie_order, 1), opt);

  next.W = s1.value;
  next.W *= 1.0 / eps;
  next.W += s2.value;
  next.W.prune();
  next.Z += Wbar;
  next.Z.prune();
  next.B_log.push_back(std::move(B));
  next.decay_report.push_back(decay_entry(next, std::max(s1.remainder / eps, s2.remainder)));
  return next;
}

RegularizationState run_cascade(const BlockOperator& W0, const RegParams& params,
                                const FrequencyPoint& omega, double epsilon, double m_mass) {
  params.validate();
  omega.validate();
  validate_mass(m_mass);
  RegularizationState s = initial_regularization_state(W0, omega, epsilon, m_mass, params.mode);
  if (epsilon == 0.0) return s;
  for (int i = 0; i < params.M; ++i) {
    s = regularization_step(s, params);
    if (!commutes_with_K(s.Z)) throw std::logic_error("cascade: Z no longer commutes with K");
  }
  return s;
}

RegularizationState run_cascade(const Symbol& W0, const RegParams& params,
                                const FrequencyPoint& omega, double epsilon, double m_mass) {
  if (std::abs(W0.order() - 0.5) > 1e-12)
    throw std::invalid_argument("run_cascade: symbol must have order 1/2");
  if (params.mode == TorusMode::standard) {
    const C2Report c2 = check_condition_C2(W0);
    if (!(c2.b_bound <= params.c2_tolerance))
      throw ConfigError("symbol", "condition C2 fails (b_bound " + std::to_string(c2.b_bound) +
                                      " > " + std::to_string(params.c2_tolerance) + ")");
  }
  return run_cascade(hermitian_symmetrize(matrix_of(W0)), params, omega, epsilon, m_mass);
}

BlockOperator regularized_hamiltonian(const RegularizationState& s) {
  BlockOperator H = unperturbed_operator(s.W.truncation(), s.m_mass, s.mode, s.omega);
  H.add_scaled(s.epsilon, s.Z);
  H.add_scaled(s.epsilon, s.W);
  return H;
}

EigenAsymptotics eigenvalue_asymptotics(const RegularizationState& s, double a_coeff, int boundary) {
  const Truncation& t = s.Z.truncation();
  BlockOperator L0 = unperturbed_operator(t, s.m_mass, s.mode, s.omega);
  L0.add_scaled(s.epsilon, s.Z);
  const std::size_t z = L0.lattice().zero();
  const double v = s.mode == TorusMode::beta_torus ? s.omega.speed() : 1.0;
  EigenAsymptotics out;
  for (int j = 0; j <= t.J; ++j) {
    const SmallEigen e = hermitian_eigen(L0.block(z, j, j));
    EigenRow row;
    row.j = j;
    row.size = e.size;
    const double base = v * j + multiplier_Q(j, t.J, s.m_mass, s.mode == TorusMode::beta_torus
                                                                      ? std::optional<double>(v)
                                                                      : std::nullopt);
    for (int k = 0; k < e.size; ++k) {
      row.lambda[k] = e.lambda[k];
      row.r[k] = e.lambda[k] - base - s.epsilon * a_coeff * std::sqrt(bracket(j));
      if (j <= t.J - boundary)
        out.sup_r = std::max(out.sup_r, std::abs(row.r[k]));
      else
        out.sup_r_edge = std::max(out.sup_r_edge, std::abs(row.r[k]));
    }
    out.rows.push_back(row);
  }
  out.interior_J = std::max(0, t.J - boundary);
  out.C_r = s.epsilon == 0.0 ? 0.0 : out.sup_r / s.epsilon;
  out.c0 = std::numeric_limits<double>::infinity();
  for (const auto& a : out.rows)
    for (const auto& b : out.rows) {
      if (b.j <= a.j) continue;
      for (int p = 0; p < a.size; ++p)
        for (int q = 0; q < b.size; ++q)
          out.c0 = std::min(out.c0, std::abs(a.lambda[p] - b.lambda[q]) / (b.j - a.j));
    }
  return out;
}

}  // namespace relkam
