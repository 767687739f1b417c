#include "kam.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "errors.hpp"
#include "parallel.hpp"

namespace relkam {
namespace {

std::string tuple_string(const std::vector<int>& ell, int i, int j) {
  std::string s = "l=(";
  for (std::size_t c = 0; c < ell.size(); ++c) s += (c ? "," : "") + std::to_string(ell[c]);
  return s + ") i=" + std::to_string(i) + " j=" + std::to_string(j);
}

double lambda_defect(const std::vector<Mat>& Lambda) {
  double d = 0.0;
  for (const auto& b : Lambda) d = std::max(d, (b - b.adjoint()).cwiseAbs().maxCoeff());
  return d;
}

NormRecord record_for(const KamState& s, const KamParams& p, long N) {
  const int d = s.P.truncation().d;
  NormRecord r;
  r.k = s.k;
  r.N = N;
  r.low = decay_norm(s.P, p.low_norm(d));
  r.high = decay_norm(s.P, p.high_norm(d));
  r.hermiticity = std::max(hermiticity_defect(s.P), lambda_defect(s.Lambda));
  r.gap = eigen_gap(s);
  return r;
}

}  // namespace

void KamParams::validate(int d) const {
  if (!(tau > d + 1)) throw ConfigError("kam.tau", "must exceed d+1");
  if (!(sigma > 1)) throw ConfigError("kam.sigma", "must exceed 1");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("kam.alpha", "must lie in (0,1)");
  if (!(N0 > 1)) throw ConfigError("kam.N0", "must exceed 1");
  if (K_steps < 0) throw ConfigError("kam.K_steps", "must be >= 0");
  if (lie_order < 4) throw ConfigError("kam.lie_order", "must be >= 4");
  if (!(gate_constant >= 0)) throw ConfigError("kam.gate_constant", "must be >= 0");
}

std::vector<long> KamParams::schedule(int count) const {
  std::vector<long> out;
  double expo = 1.0;
  for (int k = 0; k < count; ++k) {
    long n = std::llround(std::pow(N0, expo));
    if (!out.empty()) n = std::max(n, out.back() + 1);
    out.push_back(n);
    expo *= 1.5;
  }
  return out;
}

void refresh_eigen_table(KamState& s) {
  s.eigen_table.clear();
  for (const auto& b : s.Lambda) s.eigen_table.push_back(hermitian_eigen(b));
}

double eigen_gap(const KamState& s) {
  double gap = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(s.eigen_table.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int v = 0; v < s.eigen_table[i].size; ++v)
        for (int w = 0; w < s.eigen_table[j].size; ++w)
          gap = std::min(gap, std::abs(s.eigen_table[i].lambda[v] - s.eigen_table[j].lambda[w]) /
                                  (j - i));
  return gap;
}

KamState kam_state_from(std::vector<Mat> Lambda, BlockOperator P, const FrequencyPoint& omega,
                        const KamParams& params) {
  const int J = P.truncation().J;
  if (static_cast<int>(Lambda.size()) != J + 1)
    throw std::invalid_argument("kam state: expected J+1 diagonal blocks");
  for (int j = 0; j <= J; ++j)
    if (Lambda[j].rows() != (j == 0 ? 1 : 2) || Lambda[j].cols() != Lambda[j].rows())
      throw std::invalid_argument("kam state: diagonal block has the wrong shape");
  KamState s;
  s.k = 0;
  s.Lambda = std::move(Lambda);
  s.P = std::move(P);
  s.omega = omega;
  refresh_eigen_table(s);
  s.norm_history.push_back(record_for(s, params, params.schedule(1)[0]));
  return s;
}

KamState initial_kam_state(const RegularizationState& reg, const KamParams& params) {
  const Truncation& t = reg.W.truncation();
  BlockOperator L0 = unperturbed_operator(t, reg.m_mass, reg.mode, reg.omega);
  L0.add_scaled(reg.epsilon, reg.Z);
  std::vector<Mat> Lambda;
  for (int j = 0; j <= t.J; ++j) Lambda.push_back(L0.block(L0.lattice().zero(), j, j));
  BlockOperator P = reg.W;
  P *= reg.epsilon;
  return kam_state_from(std::move(Lambda), std::move(P), reg.omega, params);
}

double kam_threshold(const KamParams& p, long N, int i, int j) {
  return p.alpha /
         (std::pow(static_cast<double>(N), p.tau) * std::pow(bracket(i) * bracket(j), p.sigma));
}

ResonanceCertificate resonance_check(const KamState& s, const KamParams& params) {
  const Truncation& t = s.P.truncation();
  const long N = params.schedule(s.k + 1)[s.k];
  const int box = static_cast<int>(std::min<long>(N, t.L));
  AngleLattice lat(t.d, box);
  ResonanceCertificate cert;
  cert.min_ratio = std::numeric_limits<double>::infinity();
  cert.min_margin = std::numeric_limits<double>::infinity();
  const int J = t.J;
  for (std::size_t l = 0; l < lat.size(); ++l) {
    const double wl = lat.dot(s.omega.omega, l);
    const bool zero = l == lat.zero();
    for (int i = 0; i <= J; ++i)
      for (int j = 0; j <= J; ++j) {
        if (zero && i == j) continue;
        const double thr = kam_threshold(params, N, i, j);
        const SmallEigen &ei = s.eigen_table[i], &ej = s.eigen_table[j];
        for (int v = 0; v < ei.size; ++v)
          for (int w = 0; w < ej.size; ++w) {
            ++cert.conditions_checked;
            const double div = std::abs(wl + ei.lambda[v] - ej.lambda[w]);
            const double ratio = div / thr;
            if (ratio < cert.min_ratio) {
              cert.min_ratio = ratio;
              cert.min_margin = div;
              cert.worst_ell = lat.ell_vector(l);
              cert.worst_i = i;
              cert.worst_j = j;
              cert.worst_v = v;
              cert.worst_w = w;
            }
            if (!(ratio >= 1.0)) cert.ok = false;
          }
      }
  }
  return cert;
}

BlockOperator solve_homological_kam(const KamState& s, const KamParams& params) {
  const Truncation& t = s.P.truncation();
  const int J = t.J;
  const long N = params.schedule(s.k + 1)[s.k];
  const AngleLattice& lat = s.P.lattice();
  struct Failure {
    bool hit = false;
    int i = 0, j = 0;
    double div = 0.0, thr = 0.0;
  };
  std::vector<Mat> out(s.P.slice_count());
  std::vector<Failure> fail(s.P.slice_count());
  parallel_for(s.P.slice_count(), [&](std::size_t l) {
    if (!s.P.has_slice(l) || lat.sup_norm(l) >= N) return;
    const double wl = lat.dot(s.omega.omega, l);
    const bool zero = l == lat.zero();
    const Mat& p = s.P.slice(l);
    Mat g = Mat::Zero(t.modes(), t.modes());
    for (int i = 0; i <= J; ++i) {
      const BlockRows ri = block_rows(J, i);
      const SmallEigen& ei = s.eigen_table[i];
      for (int j = std::max(0, i - static_cast<int>(N) + 1); j <= J && j - i < N; ++j) {
        if (zero && i == j) continue;
        const BlockRows rj = block_rows(J, j);
        const SmallEigen& ej = s.eigen_table[j];
        Eigen::Matrix2cd pb = Eigen::Matrix2cd::Zero();
        bool any = false;
        for (int a = 0; a < ri.size; ++a)
          for (int c = 0; c < rj.size; ++c) {
            pb(a, c) = p(ri.r[a], rj.r[c]);
            any = any || pb(a, c) != cplx(0.0);
          }
        if (!any) continue;
        const auto Ui = ei.U.topLeftCorner(ri.size, ri.size);
        const auto Uj = ej.U.topLeftCorner(rj.size, rj.size);
        Mat pt = Ui.adjoint() * pb.topLeftCorner(ri.size, rj.size) * Uj;
        const double thr = kam_threshold(params, N, i, j);
        for (int v = 0; v < ri.size; ++v)
          for (int w = 0; w < rj.size; ++w) {
            const double div = wl + ei.lambda[v] - ej.lambda[w];
            if (div == 0.0 || std::abs(div) < thr) {
              if (!fail[l].hit) fail[l] = {true, i, j, div, thr};
              pt(v, w) = 0.0;
              continue;
            }
            pt(v, w) /= cplx(0.0, div);
          }
        const Mat gb = Ui * pt * Uj.adjoint();
        for (int a = 0; a < ri.size; ++a)
          for (int c = 0; c < rj.size; ++c) g(ri.r[a], rj.r[c]) = gb(a, c);
      }
    }
    out[l] = std::move(g);
  });
  for (std::size_t l = 0; l < fail.size(); ++l)
    if (fail[l].hit) {
      const auto ell = lat.ell_vector(l);
      throw ResonanceError("KAM homological equation: divisor " + std::to_string(fail[l].div) +
                               " below threshold " + std::to_string(fail[l].thr) + " at " +
                               tuple_string(ell, fail[l].i, fail[l].j),
                           ell, fail[l].i, fail[l].j, fail[l].div, fail[l].thr);
    }
  BlockOperator G(t);
  for (std::size_t l = 0; l < out.size(); ++l)
    if (out[l].size() != 0) G.set_slice(l, std::move(out[l]));
  G.prune();
  return G;
}

BlockOperator homological_kam_residual(const KamState& s, const BlockOperator& G,
                                       const KamParams& params) {
  const Truncation& t = s.P.truncation();
  const long N = params.schedule(s.k + 1)[s.k];
  BlockOperator Lam(t);
  for (int j = 0; j <= t.J; ++j) Lam.set_block(Lam.lattice().zero(), j, j, s.Lambda[j]);
  BlockOperator r = omega_derivative(G, s.omega);
  r.add_scaled(cplx(0.0, 1.0), commutator(Lam, G));
  r -= cutoff(s.P, static_cast<int>(std::min<long>(N, 1L << 30))).head;
  r += diagonal_average(s.P);
  return r;
}

KamState kam_step(const KamState& s, const KamParams& params) {
  const Truncation& t = s.P.truncation();
  const auto sched = params.schedule(s.k + 2);
  const long N = sched[s.k];
  KamState next = s;
  next.k = s.k + 1;
  if (s.P.is_zero()) {
    next.G_log.push_back(BlockOperator(t));
    next.norm_history.push_back(record_for(next, params, sched[s.k + 1]));
    return next;
  }
  const BlockOperator G = solve_homological_kam(s, params);
  const BlockOperator Pbar = diagonal_average(s.P);
  const std::size_t z = Pbar.lattice().zero();
  for (int j = 0; j <= t.J; ++j) next.Lambda[j] = s.Lambda[j] + Pbar.block(z, j, j);

  const int Ncut = static_cast<int>(std::min<long>(N, 1L << 30));
  CutoffParts parts = cutoff(s.P, Ncut);
  LieOptions opt;
  opt.order = params.lie_order;
  opt.monitor = {KamParams::s0(t.d), 0.0, 0.0};
  const LieSeriesResult s1 = lie_series(G, s.P, exp_coefficients(params.lie_order, 1), opt);
  const LieSeriesResult s2 =
      lie_series(G, Pbar - parts.head, integral_coefficients(params.lie_order, 1), opt);
  next.P = std::move(parts.tail);
  next.P += s1.value;
  next.P += s2.value;
  next.P.prune();
  next.G_log.push_back(G);
  refresh_eigen_table(next);
  next.norm_history.push_back(record_for(next, params, sched[s.k + 1]));
  return next;
}

std::optional<double> fit_decay_exponent(const std::vector<NormRecord>& history) {
  std::vector<double> xs, ys;
  for (std::size_t k = 1; k < history.size(); ++k) {
    if (!(history[k].low > 0.0)) continue;
    xs.push_back(std::log(static_cast<double>(history[k - 1].N)));
    ys.push_back(std::log(history[k].low));
  }
  if (xs.size() < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return -sxy / sxx;
}

KamRun kam_iterate(const KamState& state0, const KamParams& params) {
  const Truncation& t = state0.P.truncation();
  params.validate(t.d);
  KamRun run{state0, {}};
  const double expo = 2 * params.tau + 2 * params.sigma + 2 + params.a_decay();
  run.report.gate_value = std::pow(params.N0, expo) * state0.norm_history.front().low;
  if (params.gate_constant > 0.0 && !(params.gate_constant * run.report.gate_value <= 0.5))
    throw DivergenceError("KAM smallness gate fails: C*N0^" + std::to_string(expo) +
                          "*|P0| = " + std::to_string(params.gate_constant * run.report.gate_value));
  const double grow = 2 * params.tau + 2 * params.sigma + 2;
  for (int k = 0; k < params.K_steps; ++k) {
    const ResonanceCertificate cert = resonance_check(run.state, params);
    if (!cert.ok) {
      run.report.failure = cert;
      run.report.failed_step = run.state.k;
      run.report.fitted_exponent = fit_decay_exponent(run.state.norm_history);
      return run;
    }
    KamState next = kam_step(run.state, params);
    KamStepReport rep;
    rep.k = run.state.k;
    rep.N = run.state.norm_history.back().N;
    rep.margin = cert.min_margin;
    rep.margin_ratio = cert.min_ratio;
    const NormSpec s0spec{KamParams::s0(t.d), 0.0, 0.0};
    rep.G_norm = decay_norm(next.G_log.back(), s0spec);
    const double pn = decay_norm(run.state.P, s0spec);
    rep.G_ratio = pn > 0.0 ? rep.G_norm / (std::pow(static_cast<double>(rep.N), grow) * pn) : 0.0;
    run.report.steps.push_back(rep);
    run.state = std::move(next);
  }
  run.report.completed = true;
  run.report.fitted_exponent = fit_decay_exponent(run.state.norm_history);
  return run;
}

BlockOperator transform_hamiltonian(const BlockOperator& G, const BlockOperator& H,
                                    const FrequencyPoint& omega, int lie_order) {
  LieOptions opt;
  opt.order = lie_order;
  opt.monitor = {KamParams::s0(H.truncation().d), 0.0, 0.0};
  BlockOperator out = exp_conjugate(G, H, opt).value;
  const BlockOperator Gdot = omega_derivative(G, omega);
  out -= lie_series(G, Gdot, integral_coefficients(lie_order), opt).value;
  return out;
}

Mat unitary_exp(const Mat& A) {
  const Mat h = 0.5 * (A + A.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  const Eigen::VectorXd& lam = es.eigenvalues();
  Vec ph(lam.size());
  for (Eigen::Index k = 0; k < lam.size(); ++k) ph(k) = std::polar(1.0, -lam(k));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

Mat compose_transformations(const RegularizationState& reg, const KamState& kam,
                            const std::vector<double>& theta) {
  const int n = kam.P.modes();
  Mat N = Mat::Identity(n, n);
  for (const auto& B : reg.B_log) N = N * unitary_exp(reg.epsilon * B.evaluate(theta));
  for (const auto& G : kam.G_log) N = N * unitary_exp(G.evaluate(theta));
  return N;
}

TransformBounds transformation_bounds(const RegularizationState& reg, const KamState& kam,
                                      double r, int points_per_dim) {
  const Truncation& t = kam.P.truncation();
  std::size_t total = 1;
  for (int c = 0; c < t.d; ++c) total *= static_cast<std::size_t>(points_per_dim);
  Eigen::VectorXd w(t.modes());
  for (int m = -t.J; m <= t.J; ++m) w(m + t.J) = std::pow(bracket(m), r);
  std::vector<TransformBounds> per(total);
  parallel_for(total, [&](std::size_t p) {
    std::vector<double> theta(t.d);
    std::size_t rem = p;
    for (int c = t.d - 1; c >= 0; --c) {
      theta[c] = 2.0 * 3.14159265358979323846 * static_cast<double>(rem % points_per_dim) /
                 points_per_dim;
      rem /= points_per_dim;
    }
    const Mat N = compose_transformations(reg, kam, theta);
    const Mat Ni = N.adjoint();
    const Mat a = w.asDiagonal() * N * w.cwiseInverse().asDiagonal();
    const Mat b = w.asDiagonal() * Ni * w.cwiseInverse().asDiagonal();
    TransformBounds tb;
    tb.sup_norm = Eigen::BDCSVD<Mat>(a).singularValues()(0);
    tb.sup_inverse = Eigen::BDCSVD<Mat>(b).singularValues()(0);
    tb.unitarity = (Ni * N - Mat::Identity(t.modes(), t.modes())).cwiseAbs().maxCoeff();
    per[p] = tb;
  });
  TransformBounds out;
  for (const auto& tb : per) {
    out.sup_norm = std::max(out.sup_norm, tb.sup_norm);
    out.sup_inverse = std::max(out.sup_inverse, tb.sup_inverse);
    out.unitarity = std::max(out.unitarity, tb.unitarity);
  }
  out.C_bound = out.sup_norm * out.sup_inverse;
  return out;
}

}  // namespace relkam
