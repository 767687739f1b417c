#include "measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "errors.hpp"
#include "parallel.hpp"

namespace relkam {
namespace {

constexpr double kNodeOffset = 0.6180339887498949;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double sample_stderr(double f, long n) { return n > 0 ? std::sqrt(f * (1.0 - f) / n) : 0.0; }

struct LinearFit {
  double slope = 0.0, intercept = 0.0, slope_stderr = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  const std::size_t n = x.size();
  if (n < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      ssr += r * r;
    }
    f.slope_stderr = std::sqrt(ssr / (n - 2) / sxx);
  }
  return f;
}

// Index of the node interval used for interpolation along one axis and the
// local coordinate t (may leave [0,1] at the ends: linear extrapolation).
std::pair<std::size_t, double> locate(const std::vector<double>& coords, double x) {
  if (coords.size() == 1) return {0, 0.0};
  std::size_t i = 0;
  while (i + 2 < coords.size() && x > coords[i + 1]) ++i;
  return {i, (x - coords[i]) / (coords[i + 1] - coords[i])};
}

}  // namespace

double uniform01(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t z = splitmix64(seed ^ splitmix64(counter));
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

std::size_t OmegaSampler::size(int dims) const {
  if (count < 1) throw std::invalid_argument("sampler: count must be >= 1");
  if (mode == SamplerMode::monte_carlo) return static_cast<std::size_t>(count);
  std::size_t n = 1;
  for (int c = 0; c < dims; ++c) n *= static_cast<std::size_t>(count);
  return n;
}

std::vector<double> OmegaSampler::point(std::size_t idx, int dims) const {
  std::vector<double> p(dims);
  if (mode == SamplerMode::monte_carlo) {
    for (int c = 0; c < dims; ++c)
      p[c] = 1.0 + uniform01(seed, static_cast<std::uint64_t>(idx) * dims + c);
    return p;
  }
  std::size_t rem = idx;
  for (int c = dims - 1; c >= 0; --c) {
    p[c] = 1.0 + (static_cast<double>(rem % count) + 0.5) / count;
    rem /= count;
  }
  return p;
}

double omega0_critical_alpha(const std::vector<double>& point, int d, bool beta, int ell_max,
                             int m_max) {
  const double v = beta ? point[d] : 1.0;
  const std::vector<double> omega(point.begin(), point.begin() + d);
  const AngleLattice box(d, ell_max);
  double crit = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < box.size(); ++l) {
    const double w = box.dot(omega, l);
    const int sup = box.sup_norm(l);
    const long m0 = std::lround(-w / v);
    for (long dm = -2; dm <= 2; ++dm) {
      const long m = std::clamp<long>(m0 + dm, -m_max, m_max);
      if (sup == 0 && m == 0) continue;
      const double unit = beta ? std::pow(static_cast<double>(sup + std::abs(m)), -(d + 1))
                               : 1.0 / (1.0 + std::pow(static_cast<double>(sup), d + 2));
      crit = std::min(crit, std::abs(w + v * m) / unit);
    }
  }
  return crit;
}

ExclusionReport measure_omega0(const std::vector<double>& alphas, const OmegaSampler& sampler,
                               int d, bool beta, int ell_max, int m_max) {
  const int dims = d + (beta ? 1 : 0);
  const std::size_t n = sampler.size(dims);
  std::vector<double> crit(n);
  parallel_for(n, [&](std::size_t i) {
    crit[i] = omega0_critical_alpha(sampler.point(i, dims), d, beta, ell_max, m_max);
  });
  ExclusionReport rep;
  rep.alpha_values = alphas;
  rep.seed = sampler.seed;
  rep.ell_max = ell_max;
  rep.m_max = m_max;
  rep.samples = static_cast<long>(n);
  for (double a : alphas) {
    long bad = 0;
    for (double c : crit)
      if (c < a) ++bad;
    const double f = static_cast<double>(bad) / n;
    rep.fractions.push_back(f);
    rep.stderrs.push_back(sample_stderr(f, static_cast<long>(n)));
  }
  if (alphas.size() >= 3) {
    const ScalingFit fit = fit_scaling(rep);
    rep.fit_slope = fit.slope;
    rep.slope_stderr = fit.slope_stderr;
    rep.exponent = fit.exponent;
  }
  return rep;
}

ScalingFit fit_scaling(const ExclusionReport& report) {
  if (report.alpha_values.size() < 3 || report.fractions.size() != report.alpha_values.size())
    throw std::invalid_argument("fit_scaling: need at least three alpha values");
  ScalingFit out;
  const LinearFit lin = linear_fit(report.alpha_values, report.fractions);
  out.slope = lin.slope;
  out.slope_stderr = lin.slope_stderr;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < report.alpha_values.size(); ++i)
    if (report.fractions[i] > 0.0 && report.alpha_values[i] > 0.0) {
      lx.push_back(std::log(report.alpha_values[i]));
      ly.push_back(std::log(report.fractions[i]));
    }
  if (lx.size() >= 2) out.exponent = linear_fit(lx, ly).slope;
  return out;
}

EigenModel EigenModel::build(const EigenProvider& provider, int d, int nodes_per_dim, int steps) {
  if (nodes_per_dim < 1) throw std::invalid_argument("eigen model: need at least one node");
  EigenModel m;
  m.d_ = d;
  m.steps_ = steps;
  m.n_ = nodes_per_dim;
  for (int i = 0; i < nodes_per_dim; ++i) m.coords_.push_back(1.0 + (i + kNodeOffset) / nodes_per_dim);
  std::size_t total = 1;
  for (int c = 0; c < d; ++c) total *= static_cast<std::size_t>(nodes_per_dim);
  std::vector<std::optional<std::vector<std::vector<double>>>> raw(total);
  parallel_for(total, [&](std::size_t p) {
    FrequencyPoint w;
    w.omega.resize(d);
    std::size_t rem = p;
    for (int c = d - 1; c >= 0; --c) {
      w.omega[c] = m.coords_[rem % nodes_per_dim];
      rem /= nodes_per_dim;
    }
    try {
      raw[p] = provider(w);
    } catch (const ResonanceError&) {
      raw[p].reset();
    } catch (const DivergenceError&) {
      raw[p].reset();
    }
    if (raw[p] && static_cast<int>(raw[p]->size()) < steps) raw[p].reset();
  });
  std::vector<std::size_t> good;
  for (std::size_t p = 0; p < total; ++p)
    if (raw[p]) good.push_back(p);
  if (good.empty()) throw Error(ErrorKind::resonance, "eigen model: every grid node failed");
  m.failed_ = static_cast<int>(total - good.size());
  if (d == 1) {
    std::vector<double> coords;
    for (std::size_t p : good) {
      coords.push_back(m.coords_[p]);
      m.table_.push_back(*raw[p]);
    }
    m.coords_ = coords;
    m.n_ = static_cast<int>(coords.size());
  } else {
    // Failed nodes borrow the nearest successful node so the grid stays full.
    for (std::size_t p = 0; p < total; ++p) {
      if (raw[p]) {
        m.table_.push_back(*raw[p]);
        continue;
      }
      std::size_t best = good.front();
      double bestd = std::numeric_limits<double>::infinity();
      for (std::size_t q : good) {
        double dist = 0;
        std::size_t a = p, b = q;
        for (int c = 0; c < d; ++c) {
          const double diff = m.coords_[a % nodes_per_dim] - m.coords_[b % nodes_per_dim];
          dist += diff * diff;
          a /= nodes_per_dim;
          b /= nodes_per_dim;
        }
        if (dist < bestd) {
          bestd = dist;
          best = q;
        }
      }
      m.table_.push_back(*raw[best]);
    }
  }
  m.J_ = (static_cast<int>(m.table_.front().front().size()) - 1) / 2;
  return m;
}

EigenModel EigenModel::constant(int d, std::vector<std::vector<double>> per_step) {
  EigenModel m;
  m.d_ = d;
  m.steps_ = static_cast<int>(per_step.size());
  m.n_ = 1;
  m.coords_ = {1.5};
  m.table_.push_back(std::move(per_step));
  m.J_ = (static_cast<int>(m.table_.front().front().size()) - 1) / 2;
  return m;
}

std::vector<double> EigenModel::eigenvalues(const std::vector<double>& omega, int step) const {
  if (step < 0 || step >= steps_) throw std::out_of_range("eigen model: step out of range");
  if (static_cast<int>(omega.size()) < d_) throw std::invalid_argument("eigen model: bad point");
  if (n_ == 1) return table_.front()[step];
  // Multilinear interpolation over the 2^d corners of the enclosing cell.
  std::vector<std::pair<std::size_t, double>> loc(d_);
  for (int c = 0; c < d_; ++c) loc[c] = locate(coords_, omega[c]);
  const std::size_t width = table_.front()[step].size();
  std::vector<double> out(width, 0.0);
  for (unsigned corner = 0; corner < (1u << d_); ++corner) {
    double weight = 1.0;
    std::size_t idx = 0;
    for (int c = 0; c < d_; ++c) {
      const bool hi = (corner >> (d_ - 1 - c)) & 1u;
      weight *= hi ? loc[c].second : 1.0 - loc[c].second;
      idx = idx * n_ + loc[c].first + (hi ? 1 : 0);
    }
    const auto& vals = table_[idx][step];
    for (std::size_t k = 0; k < width; ++k) out[k] += weight * vals[k];
  }
  return out;
}

namespace {

bool fails_step(const std::vector<double>& omega, const std::vector<double>& lam, int J, long N,
                const KamParams& params, double alpha, int box) {
  const int d = static_cast<int>(omega.size());
  auto at = [&](int j, int v) { return j == 0 ? lam[0] : lam[1 + 2 * (j - 1) + v]; };
  const double Ntau = std::pow(static_cast<double>(N), params.tau);
  std::vector<double> bi(J + 1);
  for (int j = 0; j <= J; ++j) bi[j] = std::pow(bracket(j), params.sigma);
  std::optional<AngleLattice> lat;
  if (d > 1) lat.emplace(d, box);
  for (int i = 0; i <= J; ++i)
    for (int j = 0; j <= J; ++j) {
      const double thr = alpha / (Ntau * bi[i] * bi[j]);
      for (int v = 0; v < (i == 0 ? 1 : 2); ++v)
        for (int w = 0; w < (j == 0 ? 1 : 2); ++w) {
          const double delta = at(i, v) - at(j, w);
          if (d == 1) {
            long l0 = std::clamp<long>(std::lround(-delta / omega[0]), -box, box);
            if (l0 == 0 && i == j) {
              // (0, i, i) is excluded; the nearest admissible ℓ is ±1.
              if (box < 1) continue;
              if (std::abs(omega[0] + delta) < thr || std::abs(-omega[0] + delta) < thr)
                return true;
              continue;
            }
            if (std::abs(omega[0] * l0 + delta) < thr) return true;
          } else {
            for (std::size_t l = 0; l < lat->size(); ++l) {
              if (l == lat->zero() && i == j) continue;
              if (std::abs(lat->dot(omega, l) + delta) < thr) return true;
            }
          }
        }
    }
  return false;
}

}  // namespace

std::vector<StepFraction> measure_kam_steps(const EigenModel& model, const KamParams& params,
                                            double alpha, const OmegaSampler& sampler,
                                            int ell_box) {
  const int d = model.d();
  const int steps = model.steps();
  const auto sched = params.schedule(std::max(steps, 1));
  const std::size_t n = sampler.size(d);
  std::vector<std::vector<char>> flags(n, std::vector<char>(steps, 0));
  parallel_for(n, [&](std::size_t s) {
    const auto omega = sampler.point(s, d);
    for (int k = 0; k < steps; ++k) {
      const int box = static_cast<int>(std::min<long>(sched[k], ell_box));
      flags[s][k] = fails_step(omega, model.eigenvalues(omega, k), model.J(), sched[k], params,
                               alpha, box);
    }
  });
  std::vector<StepFraction> out;
  std::vector<char> seen(n, 0);
  for (int k = 0; k < steps; ++k) {
    long bad = 0, fresh = 0, cum = 0;
    for (std::size_t s = 0; s < n; ++s) {
      if (flags[s][k]) {
        ++bad;
        if (!seen[s]) ++fresh;
        seen[s] = 1;
      }
      if (seen[s]) ++cum;
    }
    StepFraction f;
    f.k = k;
    f.N = sched[k];
    f.fraction = static_cast<double>(bad) / n;
    f.stderr_ = sample_stderr(f.fraction, static_cast<long>(n));
    f.newly = static_cast<double>(fresh) / n;
    f.cumulative = static_cast<double>(cum) / n;
    f.alpha_over_N = alpha / static_cast<double>(sched[k]);
    out.push_back(f);
  }
  return out;
}

double measure_kam_step(const EigenModel& model, const KamParams& params, int k, double alpha,
                        const OmegaSampler& sampler, int ell_box) {
  const auto all = measure_kam_steps(model, params, alpha, sampler, ell_box);
  return all.at(k).fraction;
}

}  // namespace relkam
