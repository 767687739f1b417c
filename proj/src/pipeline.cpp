#include "pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <sstream>

#include "errors.hpp"

namespace relkam {
namespace fs = std::filesystem;

namespace {

constexpr Stage kStages[] = {Stage::regularize, Stage::kam, Stage::measure, Stage::evolve,
                             Stage::verify};

// ---- config reading -------------------------------------------------------

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(join(path, it.key()), "unknown key");
}

template <class T>
T take(const json& obj, const std::string& key, T fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(join(path, key), "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
    }
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(join(path, key), "has the wrong type");
  }
}

std::vector<double> take_numbers(const json& obj, const std::string& key,
                                 std::vector<double> fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(join(path, key), "expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(join(path, key), "expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

template <class F>
void rethrow_as_config(const std::string& field, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

const char* mode_name(TorusMode m) { return m == TorusMode::beta_torus ? "beta_torus" : "standard"; }

// ---- builders ---------------------------------------------------------------

std::size_t ell_index(const AngleLattice& lat, const json& l, const std::string& field) {
  if (!l.is_array() || static_cast<int>(l.size()) != lat.d())
    throw ConfigError(field, "angle must be an integer array of length d");
  std::vector<int> ell;
  for (const auto& x : l) {
    if (!x.is_number_integer()) throw ConfigError(field, "angle must be an integer array");
    ell.push_back(x.get<int>());
  }
  const std::size_t idx = lat.index_of(ell);
  if (idx >= lat.size()) throw ConfigError(field, "angle outside |l| <= L");
  return idx;
}

Symbol symmetrized(const Symbol& a) {
  return symbol_of(hermitian_symmetrize(matrix_of(a)), a.K_x(), a.order());
}

// Random coefficient in [-amp, amp] + i[-amp, amp] from a counter stream.
cplx random_coeff(std::uint64_t seed, std::uint64_t& counter, double amp) {
  const double re = 2.0 * uniform01(seed, counter++) - 1.0;
  const double im = 2.0 * uniform01(seed, counter++) - 1.0;
  return amp * cplx(re, im);
}

// ---- output helpers ----------------------------------------------------------

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> flat_eigenvalues(const KamState& s) {
  std::vector<double> out;
  for (const auto& e : s.eigen_table)
    for (int k = 0; k < e.size; ++k) out.push_back(e.lambda[k]);
  return out;
}

BlockOperator w0_matrix(const RunConfig& cfg) { return hermitian_symmetrize(matrix_of(config_symbol(cfg))); }

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::regularize: return "regularize";
    case Stage::kam: return "kam";
    case Stage::measure: return "measure";
    case Stage::evolve: return "evolve";
    case Stage::verify: return "verify";
  }
  return "?";
}

Stage stage_from_name(const std::string& name) {
  for (Stage s : kStages)
    if (name == stage_name(s)) return s;
  throw ConfigError("stage", "unknown stage '" + name + "'");
}

// ---- symbols and states -------------------------------------------------------

Symbol builtin_symbol(const std::string& name, const json& params, const Truncation& t, int K_x,
                      std::uint64_t seed) {
  const std::string path = "symbol";
  Symbol a(t, K_x, 0.5);
  const AngleLattice& lat = a.lattice();
  const std::size_t z = lat.zero();
  if (name == "c2_cosine") {
    check_keys(params, {"builder", "a0", "terms"}, path);
    const double a0 = take<double>(params, "a0", 1.0, path);
    std::vector<std::tuple<std::size_t, std::size_t, int, double>> terms;
    if (params.contains("terms")) {
      if (!params.at("terms").is_array()) throw ConfigError("symbol.terms", "expected an array");
      int idx = 0;
      for (const auto& term : params.at("terms")) {
        const std::string tp = "symbol.terms[" + std::to_string(idx++) + "]";
        check_keys(term, {"l", "k", "c"}, tp);
        if (!term.contains("l")) throw ConfigError(tp + ".l", "missing");
        const std::size_t l = ell_index(lat, term.at("l"), tp + ".l");
        const int k = take<int>(term, "k", 0, tp);
        const double c = take<double>(term, "c", 0.0, tp);
        if (std::abs(k) > K_x) throw ConfigError(tp + ".k", "exceeds K_x");
        terms.emplace_back(l, lat.negate(l), k, c);
      }
    }
    for (int j = -t.J; j <= t.J; ++j) {
      const double g = std::sqrt(bracket(j));
      a.at(z, 0, j) += a0 * g;
      // cos(ℓ·θ)cos(kx) splits into four exponentials with weight 1/4.
      for (const auto& [lp, ln, k, c] : terms)
        for (std::size_t l : {lp, ln})
          for (int kk : {k, -k}) a.at(l, kk, j) += 0.25 * c * g;
    }
    return symmetrized(a);
  }
  if (name == "c2_random_zero_mean" || name == "free_random") {
    check_keys(params, {"builder", "a0", "amplitude", "L0", "K0"}, path);
    const double a0 = take<double>(params, "a0", 1.0, path);
    const double amp = take<double>(params, "amplitude", 0.1, path);
    const int L0 = take<int>(params, "L0", std::min(2, t.L), path);
    const int K0 = take<int>(params, "K0", K_x, path);
    if (!(amp >= 0.0)) throw ConfigError("symbol.amplitude", "must be >= 0");
    if (L0 < 0 || L0 > t.L) throw ConfigError("symbol.L0", "must lie in [0, L]");
    if (K0 < 0 || K0 > K_x) throw ConfigError("symbol.K0", "must lie in [0, K_x]");
    std::uint64_t counter = 0;
    const bool zero_mean = name == "c2_random_zero_mean";
    for (std::size_t l = 0; l < lat.size(); ++l) {
      if (lat.sup_norm(l) > L0) continue;
      for (int k = -K0; k <= K0; ++k) {
        if (zero_mean) {
          if (l == z && k == 0) continue;
          const cplx c = random_coeff(seed, counter, amp);
          for (int j = -t.J; j <= t.J; ++j) a.at(l, k, j) += c * std::sqrt(bracket(j));
        } else {
          for (int j = -t.J; j <= t.J; ++j)
            a.at(l, k, j) += random_coeff(seed, counter, amp) * std::sqrt(bracket(j));
        }
      }
    }
    if (zero_mean)
      for (int j = -t.J; j <= t.J; ++j) a.at(z, 0, j) += a0 * std::sqrt(bracket(j));
    return symmetrized(a);
  }
  throw ConfigError("symbol.builder", "unknown builder '" + name + "'");
}

Symbol config_symbol(const RunConfig& cfg) {
  const json& s = cfg.symbol;
  if (s.contains("inline")) {
    Symbol a = symbol_from_json(s.at("inline"));
    if (!(a.truncation() == cfg.truncation()) || a.K_x() != cfg.K_x)
      throw ConfigError("symbol.inline", "truncation differs from the run configuration");
    return a;
  }
  return builtin_symbol(s.at("builder").get<std::string>(), s, cfg.truncation(), cfg.K_x, cfg.seed);
}

StateVector config_initial_state(const RunConfig& cfg) {
  const json& u = cfg.u0;
  const std::string kind = u.at("kind").get<std::string>();
  std::vector<cplx> c(2 * cfg.J + 1);
  if (kind == "inline") {
    const json& arr = u.at("coeffs");
    if (!arr.is_array() || static_cast<int>(arr.size()) != 2 * cfg.J + 1)
      throw ConfigError("evolution.u0.coeffs", "expected 2J+1 [re, im] pairs");
    for (std::size_t i = 0; i < c.size(); ++i) {
      try {
        c[i] = cplx_from_json(arr[i]);
      } catch (const std::exception&) {
        throw ConfigError("evolution.u0.coeffs", "expected [re, im] pairs");
      }
    }
  } else {
    const double decay = u.at("decay").get<double>();
    double nrm = 0.0;
    for (int n = -cfg.J; n <= cfg.J; ++n) {
      const double phase = 2.0 * std::numbers::pi * uniform01(cfg.seed ^ 0x5eedULL, n + cfg.J);
      c[n + cfg.J] = std::polar(std::pow(bracket(n), -decay), phase);
      nrm += std::norm(c[n + cfg.J]);
    }
    for (auto& x : c) x /= std::sqrt(nrm);
  }
  return StateVector(cfg.J, std::move(c));
}

// ---- config --------------------------------------------------------------------

json reference_config() {
  const double T = 200.0 * 2.0 * std::numbers::pi;
  return {{"schema_version", kSchemaVersion},
          {"d", 1},
          {"J", 64},
          {"L", 8},
          {"K_x", 1},
          {"m_mass", 0.25},
          {"epsilon", 1e-3},
          {"omega", {(1.0 + std::sqrt(5.0)) / 2.0}},
          {"mode", "standard"},
          {"seed", 1},
          {"symbol", {{"builder", "c2_cosine"}, {"a0", 1.0}, {"terms", {{{"l", {1}}, {"k", 1}, {"c", 0.5}}}}}},
          {"reg", {{"M", 4}, {"lie_order", 12}, {"alpha0", 1e-3}}},
          {"kam", {{"tau", 2.5}, {"sigma", 1.5}, {"alpha", 1e-4}, {"N0", 8}, {"K_steps", 3}}},
          {"evolution",
           {{"T", T}, {"dt", 0.0075}, {"r_list", {0.0, 1.0}}, {"integrator_order", 2},
            {"record_every", 200}, {"u0", {{"kind", "smooth"}, {"decay", 2.0}}}}},
          {"measure", {{"alphas", {0.01, 0.02, 0.04}}, {"samples", 100000}}},
          {"verify", {{"r", 1.0}, {"theta_points", 32}}},
          {"output_dir", "out"}};
}

RunConfig parse_config(const json& doc) {
  check_keys(doc,
             {"schema_version", "d", "J", "L", "K_x", "m_mass", "epsilon", "omega", "v", "mode",
              "seed", "symbol", "reg", "kam", "evolution", "measure", "verify", "output_dir"},
             "");
  RunConfig c;
  if (take<int>(doc, "schema_version", kSchemaVersion, "") != kSchemaVersion)
    throw ConfigError("schema_version", "unsupported version");
  c.d = take<int>(doc, "d", c.d, "");
  if (c.d < 1) throw ConfigError("d", "must be >= 1");
  c.J = take<int>(doc, "J", c.J, "");
  if (c.J < 1) throw ConfigError("J", "must be >= 1");
  c.L = take<int>(doc, "L", c.L, "");
  if (c.L < 1) throw ConfigError("L", "must be >= 1");
  c.K_x = take<int>(doc, "K_x", c.K_x, "");
  if (c.K_x < 0 || c.K_x > 2 * c.J) throw ConfigError("K_x", "must lie in [0, 2J]");
  c.m_mass = take<double>(doc, "m_mass", c.m_mass, "");
  rethrow_as_config("m_mass", [&] { validate_mass(c.m_mass); });
  c.epsilon = take<double>(doc, "epsilon", c.epsilon, "");
  if (!(c.epsilon >= 0.0 && std::isfinite(c.epsilon))) throw ConfigError("epsilon", "must be finite and >= 0");
  if (!doc.contains("omega")) throw ConfigError("omega", "missing");
  c.omega.omega = take_numbers(doc, "omega", {}, "");
  if (c.omega.d() != c.d) throw ConfigError("omega", "length must equal d");
  const std::string mode = take<std::string>(doc, "mode", "standard", "");
  if (mode == "standard") {
    c.mode = TorusMode::standard;
  } else if (mode == "beta_torus") {
    c.mode = TorusMode::beta_torus;
  } else {
    throw ConfigError("mode", "must be standard or beta_torus");
  }
  if (doc.contains("v")) {
    if (c.mode != TorusMode::beta_torus) throw ConfigError("v", "only allowed in beta_torus mode");
    c.omega.v = take<double>(doc, "v", 1.0, "");
  } else if (c.mode == TorusMode::beta_torus) {
    throw ConfigError("v", "required in beta_torus mode");
  }
  rethrow_as_config("omega", [&] { c.omega.validate(); });
  const long long seed = take<long long>(doc, "seed", 1, "");
  if (seed < 0) throw ConfigError("seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);

  // symbol
  if (!doc.contains("symbol")) throw ConfigError("symbol", "missing");
  c.symbol = doc.at("symbol");
  if (!c.symbol.is_object()) throw ConfigError("symbol", "expected an object");
  if (c.symbol.contains("inline")) {
    check_keys(c.symbol, {"inline"}, "symbol");
  } else if (!c.symbol.contains("builder") || !c.symbol.at("builder").is_string()) {
    throw ConfigError("symbol.builder", "missing builder name");
  }
  Symbol sym = [&] {
    try {
      return config_symbol(c);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("symbol", e.what());
    }
  }();
  if (std::abs(sym.order() - 0.5) > 1e-12) throw ConfigError("symbol", "order must be 1/2");

  // kam first: the default cascade length depends on its weight
  const json kj = doc.value("kam", json::object());
  check_keys(kj, {"tau", "sigma", "alpha", "N0", "K_steps", "lie_order", "gate_constant"}, "kam");
  c.kam.tau = take<double>(kj, "tau", c.kam.tau, "kam");
  c.kam.sigma = take<double>(kj, "sigma", c.kam.sigma, "kam");
  c.kam.alpha = take<double>(kj, "alpha", c.kam.alpha, "kam");
  c.kam.N0 = take<double>(kj, "N0", c.kam.N0, "kam");
  c.kam.K_steps = take<int>(kj, "K_steps", c.kam.K_steps, "kam");
  c.kam.lie_order = take<int>(kj, "lie_order", c.kam.lie_order, "kam");
  c.kam.gate_constant = take<double>(kj, "gate_constant", c.kam.gate_constant, "kam");

  const json rj = doc.value("reg", json::object());
  check_keys(rj, {"M", "lie_order", "alpha0", "c2_tolerance"}, "reg");
  c.reg.M = take<int>(rj, "M", static_cast<int>(std::lround(4 * c.kam.m_weight() + 1)), "reg");
  c.reg.lie_order = take<int>(rj, "lie_order", c.reg.lie_order, "reg");
  c.reg.alpha0 = take<double>(rj, "alpha0", c.reg.alpha0, "reg");
  c.reg.c2_tolerance = take<double>(rj, "c2_tolerance", c.reg.c2_tolerance, "reg");
  c.reg.mode = c.mode;
  c.reg.validate();
  if (c.mode == TorusMode::standard) {
    const C2Report c2 = check_condition_C2(sym);
    if (!(c2.b_bound <= c.reg.c2_tolerance))
      throw ConfigError("symbol", "condition C2 fails: b_bound " + fmt(c2.b_bound) +
                                      " exceeds reg.c2_tolerance " + fmt(c.reg.c2_tolerance));
  }
  c.kam.validate(c.d);

  // evolution
  const json ej = doc.value("evolution", json::object());
  check_keys(ej, {"T", "dt", "r_list", "integrator_order", "record_every", "u0"}, "evolution");
  c.evolution.T = take<double>(ej, "T", c.evolution.T, "evolution");
  c.evolution.dt = take<double>(ej, "dt", c.evolution.dt, "evolution");
  c.evolution.r_list = take_numbers(ej, "r_list", c.evolution.r_list, "evolution");
  c.evolution.integrator_order = take<int>(ej, "integrator_order", c.evolution.integrator_order, "evolution");
  c.evolution.record_every = take<int>(ej, "record_every", c.evolution.record_every, "evolution");
  c.u0 = ej.value("u0", json{{"kind", "smooth"}, {"decay", 2.0}});
  check_keys(c.u0, {"kind", "decay", "coeffs"}, "evolution.u0");
  const std::string kind = take<std::string>(c.u0, "kind", "smooth", "evolution.u0");
  if (kind == "smooth") {
    c.u0 = {{"kind", "smooth"}, {"decay", take<double>(c.u0, "decay", 2.0, "evolution.u0")}};
  } else if (kind != "inline") {
    throw ConfigError("evolution.u0.kind", "must be smooth or inline");
  }
  c.evolution.u0 = config_initial_state(c);
  c.evolution.validate(c.J);
  {
    const BlockOperator H = original_hamiltonian(hermitian_symmetrize(matrix_of(sym)), c.epsilon,
                                                 c.m_mass, c.mode, c.omega);
    const Propagator prop(H, c.omega, c.evolution.integrator_order);
    if (c.evolution.dt * prop.generator_bound() > 0.5)
      throw ConfigError("evolution.dt", "dt*bound = " + fmt(c.evolution.dt * prop.generator_bound()) +
                                            " exceeds the stability limit 0.5");
  }

  // measure
  const json mj = doc.value("measure", json::object());
  check_keys(mj, {"alphas", "sampler", "samples", "ell_max", "m_max", "kam_steps", "kam_alpha",
                  "nodes", "model_J", "model_L"},
             "measure");
  MeasureConfig& m = c.measure;
  m.alphas = take_numbers(mj, "alphas", m.alphas, "measure");
  if (m.alphas.size() < 3) throw ConfigError("measure.alphas", "need at least three values");
  for (std::size_t i = 0; i < m.alphas.size(); ++i)
    if (!(m.alphas[i] > 0.0) || (i > 0 && !(m.alphas[i] > m.alphas[i - 1])))
      throw ConfigError("measure.alphas", "must be positive and strictly increasing");
  const std::string sampler = take<std::string>(mj, "sampler", "monte_carlo", "measure");
  if (sampler == "monte_carlo") {
    m.sampler = SamplerMode::monte_carlo;
  } else if (sampler == "grid") {
    m.sampler = SamplerMode::grid;
  } else {
    throw ConfigError("measure.sampler", "must be monte_carlo or grid");
  }
  m.samples = take<long>(mj, "samples", m.samples, "measure");
  if (m.samples < 1) throw ConfigError("measure.samples", "must be >= 1");
  m.ell_max = take<int>(mj, "ell_max", 2 * c.L, "measure");
  if (m.ell_max < c.L) throw ConfigError("measure.ell_max", "must be >= L");
  m.m_max = take<int>(mj, "m_max", 4 * c.J, "measure");
  if (m.m_max < 2 * c.J) throw ConfigError("measure.m_max", "must be >= 2J");
  m.kam_steps = take<bool>(mj, "kam_steps", c.mode == TorusMode::standard, "measure");
  if (m.kam_steps && c.mode == TorusMode::beta_torus)
    throw ConfigError("measure.kam_steps", "not available in beta_torus mode");
  m.kam_alpha = take<double>(mj, "kam_alpha", m.kam_alpha, "measure");
  if (!(m.kam_alpha > 0.0)) throw ConfigError("measure.kam_alpha", "must be > 0");
  m.nodes = take<int>(mj, "nodes", m.nodes, "measure");
  if (m.nodes < 1) throw ConfigError("measure.nodes", "must be >= 1");
  m.model_J = take<int>(mj, "model_J", std::min(c.J, m.model_J), "measure");
  if (m.model_J < 1 || m.model_J > c.J) throw ConfigError("measure.model_J", "must lie in [1, J]");
  m.model_L = take<int>(mj, "model_L", std::min(c.L, m.model_L), "measure");
  if (m.model_L < 1 || m.model_L > c.L) throw ConfigError("measure.model_L", "must lie in [1, L]");

  // verify
  const json vj = doc.value("verify", json::object());
  check_keys(vj, {"r", "theta_points"}, "verify");
  c.verify.r = take<double>(vj, "r", c.verify.r, "verify");
  if (std::find(c.evolution.r_list.begin(), c.evolution.r_list.end(), c.verify.r) ==
      c.evolution.r_list.end())
    throw ConfigError("verify.r", "must appear in evolution.r_list");
  c.verify.theta_points = take<int>(vj, "theta_points", c.verify.theta_points, "verify");
  if (c.verify.theta_points < 1) throw ConfigError("verify.theta_points", "must be >= 1");

  c.output_dir = take<std::string>(doc, "output_dir", c.output_dir, "");
  return c;
}

RunConfig load_config(const std::string& path) {
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

json RunConfig::normalized() const {
  json j = {{"schema_version", kSchemaVersion},
            {"d", d},
            {"J", J},
            {"L", L},
            {"K_x", K_x},
            {"m_mass", m_mass},
            {"epsilon", epsilon},
            {"omega", omega.omega},
            {"mode", mode_name(mode)},
            {"seed", seed},
            {"symbol", symbol},
            {"reg",
             {{"M", reg.M}, {"lie_order", reg.lie_order}, {"alpha0", reg.alpha0},
              {"c2_tolerance", reg.c2_tolerance}}},
            {"kam",
             {{"tau", kam.tau}, {"sigma", kam.sigma}, {"alpha", kam.alpha}, {"N0", kam.N0},
              {"K_steps", kam.K_steps}, {"lie_order", kam.lie_order},
              {"gate_constant", kam.gate_constant}}},
            {"evolution",
             {{"T", evolution.T}, {"dt", evolution.dt}, {"r_list", evolution.r_list},
              {"integrator_order", evolution.integrator_order},
              {"record_every", evolution.record_every}, {"u0", u0}}},
            {"measure",
             {{"alphas", measure.alphas},
              {"sampler", measure.sampler == SamplerMode::grid ? "grid" : "monte_carlo"},
              {"samples", measure.samples}, {"ell_max", measure.ell_max},
              {"m_max", measure.m_max}, {"kam_steps", measure.kam_steps},
              {"kam_alpha", measure.kam_alpha}, {"nodes", measure.nodes},
              {"model_J", measure.model_J}, {"model_L", measure.model_L}}},
            {"verify", {{"r", verify.r}, {"theta_points", verify.theta_points}}},
            {"output_dir", output_dir}};
  if (omega.v) j["v"] = *omega.v;
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  json j = cfg.normalized();
  j.erase("output_dir");
  return fnv1a(j.dump());
}

// ---- pipeline ------------------------------------------------------------------

Pipeline::Pipeline(RunConfig cfg, std::string output_dir, bool resume)
    : cfg_(std::move(cfg)), out_(std::move(output_dir)), resume_(resume), hash_(config_hash(cfg_)) {
  std::error_code ec;
  fs::create_directories(fs::path(out_) / "checkpoints", ec);
  if (ec) throw IoError("cannot create output directory '" + out_ + "': " + ec.message());
}

std::string Pipeline::checkpoint_path(Stage s) const {
  return (fs::path(out_) / "checkpoints" / (std::string(stage_name(s)) + ".json")).string();
}

std::optional<json> Pipeline::load_checkpoint(Stage s) const {
  const std::string path = checkpoint_path(s);
  if (!fs::exists(path)) return std::nullopt;
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw IoError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.value("schema_version", -1) != kSchemaVersion || j.value("config_hash", "") != hash_)
    return std::nullopt;
  return j;
}

void Pipeline::save_checkpoint(Stage s, json body) const {
  json j = {{"schema_version", kSchemaVersion}, {"stage", stage_name(s)}, {"config_hash", hash_}};
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = std::move(it.value());
  write_text_atomic(checkpoint_path(s), j.dump());
}

static std::string state_path(const std::string& ckpt) {
  return ckpt.substr(0, ckpt.size() - 5) + ".state.json";
}

void Pipeline::adopt(Stage s, const json& ckpt) {
  auto load_state = [&]() {
    const std::string path = state_path(checkpoint_path(s));
    json j;
    try {
      j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
      throw IoError("state file '" + path + "' is not valid JSON: " + e.what());
    }
    if (j.value("config_hash", "") != hash_) throw IoError("state file '" + path + "' is stale");
    return j;
  };
  if (s == Stage::regularize) {
    reg_ = regularization_from_json(load_state().at("state"));
  } else if (s == Stage::kam) {
    if (!ckpt.at("report").at("completed").get<bool>()) {
      const json& f = ckpt.at("report").at("failure");
      const json& w = f.at("worst_tuple");
      throw ResonanceError("KAM step " + std::to_string(ckpt.at("report").at("failed_step").get<int>()) +
                               " failed its non-resonance certificate",
                           w.at("l").get<std::vector<int>>(), w.at("i").get<int>(),
                           w.at("j").get<int>(), f.at("min_margin").is_null() ? 0.0 : f.at("min_margin").get<double>(),
                           0.0);
    }
    kam_ = kam_state_from_json(load_state().at("state"));
  }
}

void Pipeline::record_time(Stage s, double seconds) {
  const std::string path = (fs::path(out_) / "timings.json").string();
  json t = json::object();
  if (fs::exists(path)) {
    try {
      t = json::parse(read_text_file(path));
    } catch (const json::parse_error&) {
      t = json::object();
    }
  }
  t[stage_name(s)] = seconds;
  write_text_atomic(path, t.dump(2) + "\n");
}

void Pipeline::ensure(Stage s, bool target) {
  if (ready_[s]) return;
  switch (s) {
    case Stage::kam: ensure(Stage::regularize, false); break;
    case Stage::verify:
      ensure(Stage::regularize, false);
      ensure(Stage::kam, false);
      ensure(Stage::evolve, false);
      break;
    default: break;
  }
  if (!target || resume_) {
    if (auto ck = load_checkpoint(s)) {
      adopt(s, *ck);
      ready_[s] = true;
      return;
    }
  }
  const double t0 = now_seconds();
  compute(s);
  record_time(s, now_seconds() - t0);
  ready_[s] = true;
}

void Pipeline::run(Stage s) { ensure(s, true); }

void Pipeline::run_all() {
  for (Stage s : kStages) ensure(s, true);
}

void Pipeline::compute(Stage s) {
  switch (s) {
    case Stage::regularize: compute_regularize(); break;
    case Stage::kam: compute_kam(); break;
    case Stage::measure: compute_measure(); break;
    case Stage::evolve: compute_evolve(); break;
    case Stage::verify: compute_verify(); break;
  }
}

void Pipeline::compute_regularize() {
  const Truncation t = cfg_.truncation();
  const Symbol sym = config_symbol(cfg_);
  const C2Report c2 = check_condition_C2(sym);
  const BlockOperator W0 = hermitian_symmetrize(matrix_of(sym));

  const Omega0Check om = check_omega0(cfg_.omega, cfg_.reg.alpha0, t.L, 2 * t.J);
  if (!om.ok)
    throw ResonanceError("omega fails the zeroth-order non-resonance condition (margin ratio " +
                             fmt(om.min_margin) + ")",
                         om.worst_ell, om.worst_m, 0, om.min_margin, cfg_.reg.alpha0);

  RegularizationState s =
      initial_regularization_state(W0, cfg_.omega, cfg_.epsilon, cfg_.m_mass, cfg_.mode);
  std::vector<bool> commutes;
  double herm = 0.0;
  if (cfg_.epsilon != 0.0) {
    for (int i = 0; i < cfg_.reg.M; ++i) {
      s = regularization_step(s, cfg_.reg);
      commutes.push_back(commutes_with_K(s.Z));
      herm = std::max(herm, s.decay_report.back().hermiticity);
      for (const auto& B : s.B_log) herm = std::max(herm, hermiticity_defect(B));
    }
  }
  const EigenAsymptotics asym = eigenvalue_asymptotics(s, c2.a_coeff, cfg_.reg.M * cfg_.K_x);
  const NormSpec plain{KamParams::s0(t.d), 0.0, 0.0};

  json decay = json::array();
  for (const auto& e : s.decay_report)
    decay.push_back({{"step", e.step},
                     {"norm_s0", e.norm_s0},
                     {"weighted", e.weighted},
                     {"hermiticity", e.hermiticity},
                     {"lie_remainder", e.lie_remainder}});
  json summary = {
      {"condition_C2", cfg_.mode == TorusMode::standard ? to_json(c2) : json(nullptr)},
      {"omega0_margin", number_or_null(om.min_margin)},
      {"w0_norm", decay_norm(W0, plain)},
      {"decay_report", std::move(decay)},
      {"z_commutes", commutes},
      {"hermiticity_max", herm},
      {"eigen_asymptotics", to_json(asym, false)},
      {"eigen_rows", to_json(asym, true).at("rows")}};

  const std::string path = state_path(checkpoint_path(Stage::regularize));
  write_text_atomic(path, json{{"config_hash", hash_}, {"state", to_json(s)}}.dump());
  reg_ = std::move(s);
  save_checkpoint(Stage::regularize, std::move(summary));
}

void Pipeline::compute_kam() {
  const RegularizationState& reg = *reg_;
  const int d = cfg_.d;
  const KamState s0 = initial_kam_state(reg, cfg_.kam);
  const KamRun run = kam_iterate(s0, cfg_.kam);

  // Independent route: apply every generator to the regularized Hamiltonian.
  json offdiag = nullptr;
  if (run.report.completed) {
    const NormSpec plain{KamParams::s0(d), 0.0, 0.0};
    BlockOperator H = regularized_hamiltonian(reg);
    const double initial = decay_norm(off_block_diagonal(H), plain);
    for (const auto& G : run.state.G_log) H = transform_hamiltonian(G, H, reg.omega, cfg_.kam.lie_order);
    const double off = decay_norm(off_block_diagonal(H), plain);
    const double total = decay_norm(H, plain);
    offdiag = {{"absolute", off},
               {"relative", total > 0.0 ? off / total : 0.0},
               {"initial_absolute", initial},
               {"reduction", initial > 0.0 ? off / initial : 0.0}};
  }

  double herm = 0.0;
  for (const auto& r : run.state.norm_history) herm = std::max(herm, r.hermiticity);
  for (const auto& G : run.state.G_log) herm = std::max(herm, hermiticity_defect(G));
  json hist = json::array();
  for (const auto& r : run.state.norm_history)
    hist.push_back({{"k", r.k},
                    {"N", r.N},
                    {"low", r.low},
                    {"high", r.high},
                    {"hermiticity", r.hermiticity},
                    {"gap", number_or_null(r.gap)}});
  json summary = {{"norm_history", std::move(hist)},
                  {"report", to_json(run.report)},
                  {"hermiticity_max", herm},
                  {"off_diagonal", offdiag}};

  const std::string path = state_path(checkpoint_path(Stage::kam));
  write_text_atomic(path, json{{"config_hash", hash_}, {"state", to_json(run.state)}}.dump());
  save_checkpoint(Stage::kam, std::move(summary));
  kam_ = run.state;
  if (!run.report.completed) {
    const ResonanceCertificate& f = *run.report.failure;
    throw ResonanceError("KAM step " + std::to_string(run.report.failed_step) +
                             " failed its non-resonance certificate",
                         f.worst_ell, f.worst_i, f.worst_j, f.min_margin, 0.0);
  }
}

void Pipeline::compute_measure() {
  const MeasureConfig& m = cfg_.measure;
  const bool beta = cfg_.mode == TorusMode::beta_torus;
  const OmegaSampler sampler{m.sampler, m.samples, cfg_.seed};
  const ExclusionReport rep = measure_omega0(m.alphas, sampler, cfg_.d, beta, m.ell_max, m.m_max);

  json kam_steps = nullptr;
  json model_info = nullptr;
  if (m.kam_steps && cfg_.kam.K_steps > 0) {
    RunConfig mc = cfg_;
    mc.J = m.model_J;
    mc.L = m.model_L;
    const BlockOperator W0 = w0_matrix(mc);
    const RegParams rp = cfg_.reg;
    const KamParams kp = cfg_.kam;
    const double eps = cfg_.epsilon, mass = cfg_.m_mass;
    EigenProvider provider = [&](const FrequencyPoint& w) {
      std::optional<std::vector<std::vector<double>>> out(std::in_place);
      RegularizationState s = run_cascade(W0, rp, w, eps, mass);
      KamState k = initial_kam_state(s, kp);
      for (int step = 0; step < kp.K_steps; ++step) {
        out->push_back(flat_eigenvalues(k));
        if (step + 1 < kp.K_steps) k = kam_step(k, kp);
      }
      return out;
    };
    const EigenModel model = EigenModel::build(provider, cfg_.d, m.nodes, kp.K_steps);
    const auto fr = measure_kam_steps(model, kp, m.kam_alpha, sampler, mc.L);
    kam_steps = json::array();
    for (const auto& f : fr) kam_steps.push_back(to_json(f));
    model_info = {{"J", mc.J}, {"L", mc.L}, {"nodes", m.nodes}, {"failed_nodes", model.failed_nodes()},
                  {"kam_alpha", m.kam_alpha}};
  }
  save_checkpoint(Stage::measure,
                  {{"omega0", to_json(rep)}, {"kam_steps", kam_steps}, {"model", model_info}});
}

void Pipeline::compute_evolve() {
  const BlockOperator H =
      original_hamiltonian(w0_matrix(cfg_), cfg_.epsilon, cfg_.m_mass, cfg_.mode, cfg_.omega);
  std::vector<double> l2;
  const NormTrace tr =
      evolve(H, cfg_.omega, cfg_.evolution, [&](double, const Vec& u) { l2.push_back(u.norm()); });
  const double l2_0 = l2.empty() ? 0.0 : l2.front();
  std::vector<double> drift;
  for (double x : l2) drift.push_back(std::abs(x - l2_0));
  const double dt_eff = tr.steps > 0 ? cfg_.evolution.T / tr.steps : 0.0;
  json fin = json::array();
  for (const auto& c : tr.final_state.coeffs()) fin.push_back(cplx_to_json(c));
  save_checkpoint(Stage::evolve, {{"steps", tr.steps},
                                  {"dt", dt_eff},
                                  {"T", cfg_.evolution.T},
                                  {"r_list", tr.r_list},
                                  {"initial", tr.initial},
                                  {"ratio_max", tr.ratio_max},
                                  {"ratio_min", tr.ratio_min},
                                  {"l2_drift", tr.l2_drift},
                                  {"times", tr.times},
                                  {"norms", tr.norms},
                                  {"l2_drift_samples", drift},
                                  {"final_state", std::move(fin)}});
}

void Pipeline::compute_verify() {
  const RegularizationState& reg = *reg_;
  const KamState& kam = *kam_;
  const auto ev = load_checkpoint(Stage::evolve);
  if (!ev) throw IoError("verify: evolve checkpoint missing");

  const TransformBounds tb = transformation_bounds(reg, kam, cfg_.verify.r, cfg_.verify.theta_points);
  const auto rl = ev->at("r_list").get<std::vector<double>>();
  const std::size_t ri =
      static_cast<std::size_t>(std::find(rl.begin(), rl.end(), cfg_.verify.r) - rl.begin());
  NormTrace tr;
  tr.r_list = rl;
  tr.ratio_max = ev->at("ratio_max").get<std::vector<double>>();
  tr.ratio_min = ev->at("ratio_min").get<std::vector<double>>();
  const BoundednessResult b = verify_boundedness(tr, ri, tb.C_bound);

  const BlockOperator H =
      original_hamiltonian(w0_matrix(cfg_), cfg_.epsilon, cfg_.m_mass, cfg_.mode, cfg_.omega);
  const ConjugacyResult cj = verify_conjugacy(reg, kam, H, cfg_.evolution);
  const double dt = ev->at("dt").get<double>();
  const double p_final = kam.norm_history.empty() ? 0.0 : kam.norm_history.back().low;
  const double bound = 10.0 * (p_final + dt * dt * cfg_.evolution.T);

  save_checkpoint(Stage::verify,
                  {{"transform_bounds", to_json(tb)},
                   {"boundedness",
                    {{"r", cfg_.verify.r}, {"ratio_max", b.ratio_max}, {"ratio_min", b.ratio_min},
                     {"C_bound", tb.C_bound}, {"pass", b.pass}}},
                   {"conjugacy",
                    {{"max_error", cj.max_error}, {"bound", bound}, {"pass", cj.max_error <= bound},
                     {"times", cj.times}, {"errors", cj.errors}}}});
}

json Pipeline::report() const {
  json stages = json::object();
  for (Stage s : kStages) {
    auto ck = load_checkpoint(s);
    if (!ck) {
      stages[stage_name(s)] = nullptr;
      continue;
    }
    json sec = std::move(*ck);
    sec.erase("schema_version");
    sec.erase("config_hash");
    sec.erase("stage");
    if (s == Stage::evolve) sec.erase("final_state");
    sec["checkpoint"] = std::string("checkpoints/") + stage_name(s) + ".json";
    stages[stage_name(s)] = std::move(sec);
  }
  json cfg = cfg_.normalized();
  cfg.erase("output_dir");
  return {{"schema_version", kSchemaVersion}, {"config_hash", hash_}, {"config", std::move(cfg)},
          {"stages", std::move(stages)}};
}

void Pipeline::emit_reports() const {
  const json rep = report();
  const fs::path out(out_);
  write_text_atomic((out / "report.json").string(), rep.dump(2) + "\n");

  std::ostringstream norms;
  norms << "k,N,low,high\n";
  const json& kam = rep["stages"]["kam"];
  if (!kam.is_null())
    for (const auto& r : kam.at("norm_history"))
      norms << r.at("k").get<int>() << ',' << r.at("N").get<long>() << ','
            << fmt(r.at("low").get<double>()) << ',' << fmt(r.at("high").get<double>()) << '\n';
  write_text_atomic((out / "norms.csv").string(), norms.str());

  std::ostringstream trace;
  trace << "time,r,norm,l2_drift\n";
  const json& ev = rep["stages"]["evolve"];
  if (!ev.is_null()) {
    const auto times = ev.at("times").get<std::vector<double>>();
    const auto rl = ev.at("r_list").get<std::vector<double>>();
    const auto& nrm = ev.at("norms");
    const auto drift = ev.at("l2_drift_samples").get<std::vector<double>>();
    for (std::size_t i = 0; i < times.size(); ++i)
      for (std::size_t q = 0; q < rl.size(); ++q)
        trace << fmt(times[i]) << ',' << fmt(rl[q]) << ',' << fmt(nrm[i][q].get<double>()) << ','
              << fmt(drift[i]) << '\n';
  }
  write_text_atomic((out / "trace.csv").string(), trace.str());

  json measure = {{"schema_version", kSchemaVersion}, {"config_hash", rep["config_hash"]}};
  const json& ms = rep["stages"]["measure"];
  measure["omega0"] = ms.is_null() ? json(nullptr) : ms.at("omega0");
  measure["kam_steps"] = ms.is_null() ? json::array() : ms.at("kam_steps");
  if (measure["kam_steps"].is_null()) measure["kam_steps"] = json::array();
  write_text_atomic((out / "measure.json").string(), measure.dump(2) + "\n");
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return static_cast<int>(err->kind());
  return 1;
}

}  // namespace relkam
