#include "json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "errors.hpp"

namespace relkam {
namespace {

json mat_to_json(const Mat& m) {
  json arr = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(cplx_to_json(m(r, c)));
  return arr;
}

Mat mat_from_json(const json& j, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows * cols)
    throw IoError("checkpoint: block has the wrong number of entries");
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = cplx_from_json(j[r * cols + c]);
  return m;
}

double number_from(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

const char* mode_name(TorusMode m) { return m == TorusMode::beta_torus ? "beta_torus" : "standard"; }

TorusMode mode_from(const std::string& s) {
  if (s == "standard") return TorusMode::standard;
  if (s == "beta_torus") return TorusMode::beta_torus;
  throw IoError("checkpoint: unknown mode '" + s + "'");
}

}  // namespace

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json cplx_to_json(cplx z) { return json::array({z.real(), z.imag()}); }

cplx cplx_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw IoError("expected a [re, im] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

json to_json(const BlockOperator& A) {
  const Truncation& t = A.truncation();
  json blocks = json::array();
  for (std::size_t l = 0; l < A.slice_count(); ++l) {
    if (!A.has_slice(l)) continue;
    for (int i = 0; i <= t.J; ++i)
      for (int j = 0; j <= t.J; ++j) {
        const Mat b = A.block(l, i, j);
        if ((b.array() == cplx(0.0)).all()) continue;
        blocks.push_back({{"l", A.lattice().ell_vector(l)}, {"i", i}, {"j", j}, {"block", mat_to_json(b)}});
      }
  }
  return {{"d", t.d}, {"L", t.L}, {"J", t.J}, {"blocks", std::move(blocks)}};
}

BlockOperator block_operator_from_json(const json& j) {
  try {
    Truncation t{j.at("J").get<int>(), j.at("L").get<int>(), j.at("d").get<int>()};
    BlockOperator A(t);
    for (const auto& b : j.at("blocks")) {
      const auto ell = b.at("l").get<std::vector<int>>();
      if (static_cast<int>(ell.size()) != t.d) throw IoError("checkpoint: block angle has wrong dimension");
      const std::size_t l = A.lattice().index_of(ell);
      if (l >= A.slice_count()) throw IoError("checkpoint: block angle outside truncation");
      const int i = b.at("i").get<int>(), jj = b.at("j").get<int>();
      if (i < 0 || jj < 0 || i > t.J || jj > t.J) throw IoError("checkpoint: block index outside truncation");
      A.set_block(l, i, jj, mat_from_json(b.at("block"), i == 0 ? 1 : 2, jj == 0 ? 1 : 2));
    }
    return A;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: malformed block operator: ") + e.what());
  }
}

json to_json(const Symbol& a) {
  const Truncation& t = a.truncation();
  json entries = json::array();
  for (std::size_t l = 0; l < a.lattice().size(); ++l)
    for (int k = -a.K_x(); k <= a.K_x(); ++k)
      for (int j = -t.J; j <= t.J; ++j) {
        const cplx v = a.at(l, k, j);
        if (v == cplx(0.0)) continue;
        entries.push_back({a.lattice().ell_vector(l), k, j, v.real(), v.imag()});
      }
  return {{"order", a.order()}, {"d", t.d},   {"L", t.L},
          {"K_x", a.K_x()},     {"J", t.J},   {"entries", std::move(entries)}};
}

Symbol symbol_from_json(const json& j) {
  try {
    Truncation t{j.at("J").get<int>(), j.at("L").get<int>(), j.at("d").get<int>()};
    Symbol a(t, j.at("K_x").get<int>(), j.at("order").get<double>());
    for (const auto& e : j.at("entries")) {
      if (!e.is_array() || e.size() != 5) throw IoError("symbol: entry must be [[l...], k, j, re, im]");
      const auto ell = e[0].get<std::vector<int>>();
      if (static_cast<int>(ell.size()) != t.d) throw IoError("symbol: entry angle has wrong dimension");
      const std::size_t l = a.lattice().index_of(ell);
      if (l >= a.lattice().size()) throw IoError("symbol: entry angle outside truncation");
      const int k = e[1].get<int>(), jj = e[2].get<int>();
      if (std::abs(k) > a.K_x() || std::abs(jj) > t.J) throw IoError("symbol: entry outside truncation");
      a.at(l, k, jj) = cplx(e[3].get<double>(), e[4].get<double>());
    }
    return a;
  } catch (const json::exception& e) {
    throw IoError(std::string("symbol: malformed document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("symbol: ") + e.what());
  }
}

json to_json(const FrequencyPoint& w) {
  json j = {{"omega", w.omega}};
  j["v"] = w.v ? json(*w.v) : json(nullptr);
  return j;
}

FrequencyPoint frequency_from_json(const json& j) {
  FrequencyPoint w;
  w.omega = j.at("omega").get<std::vector<double>>();
  if (j.contains("v") && !j.at("v").is_null()) w.v = j.at("v").get<double>();
  return w;
}

json to_json(const RegularizationState& s) {
  json blog = json::array();
  for (const auto& b : s.B_log) blog.push_back(to_json(b));
  json decay = json::array();
  for (const auto& e : s.decay_report)
    decay.push_back({{"step", e.step},
                     {"norm_s0", e.norm_s0},
                     {"weighted", e.weighted},
                     {"hermiticity", e.hermiticity},
                     {"lie_remainder", e.lie_remainder}});
  return {{"step", s.step},       {"epsilon", s.epsilon},     {"omega", to_json(s.omega)},
          {"m_mass", s.m_mass},   {"mode", mode_name(s.mode)}, {"Z", to_json(s.Z)},
          {"W", to_json(s.W)},    {"B_log", std::move(blog)}, {"decay_report", std::move(decay)}};
}

RegularizationState regularization_from_json(const json& j) {
  try {
    RegularizationState s;
    s.step = j.at("step").get<int>();
    s.epsilon = j.at("epsilon").get<double>();
    s.omega = frequency_from_json(j.at("omega"));
    s.m_mass = j.at("m_mass").get<double>();
    s.mode = mode_from(j.at("mode").get<std::string>());
    s.Z = block_operator_from_json(j.at("Z"));
    s.W = block_operator_from_json(j.at("W"));
    for (const auto& b : j.at("B_log")) s.B_log.push_back(block_operator_from_json(b));
    for (const auto& e : j.at("decay_report")) {
      DecayEntry d;
      d.step = e.at("step").get<int>();
      d.norm_s0 = number_from(e.at("norm_s0"));
      d.weighted = number_from(e.at("weighted"));
      d.hermiticity = number_from(e.at("hermiticity"));
      d.lie_remainder = number_from(e.at("lie_remainder"));
      s.decay_report.push_back(d);
    }
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: malformed regularization state: ") + e.what());
  }
}

json to_json(const KamState& s) {
  json lam = json::array();
  for (const auto& b : s.Lambda) lam.push_back(mat_to_json(b));
  json glog = json::array();
  for (const auto& g : s.G_log) glog.push_back(to_json(g));
  json table = json::array();
  for (std::size_t j = 0; j < s.eigen_table.size(); ++j) {
    const SmallEigen& e = s.eigen_table[j];
    json vals = json::array();
    for (int k = 0; k < e.size; ++k) vals.push_back(e.lambda[k]);
    table.push_back({{"j", j}, {"lambda", vals}, {"U", mat_to_json(e.U.topLeftCorner(e.size, e.size))}});
  }
  json hist = json::array();
  for (const auto& r : s.norm_history)
    hist.push_back({{"k", r.k},
                    {"N", r.N},
                    {"low", r.low},
                    {"high", r.high},
                    {"hermiticity", r.hermiticity},
                    {"gap", number_or_null(r.gap)}});
  return {{"k", s.k},
          {"omega", to_json(s.omega)},
          {"Lambda", std::move(lam)},
          {"P", to_json(s.P)},
          {"G_log", std::move(glog)},
          {"eigen_table", std::move(table)},
          {"norm_history", std::move(hist)}};
}

KamState kam_state_from_json(const json& j) {
  try {
    KamState s;
    s.k = j.at("k").get<int>();
    s.omega = frequency_from_json(j.at("omega"));
    s.P = block_operator_from_json(j.at("P"));
    int idx = 0;
    for (const auto& b : j.at("Lambda")) {
      const int n = idx == 0 ? 1 : 2;
      s.Lambda.push_back(mat_from_json(b, n, n));
      ++idx;
    }
    if (idx != s.P.truncation().J + 1) throw IoError("checkpoint: Lambda has the wrong block count");
    for (const auto& g : j.at("G_log")) s.G_log.push_back(block_operator_from_json(g));
    for (const auto& r : j.at("norm_history")) {
      NormRecord rec;
      rec.k = r.at("k").get<int>();
      rec.N = r.at("N").get<long>();
      rec.low = number_from(r.at("low"));
      rec.high = number_from(r.at("high"));
      rec.hermiticity = number_from(r.at("hermiticity"));
      rec.gap = r.at("gap").is_null() ? std::numeric_limits<double>::infinity() : r.at("gap").get<double>();
      s.norm_history.push_back(rec);
    }
    refresh_eigen_table(s);
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: malformed KAM state: ") + e.what());
  }
}

json to_json(const ResonanceCertificate& c) {
  return {{"ok", c.ok},
          {"min_margin", number_or_null(c.min_margin)},
          {"min_ratio", number_or_null(c.min_ratio)},
          {"worst_tuple",
           {{"l", c.worst_ell}, {"i", c.worst_i}, {"j", c.worst_j}, {"v", c.worst_v}, {"v2", c.worst_w}}},
          {"conditions_checked", c.conditions_checked}};
}

json to_json(const KamReport& r) {
  json steps = json::array();
  for (const auto& s : r.steps)
    steps.push_back({{"k", s.k},
                     {"N", s.N},
                     {"margin", number_or_null(s.margin)},
                     {"margin_ratio", number_or_null(s.margin_ratio)},
                     {"G_norm", s.G_norm},
                     {"G_ratio", s.G_ratio},
                     {"lie_remainder", s.lie_remainder}});
  json j = {{"completed", r.completed},
            {"failed_step", r.failed_step},
            {"gate_value", number_or_null(r.gate_value)},
            {"steps", std::move(steps)}};
  j["failure"] = r.failure ? to_json(*r.failure) : json(nullptr);
  j["fitted_exponent"] = r.fitted_exponent ? number_or_null(*r.fitted_exponent) : json(nullptr);
  return j;
}

json to_json(const StepFraction& f) {
  return {{"k", f.k},         {"N", f.N},         {"fraction", f.fraction},
          {"stderr", f.stderr_}, {"newly", f.newly}, {"cumulative", f.cumulative},
          {"alpha_over_N", f.alpha_over_N}};
}

json to_json(const ExclusionReport& r) {
  json per = json::array();
  for (const auto& f : r.per_step) per.push_back(to_json(f));
  json j = {{"alpha", r.alpha_values},
            {"fraction", r.fractions},
            {"stderr", r.stderrs},
            {"slope", r.fit_slope},
            {"slope_stderr", r.slope_stderr},
            {"seed", r.seed},
            {"samples", r.samples},
            {"box", {{"ell_max", r.ell_max}, {"m_max", r.m_max}}},
            {"per_step", std::move(per)}};
  j["exponent"] = r.exponent ? number_or_null(*r.exponent) : json(nullptr);
  return j;
}

json to_json(const C2Report& c) {
  return {{"a_coeff", c.a_coeff}, {"b_bound", c.b_bound}, {"residual", c.residual}};
}

json to_json(const EigenAsymptotics& e, bool with_rows) {
  json j = {{"sup_r", e.sup_r},
            {"C_r", e.C_r},
            {"sup_r_edge", e.sup_r_edge},
            {"interior_J", e.interior_J},
            {"c0", number_or_null(e.c0)}};
  if (with_rows) {
    json rows = json::array();
    for (const auto& r : e.rows) {
      json lam = json::array(), res = json::array();
      for (int k = 0; k < r.size; ++k) {
        lam.push_back(r.lambda[k]);
        res.push_back(r.r[k]);
      }
      rows.push_back({{"j", r.j}, {"lambda", lam}, {"r", res}});
    }
    j["rows"] = std::move(rows);
  }
  return j;
}

json to_json(const TransformBounds& b) {
  return {{"sup_norm", b.sup_norm},
          {"sup_inverse", b.sup_inverse},
          {"C_bound", b.C_bound},
          {"unitarity", b.unitarity}};
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("write error on '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

}  // namespace relkam
