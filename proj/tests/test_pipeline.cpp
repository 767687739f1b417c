#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "errors.hpp"
#include "json_io.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"

using namespace relkam;
namespace fs = std::filesystem;

namespace {

json small_config() {
  json c = reference_config();
  c["J"] = 16;
  c["L"] = 4;
  c["evolution"]["T"] = 50.0;
  c["evolution"]["dt"] = 0.02;
  c["evolution"]["record_every"] = 50;
  c["measure"]["samples"] = 20000;
  return c;
}

std::string field_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("relkam_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("reference configuration parses and normalizes stably") {
  const RunConfig c = parse_config(reference_config());
  CHECK(c.J == 64);
  CHECK(c.reg.M == 4);
  const json n = c.normalized();
  CHECK(parse_config(n).normalized() == n);
  RunConfig other = c;
  other.output_dir = "elsewhere";
  CHECK(config_hash(other) == config_hash(c));
  other.epsilon = 2e-3;
  CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("configuration errors name the first failing field") {
  json c = small_config();
  c["J"] = 0;
  c["kam"]["tau"] = 1.0;
  CHECK(field_of(c) == "J");

  c = small_config();
  c["kam"]["tau"] = 1.0;
  CHECK(field_of(c) == "kam.tau");

  c = small_config();
  c["bogus"] = 1;
  CHECK(field_of(c) == "bogus");

  c = small_config();
  c["kam"]["sigmaa"] = 2.0;
  CHECK(field_of(c) == "kam.sigmaa");

  c = small_config();
  c["m_mass"] = 0.5;
  CHECK(field_of(c) == "m_mass");

  c = small_config();
  c["omega"] = {2.5};
  CHECK(field_of(c) == "omega");

  c = small_config();
  c["evolution"]["dt"] = 1.0;
  CHECK(field_of(c) == "evolution.dt");

  c = small_config();
  c["verify"]["r"] = 2.0;
  CHECK(field_of(c) == "verify.r");

  c = small_config();
  c["symbol"] = {{"builder", "free_random"}, {"amplitude", 5.0}};
  CHECK(field_of(c) == "symbol");

  c = small_config();
  c["v"] = 1.5;
  CHECK(field_of(c) == "v");

  c = small_config();
  c["measure"]["alphas"] = {0.01, 0.02};
  CHECK(field_of(c) == "measure.alphas");

  c = small_config();
  c["J"] = "sixteen";
  CHECK(field_of(c) == "J");
}

TEST_CASE("builtin symbols") {
  const Truncation t{16, 4, 1};
  const Symbol pure = builtin_symbol("c2_cosine", {{"a0", 1.5}, {"terms", json::array()}}, t, 1, 1);
  const std::size_t z = pure.lattice().zero();
  for (std::size_t l = 0; l < pure.lattice().size(); ++l)
    for (int k = -1; k <= 1; ++k)
      for (int j = -16; j <= 16; ++j) {
        const cplx expect = (l == z && k == 0) ? cplx(1.5 * std::sqrt(bracket(j))) : cplx(0.0);
        CHECK(std::abs(pure.at(l, k, j) - expect) < 1e-15);
      }

  const json gen = {{"a0", 0.8}, {"terms", {{{"l", {1}}, {"k", 1}, {"c", 0.5}}, {{"l", {2}}, {"k", 0}, {"c", 0.3}}}}};
  const C2Report c2 = check_condition_C2(builtin_symbol("c2_cosine", gen, t, 1, 1));
  CHECK(c2.a_coeff == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(c2.b_bound < 1e-12);

  const Symbol r1 = builtin_symbol("c2_random_zero_mean", json::object(), t, 1, 9);
  const Symbol r2 = builtin_symbol("c2_random_zero_mean", json::object(), t, 1, 9);
  const Symbol r3 = builtin_symbol("c2_random_zero_mean", json::object(), t, 1, 10);
  CHECK(to_json(r1).dump() == to_json(r2).dump());
  CHECK_FALSE(r1 == r3);
  CHECK_THROWS_AS(builtin_symbol("nope", json::object(), t, 1, 1), ConfigError);
}

TEST_CASE("small pipeline run, resume and determinism") {
  const RunConfig cfg = parse_config(small_config());
  const fs::path a = fresh_dir("a");
  {
    set_thread_count(1);
    Pipeline p(cfg, a.string(), false);
    p.run_all();
    p.emit_reports();
  }
  const json rep = json::parse(read_text_file((a / "report.json").string()));
  const auto& hist = rep["stages"]["kam"]["norm_history"];
  REQUIRE(hist.size() == 4);
  for (std::size_t k = 1; k < hist.size(); ++k)
    CHECK(hist[k]["low"].get<double>() < hist[k - 1]["low"].get<double>());
  CHECK(line_count(a / "norms.csv") == 1 + 4);
  CHECK(rep["stages"]["verify"]["boundedness"]["pass"].get<bool>());
  CHECK(rep["stages"]["regularize"]["checkpoint"] == "checkpoints/regularize.json");
  CHECK(fs::exists(a / "measure.json"));
  CHECK(fs::exists(a / "trace.csv"));

  const std::string original = read_text_file((a / "report.json").string());
  fs::remove(a / "report.json");
  {
    Pipeline p(cfg, a.string(), true);
    p.run_all();
    p.emit_reports();
  }
  CHECK(read_text_file((a / "report.json").string()) == original);

  const fs::path b = fresh_dir("b");
  {
    set_thread_count(3);
    Pipeline p(cfg, b.string(), false);
    p.run_all();
    p.emit_reports();
    set_thread_count(1);
  }
  CHECK(read_text_file((b / "report.json").string()) == original);
  CHECK(read_text_file((b / "norms.csv").string()) == read_text_file((a / "norms.csv").string()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("single stage runs load their prerequisites") {
  const RunConfig cfg = parse_config(small_config());
  const fs::path a = fresh_dir("stages");
  {
    Pipeline p(cfg, a.string(), false);
    p.run(Stage::regularize);
    p.emit_reports();
  }
  json rep = json::parse(read_text_file((a / "report.json").string()));
  CHECK_FALSE(rep["stages"]["regularize"].is_null());
  CHECK(rep["stages"]["kam"].is_null());
  CHECK(line_count(a / "norms.csv") == 1);
  {
    Pipeline p(cfg, a.string(), true);
    p.run(Stage::kam);
    p.emit_reports();
  }
  rep = json::parse(read_text_file((a / "report.json").string()));
  CHECK_FALSE(rep["stages"]["kam"].is_null());
  CHECK(rep["stages"]["verify"].is_null());
  fs::remove_all(a);
}

TEST_CASE("empty report") {
  const RunConfig cfg = parse_config(small_config());
  const fs::path a = fresh_dir("empty");
  Pipeline p(cfg, a.string(), false);
  p.emit_reports();
  const json rep = json::parse(read_text_file((a / "report.json").string()));
  for (const auto& [name, sec] : rep["stages"].items()) CHECK(sec.is_null());
  CHECK(rep["schema_version"] == kSchemaVersion);
  CHECK(line_count(a / "trace.csv") == 1);
  fs::remove_all(a);
}

TEST_CASE("zero perturbation") {
  json c = small_config();
  c["epsilon"] = 0.0;
  const RunConfig cfg = parse_config(c);
  const fs::path a = fresh_dir("eps0");
  Pipeline p(cfg, a.string(), false);
  p.run_all();
  const json rep = p.report();
  for (const auto& r : rep["stages"]["kam"]["norm_history"]) CHECK(r["low"].get<double>() == 0.0);
  for (const auto& x : rep["stages"]["evolve"]["ratio_max"]) CHECK(x.get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& x : rep["stages"]["evolve"]["ratio_min"]) CHECK(x.get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  fs::remove_all(a);
}

TEST_CASE("resonant frequency maps to its exit code") {
  json c = small_config();
  c["omega"] = {1.5};
  const RunConfig cfg = parse_config(c);
  const fs::path a = fresh_dir("resonant");
  Pipeline p(cfg, a.string(), false);
  try {
    p.run(Stage::regularize);
    FAIL("expected a resonance error");
  } catch (const ResonanceError& e) {
    CHECK(exit_code_for(e) == 3);
  }
  fs::remove_all(a);
}

TEST_CASE("stage names") {
  for (Stage s : {Stage::regularize, Stage::kam, Stage::measure, Stage::evolve, Stage::verify})
    CHECK(stage_from_name(stage_name(s)) == s);
  CHECK_THROWS_AS(stage_from_name("everything"), ConfigError);
}
