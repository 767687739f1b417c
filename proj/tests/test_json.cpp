#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "errors.hpp"
#include "json_io.hpp"
#include "pipeline.hpp"
#include "support.hpp"

using namespace relkam;
using namespace relkam::testing;
namespace fs = std::filesystem;

TEST_CASE("block operator round trip") {
  std::mt19937_64 rng(60);
  const Truncation t{5, 2, 2};
  BlockOperator A = random_operator(t, rng, 0.3);
  A.set_block(A.lattice().zero(), 3, 3, Mat::Zero(2, 2));
  const json j = to_json(A);
  const BlockOperator B = block_operator_from_json(json::parse(j.dump()));
  CHECK(B.identical(A));
  for (const auto& blk : j.at("blocks")) CHECK(blk.at("l").size() == 2);
}

TEST_CASE("symbol round trip") {
  const Truncation t{8, 2, 1};
  const json params = {{"amplitude", 0.2}};
  const Symbol a = builtin_symbol("c2_random_zero_mean", params, t, 1, 4);
  CHECK(symbol_from_json(json::parse(to_json(a).dump())) == a);
}

TEST_CASE("regularization and KAM state round trips") {
  const Truncation t{8, 2, 1};
  const json params = {{"a0", 1.0}, {"terms", {{{"l", {1}}, {"k", 1}, {"c", 0.5}}}}};
  const Symbol a = builtin_symbol("c2_cosine", params, t, 1, 1);
  RegParams rp;
  rp.M = 2;
  const FrequencyPoint w{{1.6180339887498949}, std::nullopt};
  const RegularizationState r = run_cascade(a, rp, w, 1e-3, 0.25);
  const RegularizationState r2 = regularization_from_json(json::parse(to_json(r).dump()));
  CHECK(r2.Z.identical(r.Z));
  CHECK(r2.W.identical(r.W));
  REQUIRE(r2.B_log.size() == r.B_log.size());
  for (std::size_t k = 0; k < r.B_log.size(); ++k) CHECK(r2.B_log[k].identical(r.B_log[k]));
  CHECK(r2.epsilon == r.epsilon);
  CHECK(r2.decay_report.size() == r.decay_report.size());
  CHECK(to_json(r2).dump() == to_json(r).dump());

  KamParams kp;
  kp.K_steps = 2;
  const KamRun run = kam_iterate(initial_kam_state(r, kp), kp);
  const KamState k2 = kam_state_from_json(json::parse(to_json(run.state).dump()));
  CHECK(k2.P.identical(run.state.P));
  CHECK(k2.k == run.state.k);
  for (std::size_t j = 0; j < k2.Lambda.size(); ++j) CHECK(k2.Lambda[j] == run.state.Lambda[j]);
  CHECK(to_json(k2).dump() == to_json(run.state).dump());
}

TEST_CASE("frequency point") {
  const FrequencyPoint a{{1.25, 1.5}, 1.75};
  const FrequencyPoint b = frequency_from_json(to_json(a));
  CHECK(b.omega == a.omega);
  CHECK(b.v == a.v);
  CHECK(to_json(FrequencyPoint{{1.2}, std::nullopt}).at("v").is_null());
}

TEST_CASE("non-finite numbers become null") {
  CHECK(number_or_null(NAN).is_null());
  CHECK(number_or_null(INFINITY).is_null());
  CHECK(number_or_null(2.5) == 2.5);
}

TEST_CASE("atomic writes") {
  const fs::path dir = fs::temp_directory_path() / "relkam_json_atomic";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string path = (dir / "a.json").string();
  write_text_atomic(path, "one");
  write_text_atomic(path, "two");
  CHECK(read_text_file(path) == "two");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
  CHECK_THROWS_AS(read_text_file((dir / "missing.json").string()), IoError);
  CHECK_THROWS_AS(write_text_atomic((dir / "no" / "such" / "x.json").string(), "x"), IoError);
  fs::remove_all(dir);
}
