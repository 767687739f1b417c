#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "json_io.hpp"
#include "kam.hpp"
#include "measure.hpp"
#include "regularization.hpp"
#include "symbol.hpp"

namespace relkam {

enum class Stage { regularize, kam, measure, evolve, verify };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct MeasureConfig {
  std::vector<double> alphas{0.01, 0.02, 0.04};
  SamplerMode sampler = SamplerMode::monte_carlo;
  long samples = 100000;
  int ell_max = -1;  // -1: 2L
  int m_max = -1;    // -1: 4J
  bool kam_steps = true;
  double kam_alpha = 0.05;
  int nodes = 9;
  int model_J = 16;
  int model_L = 4;
};

struct VerifyConfig {
  double r = 1.0;
  int theta_points = 32;
};

struct RunConfig {
  int d = 1;
  int J = 64;
  int L = 8;
  int K_x = 1;
  double m_mass = 0.25;
  double epsilon = 1e-3;
  FrequencyPoint omega;
  TorusMode mode = TorusMode::standard;
  std::uint64_t seed = 1;
  json symbol;  // {"builder": name, ...params} or {"inline": symbol document}
  RegParams reg;
  KamParams kam;
  EvolutionConfig evolution;
  json u0;      // {"kind": "smooth", "decay": s} or {"kind": "inline", "coeffs": [...]}
  MeasureConfig measure;
  VerifyConfig verify;
  std::string output_dir = "out";

  Truncation truncation() const { return {J, L, d}; }
  // Fully expanded configuration (every default filled in); hashed for checkpoints.
  json normalized() const;
};

// Parses and validates a configuration document. The first failing field is
// reported through ConfigError::field().
RunConfig parse_config(const json& doc);
RunConfig load_config(const std::string& path);
// The bundled reference configuration.
json reference_config();

Symbol builtin_symbol(const std::string& name, const json& params, const Truncation& t, int K_x,
                      std::uint64_t seed);
Symbol config_symbol(const RunConfig& cfg);
StateVector config_initial_state(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

class Pipeline {
 public:
  Pipeline(RunConfig cfg, std::string output_dir, bool resume);

  // Runs one stage, loading or computing its prerequisites.
  void run(Stage s);
  void run_all();

  // Report assembled from the checkpoint files currently on disk.
  json report() const;
  void emit_reports() const;

  const RunConfig& config() const { return cfg_; }
  const std::string& output_dir() const { return out_; }

 private:
  std::string checkpoint_path(Stage s) const;
  std::optional<json> load_checkpoint(Stage s) const;
  void save_checkpoint(Stage s, json body) const;
  void ensure(Stage s, bool target);
  void compute(Stage s);
  void compute_regularize();
  void compute_kam();
  void compute_measure();
  void compute_evolve();
  void compute_verify();
  void adopt(Stage s, const json& ckpt);
  void record_time(Stage s, double seconds);

  RunConfig cfg_;
  std::string out_;
  bool resume_;
  std::string hash_;
  std::optional<RegularizationState> reg_;
  std::optional<KamState> kam_;
  std::map<Stage, bool> ready_;
};

// Exit code for an exception escaping a pipeline run.
int exit_code_for(const std::exception& e);

}  // namespace relkam
