#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <string>

#include "relkam/relkam.h"

namespace {

int thread_default() {
  const char* env = std::getenv("RELKAM_THREADS");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 0) {
    std::fprintf(stderr, "relkam: ignoring RELKAM_THREADS='%s'\n", env);
    return 0;
  }
  return static_cast<int>(n);
}

int run(const std::string& stage, const std::string& config, const std::string& out, bool resume) {
  relkam_session* s = nullptr;
  relkam_status st =
      relkam_session_create_from_file(config.c_str(), out.empty() ? nullptr : out.c_str(), resume, &s);
  if (st != RELKAM_OK) {
    std::fprintf(stderr, "relkam: %s\n", relkam_last_global_error());
    return st;
  }
  st = relkam_run_stage(s, stage.c_str());
  if (st != RELKAM_OK) std::fprintf(stderr, "relkam: %s failed: %s\n", stage.c_str(), relkam_last_error(s));
  // Whatever reached a checkpoint still goes into the reports.
  const relkam_status em = relkam_emit_reports(s);
  if (em != RELKAM_OK) {
    std::fprintf(stderr, "relkam: writing reports failed: %s\n", relkam_last_error(s));
    if (st == RELKAM_OK) st = em;
  } else {
    std::fprintf(stderr, "relkam: reports in %s\n", relkam_output_dir(s));
  }
  relkam_session_destroy(s);
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-periodic reducibility pipeline for the relativistic wave operator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", relkam_version_string());

  std::string config, out;
  bool resume = false;
  int threads = thread_default();

  const char* stages[][2] = {
      {"regularize", "run the regularization cascade"},
      {"kam", "run the KAM iteration (regularizes first if needed)"},
      {"measure", "estimate excluded parameter fractions"},
      {"evolve", "integrate the original equation"},
      {"verify", "check boundedness and conjugacy against the evolution"},
      {"full", "run every stage in order"}};
  for (const auto& st : stages) {
    CLI::App* sub = app.add_subcommand(st[0], st[1]);
    sub->add_option("-c,--config", config, "configuration file (JSON)")->required();
    sub->add_option("-o,--out", out, "output directory (overrides the config)");
    sub->add_flag("--resume", resume, "reuse matching checkpoints instead of recomputing");
    sub->add_option("-t,--threads", threads, "worker threads (default: RELKAM_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);
  }
  CLI::App* ref = app.add_subcommand("reference-config", "print the reference configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : RELKAM_ERR_CONFIG;
  }

  if (ref->parsed()) {
    char* text = nullptr;
    if (relkam_reference_config(&text) != RELKAM_OK) return RELKAM_ERR_GENERIC;
    std::printf("%s\n", text);
    relkam_string_free(text);
    return 0;
  }
  relkam_set_threads(threads);
  for (CLI::App* sub : app.get_subcommands()) return run(sub->get_name(), config, out, resume);
  return RELKAM_ERR_GENERIC;
}
