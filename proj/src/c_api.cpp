#include "relkam/relkam.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "errors.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"

struct relkam_session {
  std::unique_ptr<relkam::Pipeline> pipeline;
  std::string error;
  std::string field;
};

namespace {

thread_local std::string g_error;

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

// Runs f, turning exceptions into status codes and messages.
template <class F>
relkam_status guarded(std::string& error, std::string* field, F&& f) {
  error.clear();
  if (field) field->clear();
  try {
    f();
    return RELKAM_OK;
  } catch (const relkam::ConfigError& e) {
    error = e.what();
    if (field) *field = e.field();
    return RELKAM_ERR_CONFIG;
  } catch (const std::exception& e) {
    error = e.what();
    return static_cast<relkam_status>(relkam::exit_code_for(e));
  } catch (...) {
    error = "unknown error";
    return RELKAM_ERR_GENERIC;
  }
}

relkam_status create(const relkam::RunConfig& cfg, const char* output_dir, int resume,
                     relkam_session** out) {
  auto s = std::make_unique<relkam_session>();
  const std::string dir = output_dir && *output_dir ? output_dir : cfg.output_dir;
  const relkam_status st = guarded(g_error, nullptr, [&] {
    s->pipeline = std::make_unique<relkam::Pipeline>(cfg, dir, resume != 0);
  });
  if (st == RELKAM_OK) *out = s.release();
  return st;
}

}  // namespace

extern "C" {

unsigned relkam_abi_version(void) { return RELKAM_ABI_VERSION; }

const char* relkam_version_string(void) { return "0.1.0"; }

void relkam_set_threads(int n) { relkam::set_thread_count(n); }

relkam_status relkam_session_create(const char* config_json, const char* output_dir, int resume,
                                    relkam_session** out) {
  if (!out) return RELKAM_ERR_GENERIC;
  *out = nullptr;
  relkam::RunConfig cfg;
  relkam_status st = guarded(g_error, nullptr, [&] {
    if (!config_json) throw relkam::ConfigError("config", "no document given");
    relkam::json doc;
    try {
      doc = relkam::json::parse(config_json);
    } catch (const relkam::json::parse_error& e) {
      throw relkam::ConfigError("config", std::string("not valid JSON: ") + e.what());
    }
    cfg = relkam::parse_config(doc);
  });
  if (st != RELKAM_OK) return st;
  return create(cfg, output_dir, resume, out);
}

relkam_status relkam_session_create_from_file(const char* config_path, const char* output_dir,
                                              int resume, relkam_session** out) {
  if (!out) return RELKAM_ERR_GENERIC;
  *out = nullptr;
  relkam::RunConfig cfg;
  relkam_status st = guarded(g_error, nullptr, [&] {
    if (!config_path) throw relkam::ConfigError("config", "no path given");
    cfg = relkam::load_config(config_path);
  });
  if (st != RELKAM_OK) return st;
  return create(cfg, output_dir, resume, out);
}

void relkam_session_destroy(relkam_session* s) { delete s; }

relkam_status relkam_run_stage(relkam_session* s, const char* stage) {
  if (!s) return RELKAM_ERR_GENERIC;
  return guarded(s->error, &s->field, [&] {
    const std::string name = stage ? stage : "";
    if (name == "full")
      s->pipeline->run_all();
    else
      s->pipeline->run(relkam::stage_from_name(name));
  });
}

relkam_status relkam_emit_reports(relkam_session* s) {
  if (!s) return RELKAM_ERR_GENERIC;
  return guarded(s->error, &s->field, [&] { s->pipeline->emit_reports(); });
}

relkam_status relkam_report_json(relkam_session* s, char** out) {
  if (!s || !out) return RELKAM_ERR_GENERIC;
  *out = nullptr;
  return guarded(s->error, &s->field, [&] { *out = dup_string(s->pipeline->report().dump(2)); });
}

relkam_status relkam_normalized_config(relkam_session* s, char** out) {
  if (!s || !out) return RELKAM_ERR_GENERIC;
  *out = nullptr;
  return guarded(s->error, &s->field,
                 [&] { *out = dup_string(s->pipeline->config().normalized().dump(2)); });
}

const char* relkam_output_dir(const relkam_session* s) {
  return s ? s->pipeline->output_dir().c_str() : "";
}

const char* relkam_last_error(const relkam_session* s) { return s ? s->error.c_str() : ""; }

const char* relkam_last_error_field(const relkam_session* s) { return s ? s->field.c_str() : ""; }

const char* relkam_last_global_error(void) { return g_error.c_str(); }

relkam_status relkam_reference_config(char** out) {
  if (!out) return RELKAM_ERR_GENERIC;
  return guarded(g_error, nullptr, [&] { *out = dup_string(relkam::reference_config().dump(2)); });
}

relkam_status relkam_builtin_symbol_json(const char* name, const char* params_json, int d, int J,
                                         int L, int K_x, unsigned long long seed, char** out) {
  if (!out) return RELKAM_ERR_GENERIC;
  *out = nullptr;
  return guarded(g_error, nullptr, [&] {
    relkam::json params = relkam::json::object();
    if (params_json && *params_json) {
      try {
        params = relkam::json::parse(params_json);
      } catch (const relkam::json::parse_error& e) {
        throw relkam::ConfigError("symbol", std::string("not valid JSON: ") + e.what());
      }
    }
    const relkam::Truncation t{J, L, d};
    try {
      t.validate();
    } catch (const std::invalid_argument& e) {
      throw relkam::ConfigError("truncation", e.what());
    }
    *out = dup_string(
        relkam::to_json(relkam::builtin_symbol(name ? name : "", params, t, K_x, seed)).dump());
  });
}

void relkam_string_free(char* p) { std::free(p); }

}  // extern "C"
