#ifndef RELKAM_RELKAM_H
#define RELKAM_RELKAM_H

#include <stddef.h>

#if defined(RELKAM_BUILDING)
#define RELKAM_API __attribute__((visibility("default")))
#else
#define RELKAM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define RELKAM_ABI_VERSION 1u

/* Status codes double as process exit codes for the CLI. */
typedef enum relkam_status {
  RELKAM_OK = 0,
  RELKAM_ERR_GENERIC = 1,
  RELKAM_ERR_CONFIG = 2,
  RELKAM_ERR_RESONANCE = 3,
  RELKAM_ERR_DIVERGENCE = 4,
  RELKAM_ERR_IO = 5
} relkam_status;

typedef struct relkam_session relkam_session;

RELKAM_API unsigned relkam_abi_version(void);
RELKAM_API const char* relkam_version_string(void);

/* Worker threads for every session in the process. n <= 0 restores the default. */
RELKAM_API void relkam_set_threads(int n);

/* Parses a configuration document (JSON text). output_dir may be NULL to use the
   one in the config. On failure *out stays NULL and the message is available
   through relkam_last_global_error(). */
RELKAM_API relkam_status relkam_session_create(const char* config_json, const char* output_dir,
                                               int resume, relkam_session** out);
RELKAM_API relkam_status relkam_session_create_from_file(const char* config_path,
                                                         const char* output_dir, int resume,
                                                         relkam_session** out);
RELKAM_API void relkam_session_destroy(relkam_session* s);

/* stage: "regularize", "kam", "measure", "evolve", "verify" or "full". */
RELKAM_API relkam_status relkam_run_stage(relkam_session* s, const char* stage);
/* Writes report.json, norms.csv, trace.csv and measure.json from the checkpoints. */
RELKAM_API relkam_status relkam_emit_reports(relkam_session* s);

/* Returned strings are owned by the caller; release with relkam_string_free. */
RELKAM_API relkam_status relkam_report_json(relkam_session* s, char** out);
RELKAM_API relkam_status relkam_normalized_config(relkam_session* s, char** out);
RELKAM_API const char* relkam_output_dir(const relkam_session* s);

/* Message of the last failure on this session, or "" if none. */
RELKAM_API const char* relkam_last_error(const relkam_session* s);
/* Field named by the last configuration error, or "". */
RELKAM_API const char* relkam_last_error_field(const relkam_session* s);
/* Thread-local message of the last failure that had no session to attach to. */
RELKAM_API const char* relkam_last_global_error(void);

/* The reference configuration as JSON text. */
RELKAM_API relkam_status relkam_reference_config(char** out);
/* Builds a builtin symbol on the given truncation; params_json holds the
   builder parameters ("{}" for defaults). */
RELKAM_API relkam_status relkam_builtin_symbol_json(const char* name, const char* params_json,
                                                    int d, int J, int L, int K_x,
                                                    unsigned long long seed, char** out);

RELKAM_API void relkam_string_free(char* p);

#ifdef __cplusplus
}
#endif

#endif
