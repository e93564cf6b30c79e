/* levyub — debiased Monte Carlo inference for jump-driven state-space models.
 *
 * C interface to the engine. All functions are thread-compatible: distinct
 * engines may be used from distinct threads, but a single engine must not be
 * shared between threads without external synchronization.
 *
 * Strings returned by the library point into storage owned by the engine (or
 * by the library for engine-less calls) and remain valid until the next call
 * on the same engine. Copy them if you need them longer.
 */
#ifndef LEVYUB_H
#define LEVYUB_H

#include <stddef.h>

#if defined(_WIN32)
#define LEVYUB_API __declspec(dllexport)
#else
#define LEVYUB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum levyub_status {
  LEVYUB_OK = 0,
  LEVYUB_ERR_CONFIG = 1,      /* invalid configuration or unknown command */
  LEVYUB_ERR_IO = 2,          /* file could not be read or written */
  LEVYUB_ERR_NUMERIC = 3,     /* numerical failure during the run */
  LEVYUB_ERR_DIMENSION = 4,   /* mismatched array or state dimensions */
  LEVYUB_ERR_NO_SOLUTION = 5, /* a root/quantile solve failed to converge */
  LEVYUB_ERR_ARGUMENT = 6,    /* null pointer or malformed argument */
  LEVYUB_ERR_INTERNAL = 7     /* unexpected failure; see levyub_last_error */
} levyub_status;

/* Opaque engine handle. Holds the working configuration, the last error
 * message, and the JSON summary of the last completed run. */
typedef struct levyub_engine levyub_engine;

/* Create an engine initialized with the default configuration.
 * Returns NULL only on allocation failure. Free with levyub_engine_free. */
LEVYUB_API levyub_engine* levyub_engine_new(void);

/* Destroy an engine. NULL is ignored. */
LEVYUB_API void levyub_engine_free(levyub_engine* engine);

/* Replace the working configuration with the contents of a JSON file.
 * Unknown keys are rejected. */
LEVYUB_API levyub_status levyub_load_config_file(levyub_engine* engine,
                                                 const char* path);

/* Merge a JSON object into the working configuration (recursive merge:
 * object values merge, scalars and arrays replace). */
LEVYUB_API levyub_status levyub_merge_config(levyub_engine* engine,
                                             const char* json_text);

/* Set one configuration entry by dotted path, e.g.
 *   levyub_set_option(e, "experiment.seed", "42")
 *   levyub_set_option(e, "data.source", "csv")
 * The value is parsed as JSON when possible and treated as a plain string
 * otherwise. Key validity is checked when a command runs. */
LEVYUB_API levyub_status levyub_set_option(levyub_engine* engine,
                                           const char* dotted_key,
                                           const char* value);

/* Current working configuration as pretty-printed JSON. */
LEVYUB_API const char* levyub_config_json(levyub_engine* engine);

/* Run a command: one of "simulate", "pmmh", "unbiased", "truth", "sweep",
 * "rate-probe". Result files are written to the configured output directory
 * (experiment.out_dir); the JSON summary is available afterwards via
 * levyub_result_json. */
LEVYUB_API levyub_status levyub_run(levyub_engine* engine, const char* command);

/* JSON summary of the last successful levyub_run; empty string if none. */
LEVYUB_API const char* levyub_result_json(const levyub_engine* engine);

/* Human-readable message for the last failed call on this engine; empty
 * string if the last call succeeded. Passing NULL returns a static message. */
LEVYUB_API const char* levyub_last_error(const levyub_engine* engine);

/* Default configuration as pretty-printed JSON (static storage). */
LEVYUB_API const char* levyub_default_config(void);

/* Library version as "major.minor.patch" (static storage). */
LEVYUB_API const char* levyub_version(void);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* LEVYUB_H */
