/* C interface to the pepco peptide co-modeling library.
 *
 * Every function that can fail returns a pepco_status. On failure the
 * message is available from pepco_last_error() on the same thread until the
 * next failing call. Handles are opaque and owned by the caller. */
#ifndef PEPCO_H
#define PEPCO_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PEPCO_API __declspec(dllexport)
#else
#define PEPCO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pepco_status {
  PEPCO_OK = 0,
  PEPCO_ERR_ARGUMENT = 1, /* null handle or pointer */
  PEPCO_ERR_PARSE = 2,
  PEPCO_ERR_CONFIG = 3,
  PEPCO_ERR_IO = 4,
  PEPCO_ERR_SHAPE = 5,
  PEPCO_ERR_NUMERIC = 6,
  PEPCO_ERR_CONTRACT = 7,
  PEPCO_ERR_INTERNAL = 8
} pepco_status;

typedef enum pepco_route { PEPCO_ROUTE_SEQ = 0, PEPCO_ROUTE_GRAPH = 1 } pepco_route;

typedef struct pepco_config pepco_config;
typedef struct pepco_model pepco_model;

PEPCO_API const char* pepco_version(void);
PEPCO_API const char* pepco_last_error(void);
PEPCO_API const char* pepco_status_name(pepco_status status);

/* Run configuration: defaults, a key = value file, single-key overrides. */
PEPCO_API pepco_status pepco_config_new(pepco_config** out);
PEPCO_API pepco_status pepco_config_load(const char* path, pepco_config** out);
PEPCO_API pepco_status pepco_config_set(pepco_config* cfg, const char* key, const char* value);
PEPCO_API pepco_status pepco_config_override(pepco_config* cfg, const char* assignment);
/* Copies the value (NUL-terminated) into buf; *needed receives the size
 * including the terminator. buf may be NULL when capacity is 0. */
PEPCO_API pepco_status pepco_config_get(const pepco_config* cfg, const char* key, char* buf, size_t capacity,
                                        size_t* needed);
PEPCO_API void pepco_config_free(pepco_config* cfg);

typedef struct pepco_train_summary {
  size_t best_epoch;
  double best_val_metric;
  double test_mae; /* NaN for classification */
  double test_mse;
  double test_accuracy; /* NaN for regression */
} pepco_train_summary;

typedef struct pepco_infer_summary {
  size_t predictions;
  uint64_t graph_builds;
  uint64_t graph_encodes;
} pepco_infer_summary;

typedef struct pepco_attribute_summary {
  size_t profiles;
  int few_steps; /* nonzero when steps < 2 */
} pepco_attribute_summary;

/* Commands. Outputs go to the config's out_dir together with the resolved
 * config. */
PEPCO_API pepco_status pepco_train(const pepco_config* cfg, pepco_train_summary* out);
PEPCO_API pepco_status pepco_infer(const pepco_config* cfg, const char* checkpoint, const char* input,
                                   int assert_seq_only, pepco_infer_summary* out);
PEPCO_API pepco_status pepco_attribute(const pepco_config* cfg, const char* checkpoint, const char* input,
                                       pepco_route route, size_t steps, pepco_attribute_summary* out);
PEPCO_API pepco_status pepco_compare(const pepco_config* cfg, const char* profiles_a, const char* profiles_b);
PEPCO_API pepco_status pepco_sweep_lambda(const pepco_config* cfg, const double* grid, size_t count);
PEPCO_API pepco_status pepco_gen_synth(size_t count, size_t max_length, uint64_t seed, const char* output);

/* Loaded checkpoints. */
PEPCO_API pepco_status pepco_model_load(const char* checkpoint, pepco_model** out);
PEPCO_API void pepco_model_free(pepco_model* model);
/* 1 for regression, the class count for classification. */
PEPCO_API size_t pepco_model_output_width(const pepco_model* model);
/* Sequence-only prediction; fails for models that need the graph. */
PEPCO_API pepco_status pepco_model_predict(const pepco_model* model, const char* sequence, double* outputs,
                                           size_t capacity);

/* Process-wide counters of graph construction and graph-encoder passes. */
PEPCO_API uint64_t pepco_graph_build_count(void);
PEPCO_API uint64_t pepco_graph_encode_count(void);

#ifdef __cplusplus
}
#endif

#endif /* PEPCO_H */
