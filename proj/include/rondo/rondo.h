/* C interface to the rondo library. Every call returns a rondo_status; on
 * failure rondo_last_error() describes what went wrong on this thread.
 * Strings handed out by the library are released with rondo_string_free(). */
#ifndef RONDO_RONDO_H
#define RONDO_RONDO_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define RONDO_API __attribute__((visibility("default")))
#else
#define RONDO_API
#endif

typedef enum rondo_status {
  RONDO_OK = 0,
  RONDO_ERR_ARGUMENT = 1,    /* null handle or bad argument */
  RONDO_ERR_PARSE = 2,       /* malformed config, map or checkpoint */
  RONDO_ERR_VALIDATION = 3,  /* well-formed input breaking an invariant */
  RONDO_ERR_DOMAIN = 4,
  RONDO_ERR_CONTRACT = 5,
  RONDO_ERR_IO = 6,
  RONDO_ERR_NUMERIC = 7,     /* non-finite gradient */
  RONDO_ERR_INTERNAL = 8
} rondo_status;

typedef struct rondo_config rondo_config;

typedef struct rondo_metrics {
  double reaches_pct;
  double crashes_pct;
  double total_steps; /* mean episode length */
  int64_t total_steps_sum;
  double mean_return;
  int64_t episodes;
  int64_t stalled;
} rondo_metrics;

typedef struct rondo_train_summary {
  int64_t episodes;      /* training episodes over all instances */
  int32_t sweeps;        /* validation sweeps run (active only) */
  uint64_t version;      /* parameter version of the last checkpoint */
  double best_reaches;   /* -1 when never validated */
  double best_steps;
  int32_t warnings;
} rondo_train_summary;

typedef struct rondo_map_info {
  int32_t kind; /* 0 roundabout, 1 junction */
  uint32_t entry_lanes;
  uint32_t exit_lanes;
  uint32_t traffic_paths;
  uint32_t spawn_points;
  double longest_path;
} rondo_map_info;

RONDO_API const char* rondo_last_error(void);
RONDO_API const char* rondo_status_name(rondo_status status);
RONDO_API void rondo_string_free(char* s);

/* path may be NULL for the defaults; overrides are "dotted.key=value". */
RONDO_API rondo_status rondo_config_load(const char* path, const char* const* overrides, size_t n_overrides,
                                         rondo_config** out);
RONDO_API void rondo_config_free(rondo_config* cfg);
RONDO_API rondo_status rondo_config_set(rondo_config* cfg, const char* assignment);
RONDO_API rondo_status rondo_config_to_json(const rondo_config* cfg, char** out);
RONDO_API rondo_status rondo_config_name(const rondo_config* cfg, char** out);

/* Training writes progress.jsonl and checkpoints into out_dir. resume may be
 * NULL; otherwise training continues from that checkpoint. */
RONDO_API rondo_status rondo_train_active(const rondo_config* cfg, const char* out_dir, const char* resume,
                                          rondo_train_summary* out);
RONDO_API rondo_status rondo_train_passive(const rondo_config* cfg, const char* out_dir, const char* resume,
                                           rondo_train_summary* out);

/* Runs the configured experiment (evaluation.* keys). checkpoint NULL means a
 * uniform random command policy. traffic is low, medium, high or "all" (mean
 * of the three levels). Writes episodes.csv and summary.json into out_dir
 * when it is not NULL. */
RONDO_API rondo_status rondo_evaluate(const rondo_config* cfg, const char* checkpoint, const char* traffic,
                                      const char* out_dir, rondo_metrics* out);

/* Evaluates each named checkpoint ("random" for the random policy) and
 * returns the comparison as aligned text; comparison.csv goes to out_dir. */
RONDO_API rondo_status rondo_compare(const rondo_config* cfg, const char* const* names,
                                     const char* const* checkpoints, size_t n, const char* traffic,
                                     const char* out_dir, char** table);

/* Records evaluation episode `episode` and writes its images to out_dir. */
RONDO_API rondo_status rondo_render(const rondo_config* cfg, const char* checkpoint, int64_t episode,
                                    const char* out_dir, size_t* files_written);

RONDO_API rondo_status rondo_map_validate(const char* path, rondo_map_info* out);

#ifdef __cplusplus
}
#endif

#endif
