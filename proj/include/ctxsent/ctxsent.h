/*
 * ctxsent C API
 *
 * Context-augmented sentiment classification: hard-sample gated fusion of
 * base and context-conditioned polarity distributions, the pipeline stages
 * that produce them, and the evaluation utilities around them.
 *
 * Conventions:
 *   - Every fallible call returns a ctxsent_status. On failure the message
 *     is available from ctxsent_last_error() on the same thread.
 *   - Probability vectors are double[3] in the order negative, neutral,
 *     positive. Labels are the matching indices 0, 1, 2.
 *   - Strings returned through char** are heap-allocated and must be
 *     released with ctxsent_string_free().
 *   - Handles are opaque and released with their _close function. A handle
 *     must not be used from two threads at once.
 */
#ifndef CTXSENT_H
#define CTXSENT_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(CTXSENT_BUILDING_LIBRARY)
#    define CTXSENT_API __declspec(dllexport)
#  else
#    define CTXSENT_API __declspec(dllimport)
#  endif
#else
#  define CTXSENT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ctxsent_status {
  CTXSENT_OK = 0,
  CTXSENT_ERR_INVALID_ARGUMENT = 1,
  CTXSENT_ERR_VALIDATION = 2,
  CTXSENT_ERR_CONFIG = 3,
  CTXSENT_ERR_IO = 4,
  CTXSENT_ERR_BACKEND = 5,
  CTXSENT_ERR_CAPABILITY = 6,
  CTXSENT_ERR_MISSING_ARTIFACT = 7,
  CTXSENT_ERR_INTERNAL = 100
} ctxsent_status;

CTXSENT_API const char* ctxsent_version(void);
CTXSENT_API const char* ctxsent_status_name(ctxsent_status status);

/* Message of the last failed call on this thread; "" after a success. */
CTXSENT_API const char* ctxsent_last_error(void);
/* Machine-readable form: {"status": "...", "code": n, "message": "..."}. */
CTXSENT_API const char* ctxsent_last_error_json(void);

CTXSENT_API void ctxsent_string_free(char* str);

/* ---- Fusion ------------------------------------------------------------ */

typedef struct ctxsent_fusion_params {
  double alpha;          /* hard-sample threshold, [0,1] */
  double beta;           /* interpolation coefficient, [0,1] */
  const char* strategy;  /* cf | interpolate | average | max | js | cxmi */
  double cxmi_threshold; /* > 0 */
  int gate;              /* restrict average/max/js/cxmi to hard samples */
} ctxsent_fusion_params;

/* alpha 0.3, beta 0.45, strategy "cf", cxmi_threshold 1.1, gate 0. */
CTXSENT_API void ctxsent_fusion_params_default(ctxsent_fusion_params* params);

CTXSENT_API ctxsent_status ctxsent_delta(const double probs[3], double* out_delta);

CTXSENT_API ctxsent_status ctxsent_fuse(const double base[3], const double with_context[3],
                                        const ctxsent_fusion_params* params, double out_probs[3],
                                        int* out_label, int* out_is_hard, double* out_delta);

CTXSENT_API ctxsent_status ctxsent_softmax(const double scores[3], double out_probs[3]);

/* Jensen-Shannon divergence, base 2. */
CTXSENT_API ctxsent_status ctxsent_js_divergence(const double p[3], const double q[3], double* out);

/* ---- Metrics ----------------------------------------------------------- */

typedef struct ctxsent_metrics {
  double accuracy;
  double macro_precision;
  double macro_recall;
  double macro_f1;
  double precision[3];
  double recall[3];
  double f1[3];
  size_t support[3];
  size_t n;
} ctxsent_metrics;

CTXSENT_API ctxsent_status ctxsent_compute_metrics(const int* golds, const int* preds, size_t n,
                                                   ctxsent_metrics* out);

/* ---- Prompts ----------------------------------------------------------- */

/* JSON array of {knowledge_type, body, source}. */
CTXSENT_API ctxsent_status ctxsent_templates_json(char** out_json);

CTXSENT_API ctxsent_status ctxsent_render_judge_prompt(const char* sentence, const char* context1,
                                                       const char* context2, char** out_text);

/* sample_json is a canonical sample object; image_token may be NULL.
 * Returns {"text": ..., "hash": ...}. */
CTXSENT_API ctxsent_status ctxsent_render_context_prompt(const char* knowledge_type, const char* sample_json,
                                                         const char* image_token, char** out_json);

/* ---- Saliency ---------------------------------------------------------- */

/* Computes per-layer S_c_to_p / S_i_to_p from a dump file. Writes CSV to
 * csv_path when non-NULL; returns {"S_c_to_p": [...], "S_i_to_p": [...]}. */
CTXSENT_API ctxsent_status ctxsent_analyze_saliency(const char* dump_path, const char* csv_path,
                                                    char** out_json);

/* ---- Backends ---------------------------------------------------------- */

typedef struct ctxsent_backend ctxsent_backend;

/* config_json is a backend config object ({"kind": "mock"|"remote", ...}). */
CTXSENT_API ctxsent_status ctxsent_backend_open(const char* config_json, ctxsent_backend** out);
CTXSENT_API void ctxsent_backend_close(ctxsent_backend* backend);

CTXSENT_API ctxsent_status ctxsent_backend_generate(ctxsent_backend* backend, const char* prompt,
                                                    const char* image, char** out_text);

/* Log-likelihood of each of the three choices after the backend's
 * normalization mode. */
CTXSENT_API ctxsent_status ctxsent_backend_score(ctxsent_backend* backend, const char* prompt,
                                                 const char* const choices[3], const char* image,
                                                 double out_loglik[3]);

/* ---- Pipeline ---------------------------------------------------------- */

typedef struct ctxsent_pipeline ctxsent_pipeline;

/* overrides_json may be NULL or an object with any of: seed, alpha, beta,
 * strategy, knowledge_type, backend, out, run_id. */
CTXSENT_API ctxsent_status ctxsent_pipeline_open(const char* config_path, const char* overrides_json,
                                                 ctxsent_pipeline** out);
CTXSENT_API void ctxsent_pipeline_close(ctxsent_pipeline* pipeline);

/* Directory holding this run's artifacts. Owned by the handle. */
CTXSENT_API const char* ctxsent_pipeline_run_dir(const ctxsent_pipeline* pipeline);

/* stage: ingest | generate-context | predict | fuse | evaluate | sweep | run.
 * out_summary_json may be NULL. */
CTXSENT_API ctxsent_status ctxsent_pipeline_run_stage(ctxsent_pipeline* pipeline, const char* stage,
                                                      char** out_summary_json);

#ifdef __cplusplus
}
#endif

#endif /* CTXSENT_H */
