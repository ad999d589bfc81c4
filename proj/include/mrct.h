/* mrct — MR/CT phantom translation toolkit.
 *
 * C API over the C++ core: opaque handles, integer status codes, UTF-8
 * paths. Every fallible call returns mrct_status; on failure
 * mrct_last_error() holds a human-readable message for the calling thread
 * until the next failing call on that thread.
 */
#ifndef MRCT_H
#define MRCT_H

#include <stdint.h>

#if defined(_WIN32)
#    if defined(MRCT_BUILD)
#        define MRCT_API __declspec(dllexport)
#    else
#        define MRCT_API __declspec(dllimport)
#    endif
#else
#    define MRCT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mrct_status {
    MRCT_OK = 0,
    MRCT_E_IO = 1,      /* filesystem failure */
    MRCT_E_INVALID = 2, /* bad arguments or configuration */
    MRCT_E_NUMERIC = 3, /* NaN/Inf encountered or numerically invalid result */
    MRCT_E_INTERNAL = 4 /* unexpected failure; report as a bug */
} mrct_status;

/* API version; increments on breaking changes. */
MRCT_API int mrct_api_version(void);

/* Message for the most recent failure on this thread ("" if none). The
 * pointer stays valid until the next failing mrct_* call on the thread. */
MRCT_API const char* mrct_last_error(void);

/* ---------------------------------------------------------------- commands
 * Whole-pipeline commands, mirroring the CLI one-to-one. `config_json` is a
 * full run-config document (NULL or "" = all defaults). `model` selects
 * pixmc | pixcm | baseline and overrides the config's model when non-NULL.
 */

/* Generates a phantom dataset + manifest.json under out_dir. */
MRCT_API mrct_status mrct_gen_data(const char* config_json, const char* out_dir);

/* Trains a model against the dataset behind manifest_path; writes the loss
 * log, checkpoints and train_report.json under out_dir. resume_checkpoint
 * (nullable) continues a previous run bit-exactly. */
MRCT_API mrct_status mrct_train_run(const char* config_json, const char* model,
                                    const char* manifest_path, const char* out_dir,
                                    const char* resume_checkpoint);

/* Translates the eval split with the checkpoint's generator and writes
 * metric_report.json / metrics.csv under out_dir. With identity_self_check
 * non-zero the checkpoint is ignored (may be NULL) and the identity
 * translator is scored instead — a plumbing check expected to yield
 * fid ~ 0 and dice = 1. */
MRCT_API mrct_status mrct_evaluate_run(const char* config_json, const char* checkpoint_path,
                                       const char* manifest_path, const char* out_dir,
                                       int identity_self_check);

/* Trains and evaluates the three objective variants of the model family
 * under one shared seed; writes ablate_report.{json,csv} under out_dir. */
MRCT_API mrct_status mrct_ablate_run(const char* config_json, const char* model,
                                     const char* manifest_path, const char* out_dir);

/* ---------------------------------------------------------------- datasets */

typedef struct mrct_dataset mrct_dataset;

MRCT_API mrct_status mrct_dataset_open(const char* manifest_path, mrct_dataset** out);
MRCT_API void mrct_dataset_close(mrct_dataset* ds);
MRCT_API int mrct_dataset_case_count(const mrct_dataset* ds);
MRCT_API int mrct_dataset_resolution(const mrct_dataset* ds);

/* ---------------------------------------------------------------- models */

typedef struct mrct_model mrct_model;

MRCT_API mrct_status mrct_model_open(const char* checkpoint_path, mrct_model** out);
MRCT_API void mrct_model_close(mrct_model* m);

/* "pixmc", "pixcm" or "baseline"; NULL on NULL input. */
MRCT_API const char* mrct_model_kind(const mrct_model* m);

/* Translates one h x w single-channel image with values in [-1, 1].
 * input_modality is "MR", "CT" or "MRCAT" and must be a modality the model
 * accepts (pixmc: MR; pixcm: CT or MRCAT; baseline: MRCAT). `output` must
 * hold h*w doubles. h and w must be multiples of 2^depth of the generator. */
MRCT_API mrct_status mrct_model_translate(mrct_model* m, const double* input, int h, int w,
                                          const char* input_modality, double* output);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MRCT_H */
