/* PCNet C API.
 *
 * Every function returns a pcnet_status. On failure the calling thread's
 * pcnet_last_error() describes what went wrong. Strings returned through
 * char** out-parameters are owned by the caller and released with
 * pcnet_free_string.
 */
#ifndef PCNET_PCNET_H
#define PCNET_PCNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define PCNET_API __attribute__((visibility("default")))
#else
#define PCNET_API
#endif

/* Values double as CLI exit codes. */
typedef enum pcnet_status {
  PCNET_OK = 0,
  PCNET_ERR_INTERNAL = 1,
  PCNET_ERR_CONFIG = 2, /* configuration, usage, dimension or precondition */
  PCNET_ERR_NUMERIC = 3,
  PCNET_ERR_IO = 4      /* includes checksum and version failures */
} pcnet_status;

typedef struct pcnet_config pcnet_config;
typedef struct pcnet_model pcnet_model;

/* Called with one progress line at a time; may be NULL. */
typedef void (*pcnet_log_fn)(const char* line, void* user);

PCNET_API const char* pcnet_version(void);
PCNET_API const char* pcnet_last_error(void);
PCNET_API void pcnet_free_string(char* s);
PCNET_API void pcnet_set_logger(pcnet_log_fn fn, void* user);

/* ---- configuration ---- */
PCNET_API pcnet_status pcnet_config_new(pcnet_config** out);
PCNET_API void pcnet_config_free(pcnet_config* cfg);
PCNET_API pcnet_status pcnet_config_load_file(pcnet_config* cfg, const char* path);
PCNET_API pcnet_status pcnet_config_set(pcnet_config* cfg, const char* key, const char* value);
PCNET_API pcnet_status pcnet_config_get(const pcnet_config* cfg, const char* key, char** value);
PCNET_API pcnet_status pcnet_config_validate(const pcnet_config* cfg);
PCNET_API pcnet_status pcnet_config_to_text(const pcnet_config* cfg, char** text);
/* Newline-separated list of every recognised key. */
PCNET_API pcnet_status pcnet_config_keys(char** keys);

/* Output root used when a function receives out_root == NULL: $PCNET_OUT, else ./runs. */
PCNET_API pcnet_status pcnet_default_output_root(char** path);

/* ---- commands ----
 * Commands that produce artifacts lock out_root, create a fresh
 * <command>-<timestamp> directory under it and report that directory
 * through run_dir (optional, may be NULL).
 */

/* Trains per cfg; resume_checkpoint may be NULL. Writes manifest.txt,
 * split.csv, metrics.csv, checkpoints and final.pcn. */
PCNET_API pcnet_status pcnet_train(const pcnet_config* cfg, const char* out_root, const char* resume_checkpoint,
                                   char** run_dir);

/* Evaluates a checkpoint on the test split of its own config, or of
 * `dataset` ("synth" or a directory) when non-NULL. Writes confusion.csv and
 * summary.txt. */
PCNET_API pcnet_status pcnet_eval(const char* checkpoint, const char* dataset, const char* out_root,
                                  double* overall_accuracy, char** run_dir);

/* Samples one P x K batch from the train split and dumps its pair
 * assignment (pairs.csv, batch.csv). checkpoint may be NULL (fresh weights
 * from cfg). */
PCNET_API pcnet_status pcnet_pairs(const pcnet_config* cfg, const char* checkpoint, const char* out_root,
                                   char** run_dir);

/* Writes a synthetic dataset tree root/<class>/<index>.png. */
PCNET_API pcnet_status pcnet_synth(size_t num_classes, size_t per_class, size_t size, uint64_t seed,
                                   const char* root);

/* Runs the ablation grid: `rows` is "all" or comma-separated row-id
 * prefixes; with_plain adds the no-attention single-branch row. Writes
 * ablation.csv. Passing an existing ablate-* directory as resume_dir
 * resumes it instead of creating a new one. */
PCNET_API pcnet_status pcnet_ablate(const pcnet_config* base, const char* rows, int with_plain, const char* out_root,
                                    const char* resume_dir, char** run_dir);

/* Finite-difference check of every differentiable op. csv receives the
 * table; all_passed is set to 1 or 0. */
PCNET_API pcnet_status pcnet_gradcheck(size_t instances, uint64_t seed, char** csv, int* all_passed);

/* Attention maps for test items i and j of the checkpoint's dataset. */
PCNET_API pcnet_status pcnet_export_attention(const char* checkpoint, size_t i, size_t j, const char* out_root,
                                              char** run_dir);

/* ---- models ---- */
PCNET_API pcnet_status pcnet_model_load(const char* checkpoint, pcnet_model** out);
PCNET_API void pcnet_model_free(pcnet_model* model);
PCNET_API pcnet_status pcnet_model_num_classes(const pcnet_model* model, size_t* n);
PCNET_API pcnet_status pcnet_model_input_size(const pcnet_model* model, size_t* size);
PCNET_API pcnet_status pcnet_model_num_parameters(const pcnet_model* model, size_t* n);
/* Scores one CHW float image (already standardized) of the model's input
 * size through the deployment path; writes num_classes probabilities. */
PCNET_API pcnet_status pcnet_model_predict(const pcnet_model* model, const float* chw, size_t channels, size_t height,
                                           size_t width, double* probabilities);

#ifdef __cplusplus
}
#endif

#endif /* PCNET_PCNET_H */
