/* C interface to the MedKAN library. All functions return mk_status; on any
 * failure mk_last_error() carries a thread-local message. Strings returned
 * through char** out-parameters are heap-allocated; release them with
 * mk_string_free(). Handles are opaque and freed with their _free function.
 */
#ifndef MEDKAN_H
#define MEDKAN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mk_status {
    MK_OK = 0,
    MK_FAIL = 1,          /* failed check (e.g. gradcheck) */
    MK_CONFIG_ERROR = 2,  /* bad config, shapes, geometry */
    MK_DATA_ERROR = 3,    /* malformed or missing data */
    MK_RUNTIME_ERROR = 4  /* environment / IO failure */
} mk_status;

typedef struct mk_model mk_model;
typedef struct mk_dataset mk_dataset;

uint32_t mk_api_version(void);
const char* mk_last_error(void);
void mk_string_free(char* s);

/* Worker pool size used by all kernels; 0 resets to hardware concurrency. */
void mk_set_threads(int n);
int mk_get_threads(void);

/* --- models ------------------------------------------------------------- */

/* config_json: a model config object, or {"variant":"S","input_size":...,
 * "num_classes":...} to request a preset. dtype_json "f32"|"f64". */
mk_status mk_model_create(const char* config_json, const char* dtype, uint64_t seed,
                          mk_model** out);
mk_status mk_model_load(const char* ckpt_path, mk_model** out);
mk_status mk_model_save(const mk_model* m, const char* ckpt_path);
void mk_model_free(mk_model* m);

mk_status mk_model_param_count(const mk_model* m, uint64_t* out);
mk_status mk_model_config_json(const mk_model* m, char** json_out);

/* images: n * C * H * W float32 values in [0,1], NCHW; the call applies the
 * training-time normalization itself. logits_out: n * num_classes floats. */
mk_status mk_model_predict(const mk_model* m, const float* images, size_t n, float* logits_out);

/* --- datasets ------------------------------------------------------------ */

mk_status mk_dataset_load(const char* npz_path, mk_dataset** out);
/* synth_json keys: classes, per_class, size, noise, seed (all optional) */
mk_status mk_dataset_synth(const char* synth_json, mk_dataset** out);
mk_status mk_dataset_save(const mk_dataset* d, const char* npz_path);
mk_status mk_dataset_info(const mk_dataset* d, char** json_out);
void mk_dataset_free(mk_dataset* d);

/* --- commands ------------------------------------------------------------ */

/* Full training command driven by a run-config JSON document; writes
 * config.echo.json, metrics.csv, best.ckpt, final.ckpt (and summary.csv for
 * multi-run configs) under out_dir. */
mk_status mk_train_run(const char* run_config_json, char** summary_json_out);

/* data_path: NPZ path, or "synth:{...}" for a generated set. split:
 * train|val|test (NULL = test). dump_logits_path may be NULL. */
mk_status mk_evaluate(const char* ckpt_path, const char* data_path, const char* split,
                      const char* dump_logits_path, char** report_json_out);

/* Runs every registered finite-difference gradient check (f64). Returns
 * MK_OK only if all pass; MK_FAIL otherwise. */
mk_status mk_gradcheck(int with_corrupt_fixture, char** report_json_out);

/* options_json keys (all optional): ks, widths, batches, warmup, iters,
 * seed, max_threads. NULL runs the default sweep. */
mk_status mk_bench(const char* options_json, char** csv_out);

/* target_class < 0 uses the sample's label; stage < 0 uses the last stage.
 * Writes <out_prefix>.ppm and <out_prefix>.f32. */
mk_status mk_gradcam_run(const char* ckpt_path, const char* data_path, const char* split,
                         int index, int target_class, int stage, const char* out_prefix,
                         char** report_json_out);

mk_status mk_make_synth(const char* synth_json, const char* out_path, char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif /* MEDKAN_H */
