#ifndef ANCA_H
#define ANCA_H

/* C interface to the anca library: a self-organizing cellular feature
 * extractor with learnable attention pooling for small-image classification.
 *
 * Every function returns an error code (ANCA_OK on success); the message for
 * the calling thread's most recent failure is available via
 * anca_last_error(). Out-parameters are written only on success.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define ANCA_OK 0
#define ANCA_E_CONFIG 1
#define ANCA_E_IO 2
#define ANCA_E_DATA 3
#define ANCA_E_SHAPE 4
#define ANCA_E_CONTRACT 5
#define ANCA_E_NUMERIC 6
#define ANCA_E_INTERNAL 7

/* Library version as "major.minor.patch". */
const char* anca_version(void);

/* Message for the calling thread's most recent error; empty string if none. */
const char* anca_last_error(void);

/* ---- configuration ----------------------------------------------------- */

typedef struct anca_config anca_config;

/* A config with default values for every key. Never fails. */
anca_config* anca_config_new(void);
void anca_config_free(anca_config* cfg);

/* Set/get a single key ("channels", "steps", "pool_mode", ...). Values are
 * the same strings the config file format uses. */
int anca_config_set(anca_config* cfg, const char* key, const char* value);
int anca_config_get(const anca_config* cfg, const char* key, char* buf, size_t cap);

int anca_config_load(const char* path, anca_config** out);
int anca_config_save(const anca_config* cfg, const char* path);

/* Total trainable parameter count for this config at a given class count. */
int anca_param_count(const anca_config* cfg, int num_classes, int64_t* out);

/* ---- training and evaluation ------------------------------------------- */

/* Trains on everything but `fold`, writing metrics.csv and
 * checkpoint_final.anca (plus periodic checkpoints) under out_dir.
 * resume_path may be NULL to start fresh. */
int anca_train(const anca_config* cfg, const char* data_root, int fold, const char* out_dir,
               const char* resume_path);

/* Evaluates a checkpoint on a held-out fold (fold < 0: every record). When
 * out_dir is non-NULL and nonempty, writes eval_metrics.csv and
 * confusion.csv there. Out-pointers may be NULL. */
int anca_evaluate(const char* checkpoint_path, const char* data_root, int fold,
                  const char* out_dir, double* loss, double* accuracy,
                  double* balanced_accuracy);

/* K-fold cross-validation; per-fold runs land in out_dir/fold<i>/ and the
 * summary in out_dir/cv_summary.csv. Out-pointers may be NULL. */
int anca_cross_validate(const anca_config* cfg, const char* data_root, const char* out_dir,
                        double* mean_accuracy, double* std_accuracy,
                        double* mean_balanced_accuracy, double* std_balanced_accuracy);

/* Cross-validates the five pooling variants (top-q at 5/10/20/50% and the
 * content-based map) and writes out_dir/ablation.csv. */
int anca_ablation(const anca_config* cfg, const char* data_root, const char* out_dir);

/* ---- diagnostics and exports ------------------------------------------- */

/* Gate map (<prefix>_gate.pgm), per-channel selection bitmap
 * (<prefix>_selection.pgm), and pooled embedding (<prefix>_embedding.txt)
 * for one image under the checkpoint's parameters. */
int anca_export_attention(const char* checkpoint_path, const char* image_path,
                          const char* out_prefix);

/* Grid states frame_0.ppm .. frame_<steps>.ppm for one image. */
int anca_export_trajectory(const char* checkpoint_path, const char* image_path,
                           const char* out_dir);

/* Finite-difference check of the analytic gradient on config-sized dims at
 * randomized parameters. Writes the worst relative error observed. */
int anca_grad_check(const anca_config* cfg, int num_classes, int coords, double eps,
                    double* max_rel_err);

/* Channel mean/std over a dataset, written to out_path in the two-line
 * stats file format. */
int anca_compute_stats(const char* data_root, const char* out_path);

/* Two-class synthetic dataset (disks vs bars) under out_dir. */
int anca_generate_toy(const char* out_dir, int count, int size, uint64_t seed, int as_png);

/* ---- inference on a trained model -------------------------------------- */

typedef struct anca_model anca_model;

int anca_model_load(const char* checkpoint_path, anca_model** out);
void anca_model_free(anca_model* model);

int anca_model_num_classes(const anca_model* model, int* out);
int anca_model_class_name(const anca_model* model, int index, char* buf, size_t cap);

/* Classifies one image file. probs, when non-NULL, must hold num_classes
 * doubles and receives the class probabilities; label receives the argmax.
 * Either out-pointer may be NULL. */
int anca_model_predict(const anca_model* model, const char* image_path, double* probs,
                       int* label);

#ifdef __cplusplus
}
#endif

#endif /* ANCA_H */
