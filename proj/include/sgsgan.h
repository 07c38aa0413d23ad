/* sgsgan - segmentation-guided style-based GAN for low-dose volume
 * translation: C API of the shared library.
 *
 * All functions return sgs_status; on failure sgs_last_error() holds a
 * thread-local description. Objects are opaque handles owned by the caller
 * and released with the matching _destroy function.
 */
#ifndef SGSGAN_H
#define SGSGAN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined _WIN32
#define SGS_API __declspec(dllexport)
#else
#define SGS_API __attribute__((visibility("default")))
#endif

typedef enum sgs_status {
  SGS_OK = 0,
  SGS_ERROR = 1,          /* unclassified failure */
  SGS_CONFIG_ERROR = 2,   /* bad configuration or arguments */
  SGS_DATA_ERROR = 3,     /* missing/corrupt files or datasets */
  SGS_NUMERIC_ERROR = 4   /* NaN gradients or failed numeric validation */
} sgs_status;

typedef struct sgs_config sgs_config;
typedef struct sgs_volume sgs_volume;
typedef struct sgs_model sgs_model;

/* optional sink for progress lines (training epochs etc.) */
typedef void (*sgs_log_fn)(const char* line, void* user);

SGS_API const char* sgs_version(void);
SGS_API const char* sgs_last_error(void);

/* ------------------------------------------------------------------ */
/* configuration                                                       */
/* ------------------------------------------------------------------ */

SGS_API sgs_config* sgs_config_create(void);
SGS_API void sgs_config_destroy(sgs_config* cfg);
SGS_API sgs_status sgs_config_load(sgs_config* cfg, const char* path);
SGS_API sgs_status sgs_config_set(sgs_config* cfg, const char* key,
                                  const char* value);
/* copies the value into buf (NUL terminated); fails if buf is too small */
SGS_API sgs_status sgs_config_get(const sgs_config* cfg, const char* key,
                                  char* buf, size_t buf_size);
SGS_API sgs_status sgs_config_digest(const sgs_config* cfg, char* buf,
                                     size_t buf_size);
SGS_API sgs_status sgs_config_validate(const sgs_config* cfg);
/* generated reference of every key, default and description; returns the
 * number of bytes (excluding the NUL) that were or would be written */
SGS_API size_t sgs_config_reference(char* buf, size_t buf_size);

/* ------------------------------------------------------------------ */
/* volumes (PVOL1 files)                                               */
/* ------------------------------------------------------------------ */

SGS_API sgs_status sgs_volume_create(uint32_t nx, uint32_t ny, uint32_t nz,
                                     const float* data, sgs_volume** out);
SGS_API sgs_status sgs_volume_read(const char* path, sgs_volume** out);
SGS_API sgs_status sgs_volume_write(const sgs_volume* vol, const char* path);
SGS_API void sgs_volume_dims(const sgs_volume* vol, uint32_t* nx, uint32_t* ny,
                             uint32_t* nz);
SGS_API const float* sgs_volume_data(const sgs_volume* vol);
SGS_API void sgs_volume_destroy(sgs_volume* vol);

/* ------------------------------------------------------------------ */
/* pipeline operations                                                 */
/* ------------------------------------------------------------------ */

/* Builds the synthetic paired dataset under out_dir (refuses a non-empty
 * directory unless force is non-zero). */
SGS_API sgs_status sgs_phantom_build(const sgs_config* cfg, uint64_t seed,
                                     const char* out_dir, int force);

/* Runs (or resumes) the four-phase schedule; checkpoints and metrics.log
 * are written under out_dir. log_fn may be NULL. */
SGS_API sgs_status sgs_train(const sgs_config* cfg, const char* data_dir,
                             const char* out_dir, sgs_log_fn log_fn,
                             void* log_user);

/* Loads the generator of a checkpoint for test-mode translation of
 * volume_size^3 inputs. */
SGS_API sgs_status sgs_model_load(const sgs_config* cfg, const char* ckpt_path,
                                  uint32_t volume_size, sgs_model** out);
SGS_API void sgs_model_destroy(sgs_model* model);
SGS_API sgs_status sgs_translate(const sgs_model* model, const sgs_volume* x,
                                 sgs_volume** yhat);

/* Evaluates a checkpoint on the dataset's test split: writes the text
 * report and the TSV summary (either path may be NULL to skip). The
 * harness checkpoint is loaded when given, otherwise trained on the train
 * split (and saved when save_harness is non-NULL). */
SGS_API sgs_status sgs_eval(const sgs_config* cfg, const char* ckpt_path,
                            const char* data_dir, const char* harness_path,
                            const char* save_harness, const char* report_text,
                            const char* report_tsv);

/* Full finite-difference suite; fills the worst relative error and fails
 * with SGS_NUMERIC_ERROR when it exceeds 1e-4. */
SGS_API sgs_status sgs_gradcheck(double* max_rel_err);

/* Converts a metrics report: format is "text" or "tsv". */
SGS_API sgs_status sgs_report_convert(const char* in_path, const char* format,
                                      const char* out_path);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SGSGAN_H */
