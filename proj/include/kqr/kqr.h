/*
 * kqr - kernel quantile regression.
 *
 * C interface to the fitting, prediction, scoring and model-selection
 * library. Objects are opaque handles released with the matching *_free
 * function. Every fallible call returns a kqr_status; on failure the
 * thread-local kqr_last_error_* accessors describe what went wrong.
 *
 * Matrices are passed as row-major arrays of doubles. Strings returned
 * through char** must be released with kqr_string_free.
 */
#ifndef KQR_KQR_H
#define KQR_KQR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(KQR_BUILDING_LIBRARY)
#    define KQR_API __declspec(dllexport)
#  else
#    define KQR_API __declspec(dllimport)
#  endif
#else
#  define KQR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum kqr_status {
  KQR_OK = 0,
  KQR_ERR_CONFIG = 2,    /* invalid option, parameter, recipe or grid */
  KQR_ERR_DATA = 3,      /* unreadable, malformed or mis-shaped data */
  KQR_ERR_NUMERICAL = 4, /* solver or factorization failure */
  KQR_ERR_INTERNAL = 5
} kqr_status;

typedef enum kqr_qp_status {
  KQR_QP_CONVERGED = 0,
  KQR_QP_MAX_ITER = 1,
  KQR_QP_NUMERICAL_FAILURE = 2
} kqr_qp_status;

typedef struct kqr_dataset kqr_dataset;
typedef struct kqr_model kqr_model;

typedef struct kqr_solver_settings {
  int max_iterations;
  double gap_tolerance;
  double feasibility_tolerance;
} kqr_solver_settings;

typedef struct kqr_qp_info {
  double objective;
  double duality_gap;
  int iterations;
  kqr_qp_status status;
} kqr_qp_info;

typedef struct kqr_kkt_report {
  double stationarity;
  double primal_feas;
  double comp_slack;
} kqr_kkt_report;

KQR_API const char* kqr_version(void);

/* Details of the most recent failure on the calling thread. */
KQR_API const char* kqr_last_error_message(void);
/* "config", "input", "domain", "io", "parse", "version", "numerical", "internal" */
KQR_API const char* kqr_last_error_kind(void);
/* Offending flag, parameter or column; empty when not applicable. */
KQR_API const char* kqr_last_error_field(void);

KQR_API void kqr_string_free(char* s);

KQR_API kqr_solver_settings kqr_solver_settings_default(void);

/* ---- kernels ---------------------------------------------------------- */

/* kernel_json: {"family": "...", "params": {...}} */
KQR_API kqr_status kqr_kernel_eval(const char* kernel_json, const double* x, const double* xp,
                                   size_t d, double* out);

/* K_out receives n*n values; jitter_out (nullable) the diagonal shift. */
KQR_API kqr_status kqr_gram_matrix(const char* kernel_json, const double* X, size_t n, size_t d,
                                   double* K_out, double* jitter_out);

/* out receives m*n values, entry (j, i) = k(X_new_j, X_train_i). */
KQR_API kqr_status kqr_cross_gram(const char* kernel_json, const double* X_train, size_t n,
                                  const double* X_new, size_t m, size_t d, double* out);

/* JSON array describing the ten supported kernels. */
KQR_API kqr_status kqr_kernels_json(char** out);

/* ---- dual QP ---------------------------------------------------------- */

/* settings may be NULL for defaults; info may be NULL. */
KQR_API kqr_status kqr_solve_dual(const double* K, const double* y, size_t n, double C, double q,
                                  const kqr_solver_settings* settings, double* a_out,
                                  kqr_qp_info* info);

KQR_API kqr_status kqr_kkt_residuals(const double* K, const double* y, size_t n, double C,
                                     double q, const double* a, kqr_kkt_report* out);

/* ---- scoring ---------------------------------------------------------- */

KQR_API kqr_status kqr_pinball(double q, const double* y_true, const double* y_pred, size_t m,
                               double* out);
KQR_API kqr_status kqr_empirical_quantile(const double* values, size_t n, double q, double* out);
KQR_API kqr_status kqr_coverage(const double* y_true, const double* low, const double* high,
                                size_t m, double* out);

/* ---- datasets --------------------------------------------------------- */

/* recipe_json: feature list or {"features": [...], "holidays": ...}; NULL
 * uses every column except timestamp and the target.
 * target may be NULL or empty for feature-only input. With
 * target_required == 0 a missing target column or cell is allowed. */
KQR_API kqr_status kqr_dataset_read(const char* path, const char* recipe_json, const char* target,
                                    int target_required, kqr_dataset** out);
KQR_API void kqr_dataset_free(kqr_dataset* ds);
KQR_API size_t kqr_dataset_rows(const kqr_dataset* ds);
KQR_API size_t kqr_dataset_cols(const kqr_dataset* ds);
KQR_API size_t kqr_dataset_dropped(const kqr_dataset* ds);
KQR_API int kqr_dataset_has_target(const kqr_dataset* ds);
KQR_API size_t kqr_dataset_warning_count(const kqr_dataset* ds);
KQR_API const char* kqr_dataset_warning(const kqr_dataset* ds, size_t i);
/* rows*cols row-major features. */
KQR_API kqr_status kqr_dataset_features(const kqr_dataset* ds, double* out);
/* rows values; NaN where the target is absent. */
KQR_API kqr_status kqr_dataset_target(const kqr_dataset* ds, double* out);

/* ---- models ----------------------------------------------------------- */

/* One level per quantile, strictly increasing in (0, 1). C_per_q holds k
 * values. Features are standardized on the dataset, calendar columns pass
 * through unscaled. */
KQR_API kqr_status kqr_model_fit(const kqr_dataset* ds, const char* kernel_json,
                                 const double* quantiles, const double* C_per_q, size_t k,
                                 int rearrange, const kqr_solver_settings* settings,
                                 kqr_model** out);

/* Same as kqr_model_fit on raw arrays. categorical_mask may be NULL. */
KQR_API kqr_status kqr_model_fit_arrays(const double* X, size_t n, size_t d, const double* y,
                                        const int* categorical_mask, const char* kernel_json,
                                        const double* quantiles, const double* C_per_q, size_t k,
                                        int rearrange, const kqr_solver_settings* settings,
                                        kqr_model** out);

KQR_API void kqr_model_free(kqr_model* model);
KQR_API kqr_status kqr_model_save(const kqr_model* model, const char* path);
KQR_API kqr_status kqr_model_load(const char* path, kqr_model** out);
/* Recorded in the model file; NULL clears it. */
KQR_API kqr_status kqr_model_set_created_at(kqr_model* model, const char* iso_time);

KQR_API size_t kqr_model_quantile_count(const kqr_model* model);
KQR_API size_t kqr_model_dim(const kqr_model* model);
KQR_API kqr_status kqr_model_quantiles(const kqr_model* model, double* out);

/* n, d, feature names and per-quantile solver diagnostics as JSON. */
KQR_API kqr_status kqr_model_summary_json(const kqr_model* model, char** out);

/* out receives m*k values. rearrange < 0 uses the model's setting. */
KQR_API kqr_status kqr_model_predict(const kqr_model* model, const double* X, size_t m, size_t d,
                                     int rearrange, double* out);

/* Reads data_path with the model's recipe (or recipe_json when non-NULL),
 * predicts every row and writes a band CSV. The observed column is included
 * when the data carries the model's target. summary_json (nullable)
 * receives {"rows": ..., "observed": ..., "dropped": ...}. */
KQR_API kqr_status kqr_model_predict_bands(const kqr_model* model, const char* data_path,
                                           const char* recipe_json, int rearrange,
                                           const char* band_path, char** summary_json);

/* ---- evaluation ------------------------------------------------------- */

/* Scores a band CSV that has an observed column. scale <= 0 selects the
 * mean |observed|. Either output path may be NULL. */
KQR_API kqr_status kqr_evaluate_bands(const char* band_path, double scale,
                                      const char* report_json_path, const char* table_csv_path,
                                      char** report_json);

/* Aggregates a "quantile,pinball" CSV of precomputed losses. scale <= 0
 * means 1. */
KQR_API kqr_status kqr_evaluate_losses(const char* losses_path, double scale,
                                       const char* report_json_path, const char* table_csv_path,
                                       char** report_json);

/* ---- model selection -------------------------------------------------- */

/* Expanding-window grid search at level q. grid_json NULL selects the
 * default grid; min_train 0 selects half the rows. best_json receives the
 * best grid point. */
KQR_API kqr_status kqr_cross_validate(const kqr_dataset* ds, const char* kernel_json,
                                      const char* grid_json, size_t n_folds, size_t min_train,
                                      double q, const kqr_solver_settings* settings,
                                      const char* result_json_path, const char* heatmap_csv_path,
                                      char** best_json);

/* ---- synthetic data --------------------------------------------------- */

KQR_API kqr_status kqr_synthetic_csv(const char* path, size_t rows, uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif /* KQR_KQR_H */
