/* Exercises the shared library through its C header only. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "kqr/kqr.h"

static int failures = 0;
static int checks = 0;

#define CHECK(cond)                                                  \
  do {                                                               \
    ++checks;                                                        \
    if (!(cond)) {                                                   \
      ++failures;                                                    \
      fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__, __LINE__, #cond); \
    }                                                                \
  } while (0)

static const char* tmp_path(const char* name) {
  static char buf[4][512];
  static int slot = 0;
  const char* dir = getenv("TMPDIR");
  char* out = buf[slot++ % 4];
  snprintf(out, sizeof buf[0], "%s/kqr_capi_%s", dir && *dir ? dir : "/tmp", name);
  return out;
}

static char* slurp(const char* path) {
  FILE* f = fopen(path, "rb");
  if (!f) return NULL;
  fseek(f, 0, SEEK_END);
  long len = ftell(f);
  fseek(f, 0, SEEK_SET);
  char* text = malloc((size_t)len + 1);
  size_t got = fread(text, 1, (size_t)len, f);
  text[got] = '\0';
  fclose(f);
  return text;
}

static void test_errors(void) {
  double v = 0;
  const double x[1] = {0};
  CHECK(kqr_kernel_eval("{\"family\": \"nope\"}", x, x, 1, &v) == KQR_ERR_CONFIG);
  CHECK(strlen(kqr_last_error_message()) > 0);
  CHECK(strcmp(kqr_last_error_kind(), "config") == 0);
  CHECK(kqr_kernel_eval("not json", x, x, 1, &v) == KQR_ERR_CONFIG);
  CHECK(kqr_kernel_eval(NULL, x, x, 1, &v) == KQR_ERR_CONFIG);
  CHECK(kqr_pinball(0.5, x, x, 1, NULL) == KQR_ERR_CONFIG);
  CHECK(kqr_empirical_quantile(x, 0, 0.5, &v) == KQR_ERR_DATA);

  CHECK(kqr_pinball(0.5, x, x, 1, &v) == KQR_OK);
  CHECK(strcmp(kqr_last_error_message(), "") == 0);
  CHECK(strlen(kqr_version()) > 0);
}

static void test_kernels(void) {
  const double x[2] = {0, 0}, xp[2] = {1, 1};
  double v = 0;
  CHECK(kqr_kernel_eval("{\"family\": \"gaussian_rbf\", \"params\": {\"gamma\": 0.5}}", x, xp, 2,
                        &v) == KQR_OK);
  CHECK(fabs(v - exp(-1.0)) <= 1e-15);
  CHECK(kqr_kernel_eval("{\"family\": \"linear\"}", xp, xp, 2, &v) == KQR_OK);
  CHECK(v == 2.0);
  CHECK(kqr_kernel_eval("{\"family\": \"gaussian_rbf\", \"params\": {\"gamma\": -1}}", x, xp, 2,
                        &v) == KQR_ERR_CONFIG);
  CHECK(strcmp(kqr_last_error_field(), "gamma") == 0);

  const double X[3] = {2, -2, 0};
  double K[9], jitter = -1;
  CHECK(kqr_gram_matrix("{\"family\": \"sigmoid\", \"params\": {\"gamma\": 1, \"coef0\": 0}}", X,
                        3, 1, K, &jitter) == KQR_OK);
  CHECK(jitter == 0.0);
  CHECK(K[1] == K[3]);
  CHECK(fabs(K[0] - tanh(4.0)) <= 1e-15);

  double cross[3];
  const double Xn[1] = {1};
  CHECK(kqr_cross_gram("{\"family\": \"linear\"}", X, 3, Xn, 1, 1, cross) == KQR_OK);
  CHECK(cross[0] == 2 && cross[1] == -2 && cross[2] == 0);

  char* listing = NULL;
  CHECK(kqr_kernels_json(&listing) == KQR_OK);
  CHECK(listing && strstr(listing, "matern_2.5") && strstr(listing, "cosine"));
  kqr_string_free(listing);
}

static void test_qp(void) {
  const double K[4] = {1, 0, 0, 1}, y[2] = {1, 0};
  double a[2];
  kqr_qp_info info;
  CHECK(kqr_solve_dual(K, y, 2, 1.0, 0.5, NULL, a, &info) == KQR_OK);
  CHECK(info.status == KQR_QP_CONVERGED);
  CHECK(fabs(a[0] - 0.5) <= 1e-9 && fabs(a[1] + 0.5) <= 1e-9);
  CHECK(fabs(info.objective + 0.25) <= 1e-8);

  kqr_kkt_report r;
  CHECK(kqr_kkt_residuals(K, y, 2, 1.0, 0.5, a, &r) == KQR_OK);
  CHECK(r.stationarity <= 1e-8 && r.primal_feas <= 1e-8 && r.comp_slack <= 1e-8);

  const double bad[4] = {1, 0.3, 0, 1};
  CHECK(kqr_solve_dual(bad, y, 2, 1.0, 0.5, NULL, a, NULL) == KQR_ERR_DATA);
  CHECK(kqr_solve_dual(K, y, 2, 1.0, 1.5, NULL, a, NULL) == KQR_ERR_CONFIG);

  kqr_solver_settings s = kqr_solver_settings_default();
  CHECK(s.max_iterations > 0 && s.gap_tolerance > 0);
  s.gap_tolerance = -1;
  CHECK(kqr_solve_dual(K, y, 2, 1.0, 0.5, &s, a, NULL) == KQR_ERR_CONFIG);
}

static void test_scoring(void) {
  const double v[5] = {5, 3, 1, 4, 2};
  double out = 0;
  CHECK(kqr_empirical_quantile(v, 5, 0.2, &out) == KQR_OK && out == 1);
  const double y[1] = {2}, f[1] = {0};
  CHECK(kqr_pinball(0.9, y, f, 1, &out) == KQR_OK && fabs(out - 1.8) <= 1e-15);
  const double lo[1] = {1}, hi[1] = {3};
  CHECK(kqr_coverage(y, lo, hi, 1, &out) == KQR_OK && out == 1.0);
}

static void test_pipeline(void) {
  const char* csv = tmp_path("data.csv");
  CHECK(kqr_synthetic_csv(csv, 120, 11) == KQR_OK);

  kqr_dataset* ds = NULL;
  CHECK(kqr_dataset_read(csv, "[\"temperature\", \"hour\"]", "load", 1, &ds) == KQR_OK);
  CHECK(kqr_dataset_rows(ds) == 120);
  CHECK(kqr_dataset_cols(ds) == 2);
  CHECK(kqr_dataset_has_target(ds));
  CHECK(kqr_dataset_warning_count(ds) == 0);
  double* feats = malloc(sizeof(double) * 240);
  CHECK(kqr_dataset_features(ds, feats) == KQR_OK);
  CHECK(feats[1] == 0 && feats[3] == 1);
  free(feats);

  kqr_dataset* missing = NULL;
  CHECK(kqr_dataset_read(csv, "[\"pressure\"]", "load", 1, &missing) == KQR_ERR_CONFIG);
  CHECK(missing == NULL);
  CHECK(kqr_dataset_read("/nonexistent.csv", NULL, "load", 1, &missing) == KQR_ERR_DATA);

  const double qs[3] = {0.1, 0.5, 0.9}, Cs[3] = {1000, 1000, 1000};
  kqr_model* model = NULL;
  const char* kernel = "{\"family\": \"gaussian_rbf\", \"params\": {\"gamma\": 0.5}}";
  CHECK(kqr_model_fit(ds, kernel, qs, Cs, 3, 1, NULL, &model) == KQR_OK);
  CHECK(kqr_model_quantile_count(model) == 3);
  CHECK(kqr_model_dim(model) == 2);
  double got[3];
  CHECK(kqr_model_quantiles(model, got) == KQR_OK && got[2] == 0.9);

  char* summary = NULL;
  CHECK(kqr_model_summary_json(model, &summary) == KQR_OK);
  CHECK(summary && strstr(summary, "\"support_vectors\"") && strstr(summary, "temperature"));
  kqr_string_free(summary);

  const double unsorted[2] = {0.5, 0.1};
  kqr_model* bad = NULL;
  CHECK(kqr_model_fit(ds, kernel, unsorted, Cs, 2, 0, NULL, &bad) == KQR_ERR_CONFIG);
  CHECK(bad == NULL);

  const double X[4] = {5, 3, -2, 17};
  double p1[6], p2[6];
  CHECK(kqr_model_predict(model, X, 2, 2, -1, p1) == KQR_OK);
  CHECK(p1[0] <= p1[1] && p1[1] <= p1[2]);
  CHECK(kqr_model_predict(model, X, 4, 1, -1, p1) == KQR_ERR_DATA);
  CHECK(strstr(kqr_last_error_message(), "expects 2") != NULL);

  const char* path = tmp_path("model.json");
  CHECK(kqr_model_set_created_at(model, "2024-01-01T00:00:00Z") == KQR_OK);
  CHECK(kqr_model_save(model, path) == KQR_OK);
  kqr_model* loaded = NULL;
  CHECK(kqr_model_load(path, &loaded) == KQR_OK);
  CHECK(kqr_model_predict(model, X, 2, 2, -1, p1) == KQR_OK);
  CHECK(kqr_model_predict(loaded, X, 2, 2, -1, p2) == KQR_OK);
  CHECK(memcmp(p1, p2, sizeof p1) == 0);
  char* text = slurp(path);
  CHECK(text && strstr(text, "2024-01-01T00:00:00Z"));
  free(text);

  const char* bands = tmp_path("bands.csv");
  char* psum = NULL;
  CHECK(kqr_model_predict_bands(loaded, csv, NULL, -1, bands, &psum) == KQR_OK);
  CHECK(psum && strstr(psum, "\"rows\""));
  kqr_string_free(psum);
  char* band_text = slurp(bands);
  CHECK(band_text && strncmp(band_text, "timestamp,observed,q10,q50,q90\n", 31) == 0);
  free(band_text);

  char* report = NULL;
  CHECK(kqr_evaluate_bands(bands, 0, NULL, NULL, &report) == KQR_OK);
  CHECK(report && strstr(report, "crps_proxy"));
  kqr_string_free(report);
  CHECK(kqr_evaluate_bands(bands, 0, NULL, NULL, NULL) == KQR_OK);

  char* best = NULL;
  CHECK(kqr_cross_validate(ds, kernel, "{\"C\": [1, 10], \"gamma\": [0.5]}", 3, 0, 0.5, NULL,
                           NULL, NULL, &best) == KQR_OK);
  CHECK(best && strstr(best, "best_point"));
  kqr_string_free(best);
  CHECK(kqr_cross_validate(ds, kernel, NULL, 3, 119, 0.5, NULL, NULL, NULL, NULL) ==
        KQR_ERR_CONFIG);

  kqr_model_free(loaded);
  kqr_model_free(model);
  kqr_dataset_free(ds);
  kqr_model_free(NULL);
  kqr_dataset_free(NULL);
}

static void test_losses(void) {
  const char* path = tmp_path("losses.csv");
  FILE* f = fopen(path, "wb");
  fputs("quantile,pinball\n0.1,100\n0.5,100\n0.9,100\n", f);
  fclose(f);
  char* report = NULL;
  CHECK(kqr_evaluate_losses(path, 4000, NULL, NULL, &report) == KQR_OK);
  CHECK(report && strstr(report, "0.025"));
  kqr_string_free(report);
  CHECK(kqr_evaluate_losses("/nonexistent.csv", 1, NULL, NULL, NULL) == KQR_ERR_DATA);
}

int main(void) {
  test_errors();
  test_kernels();
  test_qp();
  test_scoring();
  test_pipeline();
  test_losses();
  printf("%d checks, %d failed\n", checks, failures);
  return failures == 0 ? 0 : 1;
}
