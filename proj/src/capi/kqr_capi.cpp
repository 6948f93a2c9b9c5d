#include "kqr/kqr.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/error.hpp"
#include "core/features.hpp"
#include "core/io.hpp"
#include "core/kernels.hpp"
#include "core/model.hpp"
#include "core/model_selection.hpp"
#include "core/qp.hpp"
#include "core/scoring.hpp"
#include "core/synth.hpp"

struct kqr_dataset {
  kqr::Dataset data;
};

struct kqr_model {
  kqr::ModelFile file;
};

namespace {

using ojson = nlohmann::ordered_json;

thread_local std::string g_message;
thread_local std::string g_kind;
thread_local std::string g_field;

kqr_status status_for(kqr::ErrorKind kind) {
  switch (kind) {
    case kqr::ErrorKind::Config:
      return KQR_ERR_CONFIG;
    case kqr::ErrorKind::Input:
    case kqr::ErrorKind::Domain:
    case kqr::ErrorKind::Io:
    case kqr::ErrorKind::Parse:
    case kqr::ErrorKind::Version:
      return KQR_ERR_DATA;
    case kqr::ErrorKind::Numerical:
      return KQR_ERR_NUMERICAL;
  }
  return KQR_ERR_INTERNAL;
}

void clear_error() {
  g_message.clear();
  g_kind.clear();
  g_field.clear();
}

kqr_status fail(kqr_status status, std::string kind, std::string message, std::string field = {}) {
  g_kind = std::move(kind);
  g_message = std::move(message);
  g_field = std::move(field);
  return status;
}

template <class F>
kqr_status guarded(F&& body) {
  clear_error();
  try {
    body();
    return KQR_OK;
  } catch (const kqr::Error& e) {
    return fail(status_for(e.kind()), kqr::kind_name(e.kind()), e.what(), e.field());
  } catch (const nlohmann::json::exception& e) {
    return fail(KQR_ERR_CONFIG, "config", std::string("invalid JSON: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail(KQR_ERR_INTERNAL, "internal", "out of memory");
  } catch (const std::exception& e) {
    return fail(KQR_ERR_INTERNAL, "internal", e.what());
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) {
    throw kqr::Error(kqr::ErrorKind::Config, std::string(name) + " must not be NULL", name);
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ojson parse_json(const char* text, const char* what) {
  require(text, what);
  try {
    return ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw kqr::Error(kqr::ErrorKind::Config, std::string(what) + " is not valid JSON: " + e.what(),
                     what);
  }
}

kqr::KernelSpec parse_kernel(const char* kernel_json) {
  return kqr::KernelSpec::from_json(parse_json(kernel_json, "kernel"));
}

kqr::SolverSettings to_settings(const kqr_solver_settings* s) {
  kqr::SolverSettings out;
  if (s != nullptr) {
    out.max_iterations = s->max_iterations;
    out.gap_tolerance = s->gap_tolerance;
    out.feasibility_tolerance = s->feasibility_tolerance;
  }
  out.validate();
  return out;
}

kqr::RowMatrix to_matrix(const double* data, size_t rows, size_t cols) {
  kqr::RowMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (rows * cols > 0) std::memcpy(m.data(), data, rows * cols * sizeof(double));
  return m;
}

kqr::Matrix square(const double* K, size_t n) {
  kqr::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) m(i, j) = K[i * n + j];
  }
  return m;
}

kqr::Vector to_vector(const double* v, size_t n) {
  kqr::Vector out(static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) out[i] = v[i];
  return out;
}

void write_if(const char* path, const std::string& content) {
  if (path != nullptr && *path != '\0') kqr::write_text_file(path, content);
}

ojson model_summary(const kqr::ModelFile& file) {
  const auto& model = file.model;
  const auto& basis = model.basis();
  ojson j;
  j["n"] = basis.X_train.rows();
  j["d"] = basis.X_train.cols();
  j["kernel"] = basis.kernel.to_json();
  j["feature_names"] = file.feature_names;
  j["target"] = file.target;
  j["rearrange"] = model.rearrange;
  ojson per = ojson::array();
  for (const auto& m : model.models) {
    ojson e;
    e["q"] = m.q;
    e["C"] = m.C;
    e["status"] = kqr::status_name(m.diagnostics.status);
    e["iterations"] = m.diagnostics.iterations;
    e["support_vectors"] = m.support_indices.size();
    e["duality_gap"] = m.diagnostics.duality_gap;
    e["jitter"] = m.diagnostics.jitter;
    per.push_back(std::move(e));
  }
  j["quantiles"] = std::move(per);
  return j;
}

std::vector<double> vec(const double* p, size_t k) { return std::vector<double>(p, p + k); }

kqr::ModelFile fit_model(const kqr::RowMatrix& X, const kqr::Vector& y, std::vector<bool> mask,
                         const char* kernel_json, const double* quantiles, const double* C_per_q,
                         size_t k, int rearrange, const kqr_solver_settings* settings) {
  require(quantiles, "quantiles");
  require(C_per_q, "C");
  const kqr::KernelSpec kernel = parse_kernel(kernel_json);
  const kqr::SolverSettings s = to_settings(settings);
  const auto qs = vec(quantiles, k);
  kqr::validate_quantiles(qs);
  const kqr::Standardizer scaler = kqr::fit_standardizer(X, std::move(mask));
  kqr::ModelFile file;
  file.model = kqr::fit_multi(X, y, qs, vec(C_per_q, k), kernel, scaler, s, rearrange != 0);
  return file;
}

}  // namespace

extern "C" {

const char* kqr_version(void) { return "1.0.0"; }

const char* kqr_last_error_message(void) { return g_message.c_str(); }
const char* kqr_last_error_kind(void) { return g_kind.c_str(); }
const char* kqr_last_error_field(void) { return g_field.c_str(); }

void kqr_string_free(char* s) { std::free(s); }

kqr_solver_settings kqr_solver_settings_default(void) {
  const kqr::SolverSettings d;
  return {d.max_iterations, d.gap_tolerance, d.feasibility_tolerance};
}

// ---- kernels

kqr_status kqr_kernel_eval(const char* kernel_json, const double* x, const double* xp, size_t d,
                           double* out) {
  return guarded([&] {
    require(x, "x");
    require(xp, "xp");
    require(out, "out");
    const auto spec = parse_kernel(kernel_json);
    *out = kqr::kernel_eval(spec, {x, d}, {xp, d});
  });
}

kqr_status kqr_gram_matrix(const char* kernel_json, const double* X, size_t n, size_t d,
                           double* K_out, double* jitter_out) {
  return guarded([&] {
    require(X, "X");
    require(K_out, "K_out");
    const auto spec = parse_kernel(kernel_json);
    const auto gram = kqr::gram_matrix(spec, to_matrix(X, n, d));
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) K_out[i * n + j] = gram.values(i, j);
    }
    if (jitter_out != nullptr) *jitter_out = gram.jitter_applied;
  });
}

kqr_status kqr_cross_gram(const char* kernel_json, const double* X_train, size_t n,
                          const double* X_new, size_t m, size_t d, double* out) {
  return guarded([&] {
    require(X_train, "X_train");
    require(X_new, "X_new");
    require(out, "out");
    const auto spec = parse_kernel(kernel_json);
    const auto block = kqr::cross_gram(spec, to_matrix(X_train, n, d), to_matrix(X_new, m, d));
    for (size_t j = 0; j < m; ++j) {
      for (size_t i = 0; i < n; ++i) out[j * n + i] = block(j, i);
    }
  });
}

kqr_status kqr_kernels_json(char** out) {
  return guarded([&] {
    require(out, "out");
    ojson j = ojson::array();
    for (const auto& k : kqr::kernel_catalog()) {
      j.push_back({{"name", k.name},
                   {"family", k.family},
                   {"required_params", k.required_params},
                   {"formula", k.formula}});
    }
    *out = dup_string(j.dump(2));
  });
}

// ---- dual QP

kqr_status kqr_solve_dual(const double* K, const double* y, size_t n, double C, double q,
                          const kqr_solver_settings* settings, double* a_out, kqr_qp_info* info) {
  return guarded([&] {
    require(K, "K");
    require(y, "y");
    require(a_out, "a_out");
    const kqr::QpProblem problem{square(K, n), to_vector(y, n), C, q};
    const auto sol = kqr::solve_dual(problem, to_settings(settings));
    for (size_t i = 0; i < n; ++i) a_out[i] = sol.a[static_cast<Eigen::Index>(i)];
    if (info != nullptr) {
      info->objective = sol.objective;
      info->duality_gap = sol.duality_gap;
      info->iterations = sol.iterations;
      info->status = sol.status == kqr::QpStatus::Converged ? KQR_QP_CONVERGED
                     : sol.status == kqr::QpStatus::MaxIter ? KQR_QP_MAX_ITER
                                                            : KQR_QP_NUMERICAL_FAILURE;
    }
  });
}

kqr_status kqr_kkt_residuals(const double* K, const double* y, size_t n, double C, double q,
                             const double* a, kqr_kkt_report* out) {
  return guarded([&] {
    require(K, "K");
    require(y, "y");
    require(a, "a");
    require(out, "out");
    const kqr::QpProblem problem{square(K, n), to_vector(y, n), C, q};
    problem.validate();
    const auto r = kqr::kkt_residuals(problem, to_vector(a, n));
    out->stationarity = r.stationarity;
    out->primal_feas = r.primal_feas;
    out->comp_slack = r.comp_slack;
  });
}

// ---- scoring

kqr_status kqr_pinball(double q, const double* y_true, const double* y_pred, size_t m,
                       double* out) {
  return guarded([&] {
    require(y_true, "y_true");
    require(y_pred, "y_pred");
    require(out, "out");
    *out = kqr::pinball(q, {y_true, m}, {y_pred, m});
  });
}

kqr_status kqr_empirical_quantile(const double* values, size_t n, double q, double* out) {
  return guarded([&] {
    require(values, "values");
    require(out, "out");
    *out = kqr::empirical_quantile({values, n}, q);
  });
}

kqr_status kqr_coverage(const double* y_true, const double* low, const double* high, size_t m,
                        double* out) {
  return guarded([&] {
    require(y_true, "y_true");
    require(low, "low");
    require(high, "high");
    require(out, "out");
    *out = kqr::coverage({y_true, m}, {low, m}, {high, m});
  });
}

// ---- datasets

kqr_status kqr_dataset_read(const char* path, const char* recipe_json, const char* target,
                            int target_required, kqr_dataset** out) {
  return guarded([&] {
    require(path, "data");
    require(out, "out");
    *out = nullptr;
    const std::string target_name = target ? target : "";
    const kqr::RawTable table = kqr::read_csv(path);
    if (table.rows.empty()) {
      throw kqr::Error(kqr::ErrorKind::Input, "'" + std::string(path) + "' has no data rows", "data");
    }
    ojson recipe = ojson::array();
    if (recipe_json != nullptr) {
      recipe = parse_json(recipe_json, "recipe");
    } else {
      for (const auto& name : table.header) {
        if (name != "timestamp" && name != target_name) recipe.push_back(name);
      }
    }
    auto ds = std::make_unique<kqr_dataset>();
    ds->data = kqr::assemble(table, recipe, target_name, target_required != 0);
    *out = ds.release();
  });
}

void kqr_dataset_free(kqr_dataset* ds) { delete ds; }

size_t kqr_dataset_rows(const kqr_dataset* ds) { return ds ? ds->data.rows() : 0; }
size_t kqr_dataset_cols(const kqr_dataset* ds) {
  return ds ? static_cast<size_t>(ds->data.X.cols()) : 0;
}
size_t kqr_dataset_dropped(const kqr_dataset* ds) { return ds ? ds->data.dropped_rows : 0; }
int kqr_dataset_has_target(const kqr_dataset* ds) { return ds && ds->data.has_target ? 1 : 0; }
size_t kqr_dataset_warning_count(const kqr_dataset* ds) {
  return ds ? ds->data.warnings.size() : 0;
}
const char* kqr_dataset_warning(const kqr_dataset* ds, size_t i) {
  if (!ds || i >= ds->data.warnings.size()) return nullptr;
  return ds->data.warnings[i].c_str();
}

kqr_status kqr_dataset_features(const kqr_dataset* ds, double* out) {
  return guarded([&] {
    require(ds, "dataset");
    require(out, "out");
    const auto& X = ds->data.X;
    if (X.size() > 0) std::memcpy(out, X.data(), static_cast<size_t>(X.size()) * sizeof(double));
  });
}

kqr_status kqr_dataset_target(const kqr_dataset* ds, double* out) {
  return guarded([&] {
    require(ds, "dataset");
    require(out, "out");
    const auto& y = ds->data.y;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ds->data.rows()); ++i) {
      out[i] = ds->data.has_target && i < y.size() ? y[i]
                                                   : std::numeric_limits<double>::quiet_NaN();
    }
  });
}

// ---- models

kqr_status kqr_model_fit(const kqr_dataset* ds, const char* kernel_json, const double* quantiles,
                         const double* C_per_q, size_t k, int rearrange,
                         const kqr_solver_settings* settings, kqr_model** out) {
  return guarded([&] {
    require(ds, "dataset");
    require(out, "out");
    *out = nullptr;
    const auto& d = ds->data;
    if (!d.has_target) {
      throw kqr::Error(kqr::ErrorKind::Config, "fitting needs a target column", "target");
    }
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
      if (!std::isfinite(d.y[i])) {
        throw kqr::Error(kqr::ErrorKind::Input, "target has missing values", "target");
      }
    }
    auto model = std::make_unique<kqr_model>();
    model->file = fit_model(d.X, d.y, d.categorical_mask, kernel_json, quantiles, C_per_q, k,
                            rearrange, settings);
    model->file.feature_names = d.feature_names;
    model->file.target = d.target;
    model->file.recipe = d.recipe;
    *out = model.release();
  });
}

kqr_status kqr_model_fit_arrays(const double* X, size_t n, size_t d, const double* y,
                                const int* categorical_mask, const char* kernel_json,
                                const double* quantiles, const double* C_per_q, size_t k,
                                int rearrange, const kqr_solver_settings* settings,
                                kqr_model** out) {
  return guarded([&] {
    require(X, "X");
    require(y, "y");
    require(out, "out");
    *out = nullptr;
    std::vector<bool> mask(d, false);
    if (categorical_mask != nullptr) {
      for (size_t j = 0; j < d; ++j) mask[j] = categorical_mask[j] != 0;
    }
    auto model = std::make_unique<kqr_model>();
    model->file = fit_model(to_matrix(X, n, d), to_vector(y, n), std::move(mask), kernel_json,
                            quantiles, C_per_q, k, rearrange, settings);
    for (size_t j = 0; j < d; ++j) model->file.feature_names.push_back("x" + std::to_string(j));
    model->file.recipe = ojson::array();
    *out = model.release();
  });
}

void kqr_model_free(kqr_model* model) { delete model; }

kqr_status kqr_model_save(const kqr_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "out");
    kqr::save_model(model->file, path);
  });
}

kqr_status kqr_model_load(const char* path, kqr_model** out) {
  return guarded([&] {
    require(path, "model");
    require(out, "out");
    *out = nullptr;
    auto model = std::make_unique<kqr_model>();
    model->file = kqr::load_model(path);
    *out = model.release();
  });
}

kqr_status kqr_model_set_created_at(kqr_model* model, const char* iso_time) {
  return guarded([&] {
    require(model, "model");
    if (iso_time == nullptr) {
      model->file.created_at.reset();
    } else {
      model->file.created_at = iso_time;
    }
  });
}

size_t kqr_model_quantile_count(const kqr_model* model) {
  return model ? model->file.model.quantiles.size() : 0;
}

size_t kqr_model_dim(const kqr_model* model) {
  return model ? static_cast<size_t>(model->file.model.basis().X_train.cols()) : 0;
}

kqr_status kqr_model_quantiles(const kqr_model* model, double* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    const auto& qs = model->file.model.quantiles;
    for (size_t j = 0; j < qs.size(); ++j) out[j] = qs[j];
  });
}

kqr_status kqr_model_summary_json(const kqr_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = dup_string(model_summary(model->file).dump(2));
  });
}

kqr_status kqr_model_predict(const kqr_model* model, const double* X, size_t m, size_t d,
                             int rearrange, double* out) {
  return guarded([&] {
    require(model, "model");
    require(X, "X");
    require(out, "out");
    kqr::MultiQuantileModel mq = model->file.model;
    if (rearrange >= 0) mq.rearrange = rearrange != 0;
    const kqr::Matrix pred = kqr::predict_multi(mq, to_matrix(X, m, d));
    const auto k = static_cast<size_t>(pred.cols());
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < k; ++j) out[i * k + j] = pred(i, j);
    }
  });
}

kqr_status kqr_model_predict_bands(const kqr_model* model, const char* data_path,
                                   const char* recipe_json, int rearrange, const char* band_path,
                                   char** summary_json) {
  return guarded([&] {
    require(model, "model");
    require(data_path, "data");
    require(band_path, "out");
    const auto& file = model->file;
    const ojson recipe = recipe_json ? parse_json(recipe_json, "recipe") : file.recipe;
    const kqr::Dataset ds = kqr::read_dataset(data_path, recipe, file.target, false);

    kqr::MultiQuantileModel mq = file.model;
    if (rearrange >= 0) mq.rearrange = rearrange != 0;

    kqr::BandTable bands;
    bands.quantiles = mq.quantiles;
    bands.predictions = kqr::predict_multi(mq, ds.X);
    for (const auto& ts : ds.timestamps) bands.timestamps.push_back(kqr::format_timestamp(ts));
    std::size_t observed = 0;
    if (ds.has_target) {
      std::vector<double> y(ds.y.data(), ds.y.data() + ds.y.size());
      for (double v : y) observed += std::isfinite(v) ? 1 : 0;
      bands.observed = std::move(y);
    }
    kqr::write_bands(band_path, bands);

    if (summary_json != nullptr) {
      ojson s;
      s["rows"] = ds.rows();
      s["observed"] = observed;
      s["dropped"] = ds.dropped_rows;
      s["warnings"] = ds.warnings;
      *summary_json = dup_string(s.dump(2));
    }
  });
}

// ---- evaluation

kqr_status kqr_evaluate_bands(const char* band_path, double scale, const char* report_json_path,
                              const char* table_csv_path, char** report_json) {
  return guarded([&] {
    require(band_path, "data");
    const kqr::BandTable bands = kqr::read_bands(band_path);
    if (!bands.observed) {
      throw kqr::Error(kqr::ErrorKind::Config,
                       "band file '" + std::string(band_path) + "' has no observed column",
                       "data");
    }
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < bands.observed->size(); ++i) {
      if (std::isfinite((*bands.observed)[i])) keep.push_back(static_cast<Eigen::Index>(i));
    }
    if (keep.empty()) {
      throw kqr::Error(kqr::ErrorKind::Input, "band file has no observed values", "data");
    }
    std::vector<double> y;
    kqr::Matrix pred(static_cast<Eigen::Index>(keep.size()), bands.predictions.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      y.push_back((*bands.observed)[static_cast<std::size_t>(keep[r])]);
      pred.row(static_cast<Eigen::Index>(r)) = bands.predictions.row(keep[r]);
    }
    const double s = scale > 0.0 ? scale : kqr::default_scale(y);
    const kqr::ScoreReport report = kqr::scaled_report(y, pred, bands.quantiles, s);
    const std::string text = report.to_json().dump(2) + "\n";
    write_if(report_json_path, text);
    write_if(table_csv_path, kqr::format_report_table(report));
    if (report_json != nullptr) *report_json = dup_string(text);
  });
}

kqr_status kqr_evaluate_losses(const char* losses_path, double scale,
                               const char* report_json_path, const char* table_csv_path,
                               char** report_json) {
  return guarded([&] {
    require(losses_path, "losses");
    const auto losses = kqr::parse_losses(kqr::read_text_file(losses_path));
    const kqr::ScoreReport report = kqr::report_from_losses(losses, scale > 0.0 ? scale : 1.0);
    const std::string text = report.to_json().dump(2) + "\n";
    write_if(report_json_path, text);
    write_if(table_csv_path, kqr::format_report_table(report));
    if (report_json != nullptr) *report_json = dup_string(text);
  });
}

// ---- model selection

kqr_status kqr_cross_validate(const kqr_dataset* ds, const char* kernel_json,
                              const char* grid_json, size_t n_folds, size_t min_train, double q,
                              const kqr_solver_settings* settings, const char* result_json_path,
                              const char* heatmap_csv_path, char** best_json) {
  return guarded([&] {
    require(ds, "dataset");
    const auto& d = ds->data;
    if (!d.has_target) {
      throw kqr::Error(kqr::ErrorKind::Config, "cross-validation needs a target column", "target");
    }
    kqr::validate_quantiles({q});
    const kqr::KernelSpec base = parse_kernel(kernel_json);
    const kqr::SolverSettings s = to_settings(settings);
    const auto grid = grid_json ? kqr::parse_grid(parse_json(grid_json, "grid"), base)
                                : kqr::default_grid(base);
    const std::size_t n = d.rows();
    const auto splits = kqr::make_splits(n, n_folds, min_train > 0 ? min_train : n / 2);
    const auto result = kqr::grid_search(d.X, d.y, q, base, grid, splits, s, d.categorical_mask);
    const ojson j = kqr::grid_result_json(result, base, splits);
    write_if(result_json_path, j.dump(2) + "\n");
    write_if(heatmap_csv_path, kqr::format_heatmap(result));
    if (best_json != nullptr) {
      ojson best;
      best["best_point"] = j["best_point"];
      best["best_score"] = j["best_score"];
      *best_json = dup_string(best.dump(2));
    }
  });
}

// ---- synthetic data

kqr_status kqr_synthetic_csv(const char* path, size_t rows, uint64_t seed) {
  return guarded([&] {
    require(path, "out");
    if (rows == 0) throw kqr::Error(kqr::ErrorKind::Config, "rows must be positive", "rows");
    kqr::write_text_file(path, kqr::synthetic_load_csv(rows, seed));
  });
}

}  // extern "C"
