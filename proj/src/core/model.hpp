#pragma once

#include <memory>
#include <vector>

#include "core/kernels.hpp"
#include "core/model_selection.hpp"
#include "core/qp.hpp"
#include "core/types.hpp"

namespace kqr {

// Everything the representer expansion needs besides the coefficients.
// Shared by all quantile levels fitted on the same data.
struct KernelBasis {
  KernelSpec kernel;
  Standardizer scaler;
  RowMatrix X_train;  // standardized
};

struct FitDiagnostics {
  QpStatus status = QpStatus::Converged;
  int iterations = 0;
  double duality_gap = 0.0;
  double objective = 0.0;
  double jitter = 0.0;
};

struct QuantileModel {
  double q = 0.5;
  double C = 1.0;
  Vector a;
  double b = 0.0;
  std::vector<Eigen::Index> support_indices;
  std::shared_ptr<const KernelBasis> basis;
  FitDiagnostics diagnostics;
};

// Coefficients strictly inside the box by more than 1e-6 * C.
std::vector<Eigen::Index> support_indices(const Vector& a, double C, double q);

// Median of y_i - (Ka)_i over support vectors; with no support vectors, the
// empirical q-quantile of all residuals (the exact minimizer in b alone).
double intercept(const QpProblem& problem, const Vector& a);

QuantileModel fit(const RowMatrix& X, const Vector& y, double q, double C,
                  const KernelSpec& kernel, const Standardizer& scaler,
                  const SolverSettings& settings = {});

// X_new is on the raw feature scale.
Vector predict(const QuantileModel& model, const RowMatrix& X_new);

struct MultiQuantileModel {
  std::vector<double> quantiles;
  std::vector<QuantileModel> models;
  bool rearrange = false;

  const KernelBasis& basis() const { return *models.front().basis; }
};

MultiQuantileModel fit_multi(const RowMatrix& X, const Vector& y, const std::vector<double>& quantiles,
                             const std::vector<double>& C_per_q, const KernelSpec& kernel,
                             const Standardizer& scaler, const SolverSettings& settings = {},
                             bool rearrange = false);

// m x |quantiles|; rows sorted ascending when the model rearranges.
Matrix predict_multi(const MultiQuantileModel& model, const RowMatrix& X_new);

// Sorts every row ascending in place.
void rearrange_rows(Matrix& predictions);

void validate_quantiles(const std::vector<double>& quantiles);

}  // namespace kqr
