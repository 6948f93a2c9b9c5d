#include "core/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "core/error.hpp"
#include "core/scoring.hpp"

namespace kqr {
namespace {

constexpr double kSupportTolerance = 1e-6;

double median(std::vector<double> values) {
  const std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

QuantileModel fit_with_gram(const GramMatrix& gram, const Vector& y, double q, double C,
                            std::shared_ptr<const KernelBasis> basis,
                            const SolverSettings& settings) {
  QpProblem problem{gram.values, y, C, q};
  const QpSolution sol = solve_dual(problem, settings);
  if (sol.status == QpStatus::NumericalFailure) {
    throw Error(ErrorKind::Numerical, "dual solve failed: KKT factorization did not succeed");
  }
  QuantileModel model;
  model.q = q;
  model.C = C;
  model.a = sol.a;
  model.b = intercept(problem, sol.a);
  model.support_indices = support_indices(sol.a, C, q);
  model.basis = std::move(basis);
  model.diagnostics = {sol.status, sol.iterations, sol.duality_gap, sol.objective,
                       gram.jitter_applied};
  return model;
}

std::shared_ptr<const KernelBasis> make_basis(const RowMatrix& X, const Vector& y,
                                              const KernelSpec& kernel,
                                              const Standardizer& scaler) {
  kernel.validate();
  if (X.rows() < 2) throw Error(ErrorKind::Input, "fitting needs at least 2 observations");
  if (y.size() != X.rows()) {
    throw Error(ErrorKind::Input, "target has " + std::to_string(y.size()) + " entries for " +
                                      std::to_string(X.rows()) + " rows");
  }
  if (!X.allFinite() || !y.allFinite()) {
    throw Error(ErrorKind::Input, "training data contains non-finite values");
  }
  auto basis = std::make_shared<KernelBasis>();
  basis->kernel = kernel;
  basis->scaler = scaler;
  basis->X_train = scaler.transform(X);
  return basis;
}

}  // namespace

std::vector<Eigen::Index> support_indices(const Vector& a, double C, double q) {
  const double eps = kSupportTolerance * C;
  const double lo = C * (q - 1.0) + eps;
  const double hi = C * q - eps;
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > lo && a[i] < hi) out.push_back(i);
  }
  return out;
}

double intercept(const QpProblem& problem, const Vector& a) {
  const Vector residual = problem.y - problem.K * a;
  const auto support = support_indices(a, problem.C, problem.q);
  if (support.empty()) {
    return empirical_quantile({residual.data(), static_cast<std::size_t>(residual.size())},
                              problem.q);
  }
  std::vector<double> candidates;
  candidates.reserve(support.size());
  for (Eigen::Index i : support) candidates.push_back(residual[i]);
  return median(std::move(candidates));
}

QuantileModel fit(const RowMatrix& X, const Vector& y, double q, double C,
                  const KernelSpec& kernel, const Standardizer& scaler,
                  const SolverSettings& settings) {
  auto basis = make_basis(X, y, kernel, scaler);
  const GramMatrix gram = gram_matrix(basis->kernel, basis->X_train);
  return fit_with_gram(gram, y, q, C, std::move(basis), settings);
}

Vector predict(const QuantileModel& model, const RowMatrix& X_new) {
  const KernelBasis& basis = *model.basis;
  if (X_new.cols() != basis.scaler.dim()) {
    throw Error(ErrorKind::Input, "feature dimension mismatch: model expects " +
                                      std::to_string(basis.scaler.dim()) + " columns, got " +
                                      std::to_string(X_new.cols()));
  }
  const Matrix cross = cross_gram(basis.kernel, basis.X_train, basis.scaler.transform(X_new));
  Vector out = cross * model.a;
  out.array() += model.b;
  return out;
}

void validate_quantiles(const std::vector<double>& quantiles) {
  if (quantiles.empty()) throw Error(ErrorKind::Config, "at least one quantile is required", "quantiles");
  for (std::size_t k = 0; k < quantiles.size(); ++k) {
    const double q = quantiles[k];
    if (!(q > 0.0 && q < 1.0)) {
      std::ostringstream msg;
      msg << "quantile " << q << " out of range (0, 1)";
      throw Error(ErrorKind::Config, msg.str(), "quantiles");
    }
    if (k > 0 && !(quantiles[k - 1] < q)) {
      throw Error(ErrorKind::Config, "quantiles must be strictly increasing", "quantiles");
    }
  }
}

MultiQuantileModel fit_multi(const RowMatrix& X, const Vector& y, const std::vector<double>& quantiles,
                             const std::vector<double>& C_per_q, const KernelSpec& kernel,
                             const Standardizer& scaler, const SolverSettings& settings,
                             bool rearrange) {
  validate_quantiles(quantiles);
  if (C_per_q.size() != quantiles.size()) {
    throw Error(ErrorKind::Config, "need one C per quantile (" + std::to_string(quantiles.size()) +
                                       "), got " + std::to_string(C_per_q.size()),
                "C");
  }
  for (std::size_t k = 0; k < C_per_q.size(); ++k) {
    if (!(C_per_q[k] > 0.0) || !std::isfinite(C_per_q[k])) {
      std::ostringstream msg;
      msg << "C must be > 0 (quantile " << quantiles[k] << ")";
      throw Error(ErrorKind::Config, msg.str(), "C");
    }
  }
  settings.validate();

  auto basis = make_basis(X, y, kernel, scaler);
  const GramMatrix gram = gram_matrix(basis->kernel, basis->X_train);

  MultiQuantileModel multi;
  multi.quantiles = quantiles;
  multi.rearrange = rearrange;
  for (std::size_t k = 0; k < quantiles.size(); ++k) {
    try {
      multi.models.push_back(fit_with_gram(gram, y, quantiles[k], C_per_q[k], basis, settings));
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "fit failed at quantile " << quantiles[k] << ": " << e.what();
      throw Error(e.kind(), msg.str(), e.field());
    }
  }
  return multi;
}

void rearrange_rows(Matrix& predictions) {
  for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
    auto row = predictions.row(i);
    std::sort(row.begin(), row.end());
  }
}

Matrix predict_multi(const MultiQuantileModel& model, const RowMatrix& X_new) {
  if (model.models.empty()) throw Error(ErrorKind::Input, "model has no quantile levels");
  const KernelBasis& basis = model.basis();
  if (X_new.cols() != basis.scaler.dim()) {
    throw Error(ErrorKind::Input, "feature dimension mismatch: model expects " +
                                      std::to_string(basis.scaler.dim()) + " columns, got " +
                                      std::to_string(X_new.cols()));
  }
  const Matrix cross = cross_gram(basis.kernel, basis.X_train, basis.scaler.transform(X_new));
  Matrix out(X_new.rows(), static_cast<Eigen::Index>(model.models.size()));
  for (std::size_t k = 0; k < model.models.size(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    out.col(col) = cross * model.models[k].a;
    out.col(col).array() += model.models[k].b;
  }
  if (model.rearrange) rearrange_rows(out);
  return out;
}

}  // namespace kqr
