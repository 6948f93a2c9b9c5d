#include "core/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "core/error.hpp"
#include "core/model.hpp"
#include "core/scoring.hpp"

namespace kqr {
namespace {

constexpr double kConstantColumnStd = 1e-12;

bool masked(const std::vector<bool>& mask, Eigen::Index j) {
  return !mask.empty() && mask[static_cast<std::size_t>(j)];
}

RowMatrix rows(const RowMatrix& X, std::size_t begin, std::size_t end) {
  return X.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
}

Vector rows(const Vector& y, std::size_t begin, std::size_t end) {
  return y.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
}

// Smoothness order used for tie-breaking: larger means more regularized.
double smoothness(const GridPoint& point) {
  double s = 0.0;
  for (const auto& [name, value] : point.params) {
    if (name == "gamma") s -= std::log(value);
    if (name == "length_scale") s += std::log(value);
  }
  return s;
}

}  // namespace

RowMatrix Standardizer::transform(const RowMatrix& X) const {
  if (X.cols() != dim()) {
    throw Error(ErrorKind::Input, "standardizer expects " + std::to_string(dim()) +
                                      " columns, got " + std::to_string(X.cols()));
  }
  RowMatrix Z = X;
  for (Eigen::Index j = 0; j < dim(); ++j) {
    if (masked(categorical_mask, j)) continue;
    Z.col(j) = (X.col(j).array() - means[j]) / stds[j];
  }
  return Z;
}

RowMatrix Standardizer::inverse_transform(const RowMatrix& Z) const {
  if (Z.cols() != dim()) {
    throw Error(ErrorKind::Input, "standardizer expects " + std::to_string(dim()) +
                                      " columns, got " + std::to_string(Z.cols()));
  }
  RowMatrix X = Z;
  for (Eigen::Index j = 0; j < dim(); ++j) {
    if (masked(categorical_mask, j)) continue;
    X.col(j) = Z.col(j).array() * stds[j] + means[j];
  }
  return X;
}

Standardizer fit_standardizer(const RowMatrix& X, std::vector<bool> categorical_mask) {
  if (X.rows() < 1) throw Error(ErrorKind::Input, "standardizer needs at least one row");
  if (!X.allFinite()) throw Error(ErrorKind::Input, "standardizer input contains non-finite values");
  if (!categorical_mask.empty() && categorical_mask.size() != static_cast<std::size_t>(X.cols())) {
    throw Error(ErrorKind::Input, "categorical mask has " + std::to_string(categorical_mask.size()) +
                                      " entries for " + std::to_string(X.cols()) + " columns");
  }
  Standardizer s;
  s.categorical_mask = categorical_mask.empty()
                           ? std::vector<bool>(static_cast<std::size_t>(X.cols()), false)
                           : std::move(categorical_mask);
  s.means = Vector::Zero(X.cols());
  s.stds = Vector::Ones(X.cols());
  const double n = static_cast<double>(X.rows());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (masked(s.categorical_mask, j)) continue;
    const double mean = X.col(j).sum() / n;
    const double var = (X.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    s.means[j] = mean;
    s.stds[j] = sd < kConstantColumnStd ? 1.0 : sd;
  }
  return s;
}

TimeSeriesSplit make_splits(std::size_t n, std::size_t n_folds, std::size_t min_train) {
  if (n_folds < 2) throw Error(ErrorKind::Config, "need at least 2 folds", "splits");
  if (min_train < 2) throw Error(ErrorKind::Config, "min_train must be >= 2", "min-train");
  if (n < min_train + n_folds) {
    throw Error(ErrorKind::Config,
                "cannot make " + std::to_string(n_folds) + " folds from " + std::to_string(n) +
                    " rows with min_train " + std::to_string(min_train),
                "splits");
  }
  const std::size_t block = (n - min_train) / n_folds;
  const std::size_t first_train = n - block * n_folds;
  TimeSeriesSplit split;
  for (std::size_t k = 0; k < n_folds; ++k) {
    const std::size_t train_end = first_train + k * block;
    split.folds.push_back({train_end, train_end + block});
  }
  return split;
}

KernelSpec GridPoint::apply(const KernelSpec& base) const {
  KernelSpec spec = base;
  for (const auto& [name, value] : params) spec.set_param(name, value);
  spec.validate();
  return spec;
}

nlohmann::ordered_json GridPoint::to_json() const {
  nlohmann::ordered_json j;
  j["C"] = C;
  for (const auto& [name, value] : params) j[name] = value;
  return j;
}

std::vector<GridPoint> parse_grid(const nlohmann::ordered_json& j, const KernelSpec& base) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "grid must be a JSON object", "grid");
  if (!j.contains("C")) throw Error(ErrorKind::Config, "grid must list values for C", "C");

  std::vector<std::pair<std::string, std::vector<double>>> axes;
  for (const auto& [name, values] : j.items()) {
    if (!values.is_array() || values.empty()) {
      throw Error(ErrorKind::Config, "grid axis '" + name + "' must be a nonempty array", name);
    }
    std::vector<double> axis;
    for (const auto& v : values) {
      if (!v.is_number()) {
        throw Error(ErrorKind::Config, "grid axis '" + name + "' must contain numbers", name);
      }
      axis.push_back(v.get<double>());
    }
    if (name == "C") {
      for (double c : axis) {
        if (!(c > 0.0) || !std::isfinite(c)) throw Error(ErrorKind::Config, "grid C values must be > 0", "C");
      }
      axes.insert(axes.begin(), {name, std::move(axis)});
    } else {
      axes.emplace_back(name, std::move(axis));
    }
  }

  std::vector<GridPoint> grid;
  std::vector<std::size_t> index(axes.size(), 0);
  for (;;) {
    GridPoint point;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const double v = axes[a].second[index[a]];
      if (axes[a].first == "C") {
        point.C = v;
      } else {
        point.params.emplace_back(axes[a].first, v);
      }
    }
    point.apply(base);  // rejects names the family does not use
    grid.push_back(std::move(point));
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++index[a] < axes[a].second.size()) break;
      index[a] = 0;
      if (a == 0) return grid;
    }
  }
}

std::vector<GridPoint> default_grid(const KernelSpec& base) {
  const std::vector<double> cs = {0.1, 1.0, 10.0, 100.0};
  const std::vector<double> scales = {0.01, 0.1, 1.0, 10.0};
  const auto used = base.used_params();
  const auto uses = [&](const char* name) {
    return std::find(used.begin(), used.end(), name) != used.end();
  };
  std::vector<GridPoint> grid;
  for (double C : cs) {
    if (uses("gamma")) {
      for (double g : scales) grid.push_back({C, {{"gamma", g}}});
    } else if (uses("length_scale")) {
      for (double g : scales) grid.push_back({C, {{"length_scale", 1.0 / g}}});
    } else {
      grid.push_back({C, {}});
    }
  }
  return grid;
}

GridSearchResult grid_search(const RowMatrix& X, const Vector& y, double q, const KernelSpec& base,
                             const std::vector<GridPoint>& grid, const TimeSeriesSplit& splits,
                             const SolverSettings& settings,
                             const std::vector<bool>& categorical_mask,
                             const FitObserver& observer) {
  if (grid.empty()) throw Error(ErrorKind::Config, "grid is empty", "grid");
  if (splits.folds.empty()) throw Error(ErrorKind::Config, "no folds", "splits");
  if (y.size() != X.rows()) throw Error(ErrorKind::Input, "target length differs from row count");
  const auto n = static_cast<std::size_t>(X.rows());
  for (const Fold& f : splits.folds) {
    if (f.train_end < 2 || f.test_end <= f.train_end || f.test_end > n) {
      throw Error(ErrorKind::Config, "fold boundaries do not fit the data", "splits");
    }
  }

  GridSearchResult result;
  result.grid = grid;
  result.q = q;
  result.mean_scores.assign(grid.size(), 0.0);
  result.per_fold_scores = Matrix::Zero(static_cast<Eigen::Index>(grid.size()),
                                        static_cast<Eigen::Index>(splits.folds.size()));

  for (std::size_t p = 0; p < grid.size(); ++p) {
    const KernelSpec kernel = grid[p].apply(base);
    double total = 0.0;
    for (std::size_t f = 0; f < splits.folds.size(); ++f) {
      const Fold& fold = splits.folds[f];
      double score = std::numeric_limits<double>::infinity();
      const RowMatrix X_train = rows(X, 0, fold.train_end);
      const Vector y_train = rows(y, 0, fold.train_end);
      const RowMatrix X_test = rows(X, fold.test_begin(), fold.test_end);
      const Vector y_test = rows(y, fold.test_begin(), fold.test_end);
      try {
        const Standardizer scaler = fit_standardizer(X_train, categorical_mask);
        if (observer) {
          observer({p, f, static_cast<std::size_t>(X_train.rows()), fold.train_end,
                    fold.test_begin(), fold.test_end});
        }
        const QuantileModel model = fit(X_train, y_train, q, grid[p].C, kernel, scaler, settings);
        if (model.diagnostics.status != QpStatus::Converged) {
          throw Error(ErrorKind::Numerical, "solver did not converge");
        }
        const Vector pred = predict(model, X_test);
        score = pinball(q, {y_test.data(), static_cast<std::size_t>(y_test.size())},
                        {pred.data(), static_cast<std::size_t>(pred.size())});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numerical && e.kind() != ErrorKind::Domain) throw;
      }
      result.per_fold_scores(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(f)) = score;
      total += score;
    }
    result.mean_scores[p] = total / static_cast<double>(splits.folds.size());
  }

  std::size_t best = 0;
  for (std::size_t p = 1; p < grid.size(); ++p) {
    const double s = result.mean_scores[p];
    const double b = result.mean_scores[best];
    if (s < b) {
      best = p;
    } else if (s == b) {
      if (grid[p].C < grid[best].C ||
          (grid[p].C == grid[best].C && smoothness(grid[p]) > smoothness(grid[best]))) {
        best = p;
      }
    }
  }
  result.best_index = best;
  return result;
}

}  // namespace kqr
