#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core/kernels.hpp"
#include "core/qp.hpp"
#include "core/types.hpp"

namespace kqr {

// Per-column z-score. Columns flagged in categorical_mask pass through
// untouched; columns with (population) std below 1e-12 get std = 1.
struct Standardizer {
  Vector means;
  Vector stds;
  std::vector<bool> categorical_mask;

  Eigen::Index dim() const { return means.size(); }

  RowMatrix transform(const RowMatrix& X) const;
  RowMatrix inverse_transform(const RowMatrix& Z) const;
};

Standardizer fit_standardizer(const RowMatrix& X, std::vector<bool> categorical_mask = {});

// Half-open index ranges [0, train_end) and [train_end, test_end).
struct Fold {
  std::size_t train_end = 0;
  std::size_t test_end = 0;

  std::size_t test_begin() const { return train_end; }
};

struct TimeSeriesSplit {
  std::vector<Fold> folds;
};

// Expanding-window folds with equal test blocks of floor((n - min_train) / n_folds)
// rows. Rows left over by the floor go to the first training window so the
// test blocks end at the last observation.
TimeSeriesSplit make_splits(std::size_t n, std::size_t n_folds, std::size_t min_train);

struct GridPoint {
  double C = 1.0;
  // Kernel parameters applied on top of the base spec, in grid-file order.
  std::vector<std::pair<std::string, double>> params;

  KernelSpec apply(const KernelSpec& base) const;
  nlohmann::ordered_json to_json() const;
};

// {"C": [...], "<param>": [...], ...} -> cartesian product, C varying slowest.
std::vector<GridPoint> parse_grid(const nlohmann::ordered_json& j, const KernelSpec& base);

// C in {0.1, 1, 10, 100} crossed with the family's scale parameter: gamma in
// {0.01, 0.1, 1, 10}, or length_scale = 1 / those values.
std::vector<GridPoint> default_grid(const KernelSpec& base);

struct GridSearchResult {
  std::vector<GridPoint> grid;
  std::vector<double> mean_scores;
  Matrix per_fold_scores;  // grid.size() x n_folds
  std::size_t best_index = 0;
  double q = 0.5;

  const GridPoint& best_point() const { return grid[best_index]; }
};

// Reported for every fold fit; lets callers audit which rows were used.
struct FitEvent {
  std::size_t point = 0;
  std::size_t fold = 0;
  std::size_t scaler_rows = 0;
  std::size_t train_rows = 0;
  std::size_t test_begin = 0;
  std::size_t test_end = 0;
};
using FitObserver = std::function<void(const FitEvent&)>;

GridSearchResult grid_search(const RowMatrix& X, const Vector& y, double q, const KernelSpec& base,
                             const std::vector<GridPoint>& grid, const TimeSeriesSplit& splits,
                             const SolverSettings& settings,
                             const std::vector<bool>& categorical_mask = {},
                             const FitObserver& observer = {});

}  // namespace kqr
