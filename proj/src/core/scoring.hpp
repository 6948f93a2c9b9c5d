#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core/types.hpp"

namespace kqr {

// Mean check loss rho_q(y - y_hat) with rho_q(u) = q u for u >= 0 and
// (q - 1) u otherwise.
double pinball(double q, std::span<const double> y_true, std::span<const double> y_pred);

// Left-continuous sample quantile inf{x : F_n(x) >= q}. Always an order
// statistic; for q <= 1/n this is the minimum.
double empirical_quantile(std::span<const double> values, double q);

// Unweighted mean of the per-quantile losses.
double crps_proxy(const std::map<double, double>& per_quantile_losses);

// Fraction of i with band_low_i <= y_i <= band_high_i.
double coverage(std::span<const double> y_true, std::span<const double> band_low,
                std::span<const double> band_high);

// Mean |y| over the evaluation set; the default scale of a report.
double default_scale(std::span<const double> y_true);

struct ScoreReport {
  std::map<double, double> per_quantile;
  std::map<double, double> per_quantile_scaled;
  std::map<std::pair<double, double>, double> coverage;
  double crps_proxy = 0.0;
  bool crps_on_scaled = true;
  double scale = 1.0;

  nlohmann::ordered_json to_json() const;
};

// `predictions` is m x k, column j for quantiles[j]. Coverage is reported
// for the outermost quantile pair when there are at least two levels.
ScoreReport scaled_report(std::span<const double> y_true, const Matrix& predictions,
                          const std::vector<double>& quantiles, double scale,
                          bool crps_on_scaled = true);

// Builds a report from already-aggregated per-quantile losses.
ScoreReport report_from_losses(const std::map<double, double>& per_quantile, double scale,
                               bool crps_on_scaled = true);

}  // namespace kqr
