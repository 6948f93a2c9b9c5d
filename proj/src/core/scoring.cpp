#include "core/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "core/error.hpp"

namespace kqr {
namespace {

void require_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::Config, "quantile must lie in (0, 1)", "q");
}

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorKind::Input,
                "length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

double pinball(double q, std::span<const double> y_true, std::span<const double> y_pred) {
  require_quantile(q);
  require_same_length(y_true.size(), y_pred.size());
  if (y_true.empty()) throw Error(ErrorKind::Input, "pinball loss of an empty sample");
  double acc = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double u = y_true[i] - y_pred[i];
    acc += u >= 0.0 ? q * u : (q - 1.0) * u;
  }
  return acc / static_cast<double>(y_true.size());
}

double empirical_quantile(std::span<const double> values, double q) {
  require_quantile(q);
  if (values.empty()) throw Error(ErrorKind::Input, "empirical quantile of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  const double n = static_cast<double>(sorted.size());
  // Smallest k (1-based) with k / n >= q. The slack absorbs q * n landing a
  // rounding error above an integer.
  auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  return sorted[k - 1];
}

double crps_proxy(const std::map<double, double>& per_quantile_losses) {
  if (per_quantile_losses.empty()) throw Error(ErrorKind::Input, "CRPS proxy of an empty set");
  double acc = 0.0;
  for (const auto& [q, loss] : per_quantile_losses) acc += loss;
  return acc / static_cast<double>(per_quantile_losses.size());
}

double coverage(std::span<const double> y_true, std::span<const double> band_low,
                std::span<const double> band_high) {
  require_same_length(y_true.size(), band_low.size());
  require_same_length(y_true.size(), band_high.size());
  if (y_true.empty()) throw Error(ErrorKind::Input, "coverage of an empty sample");
  std::size_t inside = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (band_low[i] <= y_true[i] && y_true[i] <= band_high[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(y_true.size());
}

double default_scale(std::span<const double> y_true) {
  if (y_true.empty()) throw Error(ErrorKind::Input, "scale of an empty sample");
  double acc = 0.0;
  for (double v : y_true) acc += std::abs(v);
  const double scale = acc / static_cast<double>(y_true.size());
  if (!(scale > 0.0)) {
    throw Error(ErrorKind::Input, "mean |y| is zero; pass an explicit scale", "scale");
  }
  return scale;
}

ScoreReport report_from_losses(const std::map<double, double>& per_quantile, double scale,
                               bool crps_on_scaled) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::Config, "scale must be > 0", "scale");
  }
  ScoreReport report;
  report.scale = scale;
  report.crps_on_scaled = crps_on_scaled;
  report.per_quantile = per_quantile;
  for (const auto& [q, loss] : per_quantile) {
    require_quantile(q);
    if (!(loss >= 0.0)) throw Error(ErrorKind::Input, "pinball losses must be >= 0");
    report.per_quantile_scaled[q] = loss / scale;
  }
  report.crps_proxy = crps_proxy(crps_on_scaled ? report.per_quantile_scaled : report.per_quantile);
  return report;
}

ScoreReport scaled_report(std::span<const double> y_true, const Matrix& predictions,
                          const std::vector<double>& quantiles, double scale,
                          bool crps_on_scaled) {
  if (predictions.cols() != static_cast<Eigen::Index>(quantiles.size())) {
    throw Error(ErrorKind::Input, "prediction matrix has " + std::to_string(predictions.cols()) +
                                      " columns for " + std::to_string(quantiles.size()) +
                                      " quantiles");
  }
  require_same_length(y_true.size(), static_cast<std::size_t>(predictions.rows()));
  std::map<double, double> losses;
  std::vector<double> column(y_true.size());
  for (std::size_t k = 0; k < quantiles.size(); ++k) {
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      column[i] = predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
    losses[quantiles[k]] = pinball(quantiles[k], y_true, column);
  }
  ScoreReport report = report_from_losses(losses, scale, crps_on_scaled);
  if (quantiles.size() >= 2) {
    const auto [lo_it, hi_it] = std::minmax_element(quantiles.begin(), quantiles.end());
    const auto lo = static_cast<Eigen::Index>(lo_it - quantiles.begin());
    const auto hi = static_cast<Eigen::Index>(hi_it - quantiles.begin());
    std::vector<double> low(y_true.size());
    std::vector<double> high(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      low[i] = predictions(static_cast<Eigen::Index>(i), lo);
      high[i] = predictions(static_cast<Eigen::Index>(i), hi);
    }
    report.coverage[{*lo_it, *hi_it}] = coverage(y_true, low, high);
  }
  return report;
}

nlohmann::ordered_json ScoreReport::to_json() const {
  nlohmann::ordered_json j;
  j["scale"] = scale;
  j["crps_basis"] = crps_on_scaled ? "scaled" : "raw";
  j["crps_proxy"] = crps_proxy;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& [q, loss] : per_quantile) {
    rows.push_back({{"quantile", q}, {"pinball", loss}, {"pinball_scaled", per_quantile_scaled.at(q)}});
  }
  j["per_quantile"] = rows;
  auto cov = nlohmann::ordered_json::array();
  for (const auto& [band, value] : coverage) {
    cov.push_back({{"low", band.first}, {"high", band.second}, {"coverage", value}});
  }
  j["coverage"] = cov;
  return j;
}

}  // namespace kqr
