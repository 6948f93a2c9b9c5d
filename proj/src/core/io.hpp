#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "core/features.hpp"
#include "core/model.hpp"
#include "core/model_selection.hpp"
#include "core/scoring.hpp"

namespace kqr {

inline constexpr int kModelFormatVersion = 1;

std::string read_text_file(const std::string& path);
// Writes bytes as given (LF endings, no locale); throws Error{Io} with the path.
void write_text_file(const std::string& path, std::string_view content);

// Comma-separated with a header row and optional double-quoted cells.
RawTable parse_csv(std::string_view text);
RawTable read_csv(const std::string& path);

Dataset read_dataset(const std::string& path, const nlohmann::ordered_json& recipe,
                     const std::string& target, bool target_required = true);

// A fitted model together with what is needed to rebuild its inputs.
struct ModelFile {
  MultiQuantileModel model;
  std::vector<std::string> feature_names;
  std::string target;
  nlohmann::ordered_json recipe;
  std::optional<std::string> created_at;
};

std::string serialize_model(const ModelFile& file);
ModelFile deserialize_model(std::string_view text);
void save_model(const ModelFile& file, const std::string& path);
ModelFile load_model(const std::string& path);

// "q05" for 0.05, "q50" for 0.5, "q2.5" for 0.025.
std::string quantile_column_name(double q);
std::optional<double> parse_quantile_column(std::string_view name);

struct BandTable {
  std::vector<std::string> timestamps;
  std::optional<std::vector<double>> observed;  // NaN for blank cells
  std::vector<double> quantiles;
  Matrix predictions;  // rows x quantiles
};

std::string format_bands(const BandTable& bands);
BandTable parse_bands(std::string_view text);
void write_bands(const std::string& path, const BandTable& bands);
BandTable read_bands(const std::string& path);

std::string format_report_table(const ScoreReport& report);
std::map<double, double> parse_losses(std::string_view text);

nlohmann::ordered_json grid_result_json(const GridSearchResult& result, const KernelSpec& base,
                                        const TimeSeriesSplit& splits);
std::string format_heatmap(const GridSearchResult& result);

// 17 significant digits; "inf"/"-inf"/"nan" for non-finite values.
std::string format_double(double v);

}  // namespace kqr
