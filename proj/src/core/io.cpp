#include "core/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "core/error.hpp"

namespace kqr {
namespace {

using json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

double parse_cell(std::string_view cell, std::size_t line, const char* what) {
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\r')) cell.remove_suffix(1);
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  if (cell.empty()) return kNaN;
  if (cell == "inf") return std::numeric_limits<double>::infinity();
  if (cell == "-inf") return -std::numeric_limits<double>::infinity();
  if (cell == "nan") return kNaN;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": bad " + what + " value '" +
                                      std::string(cell) + "'");
  }
  return v;
}

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::Parse, std::string("model file missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("model file field '") + key + "': " + e.what());
  }
}

json diagnostics_json(const FitDiagnostics& d) {
  return {{"status", status_name(d.status)},
          {"iterations", d.iterations},
          {"duality_gap", d.duality_gap},
          {"objective", d.objective},
          {"jitter", d.jitter}};
}

QpStatus parse_status(const std::string& s) {
  if (s == "converged") return QpStatus::Converged;
  if (s == "max_iter") return QpStatus::MaxIter;
  if (s == "numerical_failure") return QpStatus::NumericalFailure;
  throw Error(ErrorKind::Parse, "unknown solver status '" + s + "'");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'", path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path + "'", path);
}

RawTable parse_csv(std::string_view text) {
  RawTable table;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      for (auto& c : cells) {
        while (!c.empty() && c.front() == ' ') c.erase(c.begin());
        while (!c.empty() && c.back() == ' ') c.pop_back();
      }
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    table.rows.push_back(std::move(cells));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw Error(ErrorKind::Input, "CSV input is empty");
  return table;
}

RawTable read_csv(const std::string& path) { return parse_csv(read_text_file(path)); }

Dataset read_dataset(const std::string& path, const nlohmann::ordered_json& recipe,
                     const std::string& target, bool target_required) {
  const RawTable table = read_csv(path);
  if (table.rows.empty()) throw Error(ErrorKind::Input, "'" + path + "' has no data rows", path);
  return assemble(table, recipe, target, target_required);
}

std::string serialize_model(const ModelFile& file) {
  const MultiQuantileModel& m = file.model;
  if (m.models.empty()) throw Error(ErrorKind::Input, "cannot save a model without quantile levels");
  const KernelBasis& basis = m.basis();

  json j;
  j["format_version"] = kModelFormatVersion;
  j["kernel"] = basis.kernel.to_json();
  j["quantiles"] = m.quantiles;
  j["rearrange"] = m.rearrange;
  json levels = json::array();
  for (const auto& qm : m.models) {
    json level;
    level["q"] = qm.q;
    level["C"] = qm.C;
    level["b"] = qm.b;
    level["a"] = std::vector<double>(qm.a.data(), qm.a.data() + qm.a.size());
    level["support_count"] = qm.support_indices.size();
    level["diagnostics"] = diagnostics_json(qm.diagnostics);
    levels.push_back(std::move(level));
  }
  j["models"] = std::move(levels);
  j["scaler"] = {
      {"means", std::vector<double>(basis.scaler.means.data(),
                                    basis.scaler.means.data() + basis.scaler.means.size())},
      {"stds", std::vector<double>(basis.scaler.stds.data(),
                                   basis.scaler.stds.data() + basis.scaler.stds.size())},
      {"mask", basis.scaler.categorical_mask}};
  json rows = json::array();
  for (Eigen::Index i = 0; i < basis.X_train.rows(); ++i) {
    const double* p = basis.X_train.data() + i * basis.X_train.cols();
    rows.push_back(std::vector<double>(p, p + basis.X_train.cols()));
  }
  j["X_train"] = std::move(rows);
  json meta;
  meta["created_at"] = file.created_at ? json(*file.created_at) : json(nullptr);
  meta["n"] = basis.X_train.rows();
  meta["d"] = basis.X_train.cols();
  meta["feature_names"] = file.feature_names;
  meta["target"] = file.target;
  meta["recipe"] = file.recipe;
  j["metadata"] = std::move(meta);
  return j.dump(1) + "\n";
}

ModelFile deserialize_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Parse, "model file is not a JSON object");
  if (!j.contains("format_version")) {
    throw Error(ErrorKind::Version, "model file has no format_version");
  }
  const int version = get_field<int>(j, "format_version");
  if (version != kModelFormatVersion) {
    throw Error(ErrorKind::Version, "unsupported model format_version " + std::to_string(version) +
                                        " (this build reads " +
                                        std::to_string(kModelFormatVersion) + ")");
  }

  auto basis = std::make_shared<KernelBasis>();
  try {
    basis->kernel = KernelSpec::from_json(j.at("kernel"));
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, std::string("model kernel: ") + e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("model file missing 'kernel': ") + e.what());
  }

  const json scaler = get_field<json>(j, "scaler");
  const auto means = get_field<std::vector<double>>(scaler, "means");
  const auto stds = get_field<std::vector<double>>(scaler, "stds");
  const auto mask = get_field<std::vector<bool>>(scaler, "mask");
  const std::size_t d = means.size();
  if (stds.size() != d || mask.size() != d || d == 0) {
    throw Error(ErrorKind::Parse, "scaler vectors have inconsistent lengths");
  }
  basis->scaler.means = Eigen::Map<const Vector>(means.data(), static_cast<Eigen::Index>(d));
  basis->scaler.stds = Eigen::Map<const Vector>(stds.data(), static_cast<Eigen::Index>(d));
  basis->scaler.categorical_mask = mask;

  const auto rows = get_field<std::vector<std::vector<double>>>(j, "X_train");
  if (rows.size() < 2) throw Error(ErrorKind::Parse, "X_train needs at least 2 rows");
  basis->X_train.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) {
      throw Error(ErrorKind::Parse, "X_train row " + std::to_string(i) + " has " +
                                        std::to_string(rows[i].size()) + " entries, expected " +
                                        std::to_string(d));
    }
    for (std::size_t k = 0; k < d; ++k) {
      basis->X_train(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }

  ModelFile file;
  MultiQuantileModel& m = file.model;
  m.quantiles = get_field<std::vector<double>>(j, "quantiles");
  m.rearrange = get_field<bool>(j, "rearrange");
  try {
    validate_quantiles(m.quantiles);
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, std::string("model quantiles: ") + e.what());
  }
  const json levels = get_field<json>(j, "models");
  if (!levels.is_array() || levels.size() != m.quantiles.size()) {
    throw Error(ErrorKind::Parse, "model file needs one entry in 'models' per quantile");
  }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const json& level = levels[k];
    QuantileModel qm;
    qm.q = get_field<double>(level, "q");
    qm.C = get_field<double>(level, "C");
    qm.b = get_field<double>(level, "b");
    const auto a = get_field<std::vector<double>>(level, "a");
    if (a.size() != rows.size()) {
      throw Error(ErrorKind::Parse, "coefficient vector length differs from X_train rows");
    }
    if (qm.q != m.quantiles[k]) throw Error(ErrorKind::Parse, "model levels out of order");
    qm.a = Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()));
    qm.support_indices = support_indices(qm.a, qm.C, qm.q);
    qm.basis = basis;
    if (level.contains("diagnostics")) {
      const json& diag = level["diagnostics"];
      qm.diagnostics.status = parse_status(get_field<std::string>(diag, "status"));
      qm.diagnostics.iterations = get_field<int>(diag, "iterations");
      qm.diagnostics.duality_gap = get_field<double>(diag, "duality_gap");
      qm.diagnostics.objective = get_field<double>(diag, "objective");
      qm.diagnostics.jitter = get_field<double>(diag, "jitter");
    }
    m.models.push_back(std::move(qm));
  }

  const json meta = get_field<json>(j, "metadata");
  file.feature_names = get_field<std::vector<std::string>>(meta, "feature_names");
  if (file.feature_names.size() != d) {
    throw Error(ErrorKind::Parse, "feature_names length differs from the model dimension");
  }
  file.target = get_field<std::string>(meta, "target");
  file.recipe = meta.contains("recipe") ? meta["recipe"] : json(file.feature_names);
  if (meta.contains("created_at") && meta["created_at"].is_string()) {
    file.created_at = meta["created_at"].get<std::string>();
  }
  return file;
}

void save_model(const ModelFile& file, const std::string& path) {
  write_text_file(path, serialize_model(file));
}

ModelFile load_model(const std::string& path) { return deserialize_model(read_text_file(path)); }

std::string quantile_column_name(double q) {
  const double pct = q * 100.0;
  const double rounded = std::round(pct);
  char buf[32];
  if (std::abs(pct - rounded) < 1e-9) {
    std::snprintf(buf, sizeof buf, "q%02d", static_cast<int>(rounded));
  } else {
    std::snprintf(buf, sizeof buf, "q%.15g", pct);
  }
  return buf;
}

std::optional<double> parse_quantile_column(std::string_view name) {
  if (name.size() < 2 || name.front() != 'q') return std::nullopt;
  name.remove_prefix(1);
  // Shift the decimal point textually so "q33.3" reads back as exactly 0.333.
  const auto dot = name.find('.');
  const std::string_view whole = name.substr(0, dot);
  const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : name.substr(dot + 1);
  const auto digits = [](std::string_view t) {
    return std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  if (whole.empty() || whole.size() > 2 || !digits(whole) || !digits(frac)) return std::nullopt;
  if (dot != std::string_view::npos && frac.empty()) return std::nullopt;
  std::string text = "0.";
  if (whole.size() == 1) text += '0';
  text += whole;
  text += frac;
  double q = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), q);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  if (!(q > 0.0 && q < 1.0)) return std::nullopt;
  return q;
}

std::string format_bands(const BandTable& bands) {
  const auto m = static_cast<std::size_t>(bands.predictions.rows());
  if (bands.predictions.cols() != static_cast<Eigen::Index>(bands.quantiles.size())) {
    throw Error(ErrorKind::Input, "band matrix has " + std::to_string(bands.predictions.cols()) +
                                      " columns for " + std::to_string(bands.quantiles.size()) +
                                      " quantiles");
  }
  if (bands.timestamps.size() != m || (bands.observed && bands.observed->size() != m)) {
    throw Error(ErrorKind::Input, "band rows, timestamps and observed values differ in length");
  }
  validate_quantiles(bands.quantiles);
  std::string out = "timestamp";
  if (bands.observed) out += ",observed";
  for (double q : bands.quantiles) out += "," + quantile_column_name(q);
  out += "\n";
  for (std::size_t i = 0; i < m; ++i) {
    out += bands.timestamps[i];
    if (bands.observed) {
      out += ",";
      const double v = (*bands.observed)[i];
      if (std::isfinite(v)) out += format_double(v);
    }
    for (std::size_t k = 0; k < bands.quantiles.size(); ++k) {
      out += "," + format_double(bands.predictions(static_cast<Eigen::Index>(i),
                                                   static_cast<Eigen::Index>(k)));
    }
    out += "\n";
  }
  return out;
}

BandTable parse_bands(std::string_view text) {
  const RawTable table = parse_csv(text);
  if (table.header.empty() || table.header.front() != "timestamp") {
    throw Error(ErrorKind::Parse, "band file must start with a 'timestamp' column");
  }
  BandTable bands;
  std::size_t first_q = 1;
  if (table.header.size() > 1 && table.header[1] == "observed") {
    bands.observed.emplace();
    first_q = 2;
  }
  for (std::size_t c = first_q; c < table.header.size(); ++c) {
    const auto q = parse_quantile_column(table.header[c]);
    if (!q) throw Error(ErrorKind::Parse, "bad quantile column '" + table.header[c] + "'");
    bands.quantiles.push_back(*q);
  }
  if (bands.quantiles.empty()) throw Error(ErrorKind::Parse, "band file has no quantile columns");
  const auto m = static_cast<Eigen::Index>(table.rows.size());
  bands.predictions.resize(m, static_cast<Eigen::Index>(bands.quantiles.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cells = table.rows[i];
    const std::size_t line = table.line_numbers[i];
    if (cells.size() != table.header.size()) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": expected " +
                                        std::to_string(table.header.size()) + " cells");
    }
    bands.timestamps.push_back(cells[0]);
    if (bands.observed) bands.observed->push_back(parse_cell(cells[1], line, "observed"));
    for (std::size_t k = 0; k < bands.quantiles.size(); ++k) {
      const double v = parse_cell(cells[first_q + k], line, "quantile");
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": missing prediction");
      }
      bands.predictions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return bands;
}

void write_bands(const std::string& path, const BandTable& bands) {
  write_text_file(path, format_bands(bands));
}

BandTable read_bands(const std::string& path) { return parse_bands(read_text_file(path)); }

std::string format_report_table(const ScoreReport& report) {
  std::string out = "quantile,pinball,pinball_scaled\n";
  char label[32];
  for (const auto& [q, loss] : report.per_quantile) {
    std::snprintf(label, sizeof label, "%g", q);
    out += std::string(label) + "," + format_double(loss) + "," +
           format_double(report.per_quantile_scaled.at(q)) + "\n";
  }
  out += "CRPS," + format_double(crps_proxy(report.per_quantile)) + "," +
         format_double(crps_proxy(report.per_quantile_scaled)) + "\n";
  return out;
}

std::map<double, double> parse_losses(std::string_view text) {
  const RawTable table = parse_csv(text);
  const auto qcol = table.column("quantile");
  const auto lcol = table.column("pinball");
  if (!qcol || !lcol) {
    throw Error(ErrorKind::Parse, "loss table needs 'quantile' and 'pinball' columns");
  }
  std::map<double, double> losses;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& cells = table.rows[i];
    const std::size_t line = table.line_numbers[i];
    if (cells.size() <= std::max(*qcol, *lcol)) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": too few cells");
    }
    if (cells[*qcol] == "CRPS") continue;
    const double q = parse_cell(cells[*qcol], line, "quantile");
    const double loss = parse_cell(cells[*lcol], line, "pinball");
    if (!(q > 0.0 && q < 1.0) || !std::isfinite(loss)) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": bad loss row");
    }
    if (!losses.emplace(q, loss).second) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": repeated quantile");
    }
  }
  if (losses.empty()) throw Error(ErrorKind::Input, "loss table has no rows");
  return losses;
}

nlohmann::ordered_json grid_result_json(const GridSearchResult& result, const KernelSpec& base,
                                        const TimeSeriesSplit& splits) {
  json j;
  j["q"] = result.q;
  j["kernel"] = base.to_json();
  json folds = json::array();
  for (const Fold& f : splits.folds) folds.push_back({{"train_end", f.train_end}, {"test_end", f.test_end}});
  j["folds"] = std::move(folds);
  const auto score_json = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json points = json::array();
  for (std::size_t p = 0; p < result.grid.size(); ++p) {
    json point = result.grid[p].to_json();
    point["mean_score"] = score_json(result.mean_scores[p]);
    json per_fold = json::array();
    for (Eigen::Index f = 0; f < result.per_fold_scores.cols(); ++f) {
      per_fold.push_back(score_json(result.per_fold_scores(static_cast<Eigen::Index>(p), f)));
    }
    point["fold_scores"] = std::move(per_fold);
    points.push_back(std::move(point));
  }
  j["grid"] = std::move(points);
  j["best_point"] = result.best_point().to_json();
  j["best_score"] = score_json(result.mean_scores[result.best_index]);
  return j;
}

std::string format_heatmap(const GridSearchResult& result) {
  std::string out = "C";
  if (!result.grid.empty()) {
    for (const auto& [name, value] : result.grid.front().params) out += "," + name;
  }
  out += ",mean_score\n";
  for (std::size_t p = 0; p < result.grid.size(); ++p) {
    out += format_double(result.grid[p].C);
    for (const auto& [name, value] : result.grid[p].params) out += "," + format_double(value);
    out += "," + format_double(result.mean_scores[p]) + "\n";
  }
  return out;
}

}  // namespace kqr
