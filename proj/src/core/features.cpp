#include "core/features.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace kqr {
namespace {

using namespace std::chrono;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::int64_t kSecondsPerDay = 86400;

struct Civil {
  int year;
  unsigned month;
  unsigned day;
  int hour;
  int minute;
  int second;
};

Civil to_civil(Timestamp ts) {
  const std::int64_t days = day_number(ts);
  const std::int64_t rem = ts.seconds - days * kSecondsPerDay;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  return {static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
          static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
          static_cast<int>((rem / 60) % 60), static_cast<int>(rem % 60)};
}

bool read_int(std::string_view text, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > text.size()) return false;
  int value = 0;
  for (std::size_t k = pos; k < pos + width; ++k) {
    if (text[k] < '0' || text[k] > '9') return false;
    value = value * 10 + (text[k] - '0');
  }
  out = value;
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool is_missing(std::string_view cell) {
  cell = trim(cell);
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null";
}

// NaN for missing cells; nullopt for cells that are present but not numbers.
std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (is_missing(cell)) return kNaN;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

struct FeatureItem {
  enum class Kind { Column, Keyword, StationAverage, ProfileOf } kind;
  std::string name;
  std::vector<std::string> sources;
};

std::vector<FeatureItem> parse_items(const nlohmann::ordered_json& items, const RawTable& table) {
  if (!items.is_array() || items.empty()) {
    throw Error(ErrorKind::Config, "recipe must list at least one feature", "recipe");
  }
  const auto& keywords = calendar_keywords();
  std::vector<FeatureItem> out;
  for (const auto& item : items) {
    FeatureItem f;
    if (item.is_string()) {
      f.name = item.get<std::string>();
      const bool keyword = std::find(keywords.begin(), keywords.end(), f.name) != keywords.end();
      f.kind = keyword ? FeatureItem::Kind::Keyword : FeatureItem::Kind::Column;
      if (!keyword) f.sources = {f.name};
    } else if (item.is_object() && item.contains("name") && item["name"].is_string()) {
      f.name = item["name"].get<std::string>();
      if (item.contains("station_average")) {
        f.kind = FeatureItem::Kind::StationAverage;
        const auto& cols = item["station_average"];
        if (!cols.is_array() || cols.empty()) {
          throw Error(ErrorKind::Config, "station_average of '" + f.name + "' must list columns",
                      f.name);
        }
        for (const auto& c : cols) {
          if (!c.is_string()) {
            throw Error(ErrorKind::Config, "station_average entries must be column names", f.name);
          }
          f.sources.push_back(c.get<std::string>());
        }
      } else if (item.contains("station_prefix")) {
        f.kind = FeatureItem::Kind::StationAverage;
        const auto prefix = item["station_prefix"].get<std::string>();
        for (std::size_t c = 1; c < table.header.size(); ++c) {
          if (table.header[c].starts_with(prefix)) f.sources.push_back(table.header[c]);
        }
        if (f.sources.empty()) {
          throw Error(ErrorKind::Config, "no column starts with station prefix '" + prefix + "'",
                      prefix);
        }
      } else if (item.contains("profile_of")) {
        f.kind = FeatureItem::Kind::ProfileOf;
        f.sources = {item["profile_of"].get<std::string>()};
      } else {
        throw Error(ErrorKind::Config, "recipe item '" + f.name + "' has no known derivation",
                    f.name);
      }
    } else {
      throw Error(ErrorKind::Config, "recipe items must be names or objects with a 'name'",
                  "recipe");
    }
    for (const auto& prev : out) {
      if (prev.name == f.name) {
        throw Error(ErrorKind::Config, "feature '" + f.name + "' listed twice", f.name);
      }
    }
    for (const auto& src : f.sources) {
      if (!table.column(src)) {
        throw Error(ErrorKind::Config, "unknown column '" + src + "' in recipe", src);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  text = trim(text);
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    text = text.substr(1, text.size() - 2);
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (!read_int(text, 0, 4, y) || text.size() < 10 || text[4] != '-' || !read_int(text, 5, 2, mo) ||
      text[7] != '-' || !read_int(text, 8, 2, d)) {
    return std::nullopt;
  }
  std::size_t pos = 10;
  if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
    if (!read_int(text, pos + 1, 2, h) || pos + 3 >= text.size() || text[pos + 3] != ':' ||
        !read_int(text, pos + 4, 2, mi)) {
      return std::nullopt;
    }
    pos += 6;
    if (pos < text.size() && text[pos] == ':') {
      if (!read_int(text, pos + 1, 2, s)) return std::nullopt;
      pos += 3;
    }
  }
  std::int64_t offset = 0;
  if (pos < text.size()) {
    if (text[pos] == 'Z' && pos + 1 == text.size()) {
      pos += 1;
    } else if (text[pos] == '+' || text[pos] == '-') {
      int oh = 0, om = 0;
      if (!read_int(text, pos + 1, 2, oh)) return std::nullopt;
      std::size_t next = pos + 3;
      if (next < text.size() && text[next] == ':') ++next;
      if (!read_int(text, next, 2, om) || next + 2 != text.size() || oh > 23 || om > 59) {
        return std::nullopt;
      }
      offset = (text[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
      pos = text.size();
    }
  }
  if (pos != text.size()) return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return std::nullopt;
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return Timestamp{days * kSecondsPerDay + h * 3600 + mi * 60 + s - offset};
}

std::int64_t day_number(Timestamp ts) {
  std::int64_t days = ts.seconds / kSecondsPerDay;
  if (ts.seconds % kSecondsPerDay < 0) --days;
  return days;
}

std::string format_timestamp(Timestamp ts) {
  const Civil c = to_civil(ts);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", c.year, c.month, c.day, c.hour,
                c.minute, c.second);
  return buf;
}

CalendarColumns calendar_features(std::span<const Timestamp> timestamps) {
  CalendarColumns cols;
  for (const Timestamp ts : timestamps) {
    const Civil c = to_civil(ts);
    const weekday wd{sys_days{std::chrono::days{day_number(ts)}}};
    cols.hour.push_back(c.hour);
    cols.month.push_back(c.month);
    cols.day_of_week.push_back(wd.iso_encoding() - 1);
    cols.day.push_back(c.day);
  }
  return cols;
}

HolidayCalendar HolidayCalendar::parse(std::string_view text, std::string country) {
  HolidayCalendar cal;
  cal.country = std::move(country);
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto ts = parse_timestamp(line);
    if (!ts || line.size() != 10) {
      throw Error(ErrorKind::Parse,
                  "holiday calendar line " + std::to_string(line_no) + ": bad date '" +
                      std::string(line) + "'");
    }
    cal.days.insert(day_number(*ts));
  }
  return cal;
}

HolidayCalendar HolidayCalendar::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open holiday calendar '" + path + "'", "recipe");
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string stem = path.substr(path.find_last_of('/') + 1);
  stem = stem.substr(0, stem.find('.'));
  return parse(buf.str(), stem);
}

std::vector<double> holiday_flag(std::span<const Timestamp> timestamps,
                                 const HolidayCalendar& calendar) {
  std::vector<double> out;
  out.reserve(timestamps.size());
  for (const Timestamp ts : timestamps) out.push_back(calendar.contains(ts) ? 1.0 : 0.0);
  return out;
}

std::vector<double> station_average(const RowMatrix& stations) {
  if (stations.cols() < 1) throw Error(ErrorKind::Input, "station average needs at least one station");
  std::vector<double> out(static_cast<std::size_t>(stations.rows()), kNaN);
  for (Eigen::Index i = 0; i < stations.rows(); ++i) {
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index j = 0; j < stations.cols(); ++j) {
      if (std::isfinite(stations(i, j))) {
        sum += stations(i, j);
        ++count;
      }
    }
    if (count > 0) out[static_cast<std::size_t>(i)] = sum / count;
  }
  return out;
}

TemperatureProfile TemperatureProfile::build(std::span<const Timestamp> timestamps,
                                             std::span<const double> values) {
  if (timestamps.size() != values.size()) {
    throw Error(ErrorKind::Input, "profile history: timestamps and values differ in length");
  }
  TemperatureProfile p;
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    const Civil c = to_civil(timestamps[i]);
    const int m = static_cast<int>(c.month);
    const int d = static_cast<int>(c.day);
    for (Mean* slot : {&p.by_day_hour_[{m, d, c.hour}], &p.by_month_hour_[{m, c.hour}],
                       &p.by_month_[m]}) {
      slot->sum += values[i];
      ++slot->count;
    }
  }
  if (p.by_month_.empty()) throw Error(ErrorKind::Input, "profile history has no values");
  return p;
}

double TemperatureProfile::lookup(Timestamp ts) const {
  const Civil c = to_civil(ts);
  const int m = static_cast<int>(c.month);
  if (auto it = by_day_hour_.find({m, static_cast<int>(c.day), c.hour}); it != by_day_hour_.end()) {
    return it->second.value();
  }
  if (auto it = by_month_hour_.find({m, c.hour}); it != by_month_hour_.end()) {
    return it->second.value();
  }
  if (auto it = by_month_.find(m); it != by_month_.end()) return it->second.value();
  return kNaN;
}

std::optional<std::size_t> RawTable::column(std::string_view name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return c;
  }
  return std::nullopt;
}

Dataset assemble(const RawTable& table, const nlohmann::ordered_json& recipe,
                 const std::string& target, bool target_required) {
  const auto ts_col = table.column("timestamp");
  if (!ts_col) throw Error(ErrorKind::Config, "input has no 'timestamp' column", "timestamp");

  nlohmann::ordered_json items = recipe;
  std::optional<HolidayCalendar> calendar;
  if (recipe.is_object()) {
    for (const auto& [key, value] : recipe.items()) {
      if (key != "features" && key != "holidays") {
        throw Error(ErrorKind::Config, "unknown recipe key '" + key + "'", key);
      }
    }
    items = recipe.value("features", nlohmann::ordered_json::array());
    if (recipe.contains("holidays")) {
      const auto& h = recipe["holidays"];
      if (h.is_string()) {
        calendar = HolidayCalendar::load(h.get<std::string>());
      } else if (h.is_array()) {
        std::string text;
        for (const auto& d : h) text += d.get<std::string>() + "\n";
        calendar = HolidayCalendar::parse(text);
      } else {
        throw Error(ErrorKind::Config, "'holidays' must be a path or a list of dates", "holidays");
      }
    }
  }
  const std::vector<FeatureItem> features = parse_items(items, table);
  for (const auto& f : features) {
    if (f.name == "is_holiday" && f.kind == FeatureItem::Kind::Keyword && !calendar) {
      throw Error(ErrorKind::Config, "is_holiday needs a 'holidays' calendar in the recipe",
                  "is_holiday");
    }
  }

  std::optional<std::size_t> target_col;
  if (!target.empty()) {
    target_col = table.column(target);
    if (!target_col && target_required) {
      throw Error(ErrorKind::Config, "target column '" + target + "' not found", "target");
    }
  }

  Dataset ds;
  ds.recipe = recipe;
  ds.target = target;
  ds.has_target = target_col.has_value();

  // Parse timestamps, then order by instant keeping the first of any repeats.
  std::vector<std::pair<Timestamp, std::size_t>> order;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const auto ts = *ts_col < cells.size() ? parse_timestamp(cells[*ts_col]) : std::nullopt;
    if (!ts) {
      ds.warnings.push_back("line " + std::to_string(table.line_numbers[r]) +
                            ": unparseable timestamp '" +
                            (*ts_col < cells.size() ? cells[*ts_col] : std::string()) +
                            "', row dropped");
      ++ds.dropped_rows;
      continue;
    }
    order.emplace_back(*ts, r);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<Timestamp, std::size_t>> kept;
  for (const auto& entry : order) {
    if (!kept.empty() && kept.back().first == entry.first) {
      ds.warnings.push_back("line " + std::to_string(table.line_numbers[entry.second]) +
                            ": repeated timestamp " + format_timestamp(entry.first) +
                            ", row dropped");
      ++ds.dropped_rows;
      continue;
    }
    kept.push_back(entry);
  }

  std::vector<Timestamp> stamps;
  stamps.reserve(kept.size());
  for (const auto& entry : kept) stamps.push_back(entry.first);
  const std::size_t n = kept.size();

  const auto numeric_column = [&](const std::string& name) {
    const std::size_t c = *table.column(name);
    std::vector<double> col(n, kNaN);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = kept[i].second;
      if (c >= table.rows[r].size()) continue;
      const auto v = parse_number(table.rows[r][c]);
      if (!v) {
        ds.warnings.push_back("line " + std::to_string(table.line_numbers[r]) + ": column '" +
                              name + "' is not numeric ('" + table.rows[r][c] +
                              "'), treated as missing");
        continue;
      }
      col[i] = *v;
    }
    return col;
  };

  const CalendarColumns cal = calendar_features(stamps);
  std::vector<std::vector<double>> columns;
  for (const auto& f : features) {
    switch (f.kind) {
      case FeatureItem::Kind::Keyword:
        if (f.name == "hour") columns.push_back(cal.hour);
        if (f.name == "month") columns.push_back(cal.month);
        if (f.name == "day_of_week") columns.push_back(cal.day_of_week);
        if (f.name == "day") columns.push_back(cal.day);
        if (f.name == "is_holiday") columns.push_back(holiday_flag(stamps, *calendar));
        break;
      case FeatureItem::Kind::Column:
        columns.push_back(numeric_column(f.name));
        break;
      case FeatureItem::Kind::StationAverage: {
        RowMatrix stations(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f.sources.size()));
        for (std::size_t s = 0; s < f.sources.size(); ++s) {
          const auto col = numeric_column(f.sources[s]);
          for (std::size_t i = 0; i < n; ++i) {
            stations(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = col[i];
          }
        }
        columns.push_back(n == 0 ? std::vector<double>{} : station_average(stations));
        break;
      }
      case FeatureItem::Kind::ProfileOf: {
        auto col = numeric_column(f.sources.front());
        const bool any = std::any_of(col.begin(), col.end(), [](double v) { return std::isfinite(v); });
        if (any) {
          const auto profile = TemperatureProfile::build(stamps, col);
          for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(col[i])) col[i] = profile.lookup(stamps[i]);
          }
        }
        columns.push_back(std::move(col));
        break;
      }
    }
    ds.feature_names.push_back(f.name);
    ds.categorical_mask.push_back(f.kind == FeatureItem::Kind::Keyword);
  }
  std::vector<double> y(n, kNaN);
  if (target_col) y = numeric_column(target);

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    bool complete = !target_required || std::isfinite(y[i]);
    for (const auto& col : columns) complete = complete && std::isfinite(col[i]);
    if (complete) {
      keep.push_back(i);
    } else {
      ++ds.dropped_rows;
    }
  }

  const auto rows = static_cast<Eigen::Index>(keep.size());
  ds.X.resize(rows, static_cast<Eigen::Index>(columns.size()));
  ds.y.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::size_t src = keep[static_cast<std::size_t>(i)];
    ds.timestamps.push_back(stamps[src]);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      ds.X(i, static_cast<Eigen::Index>(j)) = columns[j][src];
    }
    ds.y[i] = y[src];
  }
  return ds;
}

}  // namespace kqr
