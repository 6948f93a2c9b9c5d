#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "core/types.hpp"

namespace kqr {

// Seconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t seconds = 0;

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

// Accepts YYYY-MM-DD, optionally followed by 'T' or ' ' and HH:MM[:SS],
// and an optional 'Z' or +HH:MM / -HH:MM offset. Naive times are UTC.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);  // YYYY-MM-DDTHH:MM:SSZ

std::int64_t day_number(Timestamp ts);  // days since 1970-01-01

struct CalendarColumns {
  std::vector<double> hour;         // 0-23
  std::vector<double> month;        // 1-12
  std::vector<double> day_of_week;  // Monday = 0 ... Sunday = 6
  std::vector<double> day;          // day of month
};

CalendarColumns calendar_features(std::span<const Timestamp> timestamps);

struct HolidayCalendar {
  std::string country;
  std::set<std::int64_t> days;  // day_number of each listed date

  bool contains(Timestamp ts) const { return days.contains(day_number(ts)); }

  // One ISO date per line; blank lines and '#' comments are skipped.
  static HolidayCalendar parse(std::string_view text, std::string country = {});
  static HolidayCalendar load(const std::string& path);
};

std::vector<double> holiday_flag(std::span<const Timestamp> timestamps,
                                 const HolidayCalendar& calendar);

// Row-wise mean of the non-missing (NaN) entries; all-missing rows stay NaN.
std::vector<double> station_average(const RowMatrix& stations);

// Mean of a series per (month, day, hour), with fallbacks to (month, hour)
// and then month for keys that never occur in the history.
class TemperatureProfile {
 public:
  static TemperatureProfile build(std::span<const Timestamp> timestamps,
                                  std::span<const double> values);

  // NaN when not even the month occurs in the history.
  double lookup(Timestamp ts) const;

 private:
  struct Mean {
    double sum = 0.0;
    std::size_t count = 0;
    double value() const { return sum / static_cast<double>(count); }
  };
  std::map<std::tuple<int, int, int>, Mean> by_day_hour_;
  std::map<std::pair<int, int>, Mean> by_month_hour_;
  std::map<int, Mean> by_month_;
};

// Raw CSV contents: header plus string cells, with 1-based file line numbers.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  std::optional<std::size_t> column(std::string_view name) const;
};

struct Dataset {
  std::vector<Timestamp> timestamps;
  RowMatrix X;
  Vector y;  // NaN where the target is absent, when the target is optional
  bool has_target = false;
  std::string target;
  std::vector<std::string> feature_names;
  std::vector<bool> categorical_mask;
  std::size_t dropped_rows = 0;
  std::vector<std::string> warnings;
  nlohmann::ordered_json recipe;

  std::size_t rows() const { return timestamps.size(); }
};

// The recipe is either a list of feature items or an object
// {"features": [...], "holidays": "path"}. An item is a column name, one of
// the calendar keywords (hour, month, day_of_week, day, is_holiday), or an
// object:
//   {"name": n, "station_average": [columns...]}
//   {"name": n, "station_prefix": "w"}
//   {"name": n, "profile_of": column}   // gaps filled from the profile
//
// Rows whose timestamp does not parse are dropped with a warning, as are
// repeated instants (first occurrence kept). Rows with missing features, or
// a missing target when `target_required`, are dropped after derivations.
Dataset assemble(const RawTable& table, const nlohmann::ordered_json& recipe,
                 const std::string& target, bool target_required = true);

inline const std::vector<std::string>& calendar_keywords() {
  static const std::vector<std::string> keywords = {"hour", "month", "day_of_week", "day",
                                                    "is_holiday"};
  return keywords;
}

}  // namespace kqr
