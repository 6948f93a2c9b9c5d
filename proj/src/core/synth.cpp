#include "core/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "core/error.hpp"
#include "core/features.hpp"

namespace kqr {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  while (u <= 0.0) u = uniform();
  const double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  spare_ = r * std::sin(2.0 * std::numbers::pi * v);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * v);
}

double Rng::laplace(double scale) {
  const double u = uniform() - 0.5;
  const double sign = u < 0.0 ? -1.0 : 1.0;
  return -scale * sign * std::log(1.0 - 2.0 * std::abs(u));
}

std::string synthetic_load_csv(std::size_t rows, std::uint64_t seed) {
  if (rows < 1) throw Error(ErrorKind::Config, "rows must be >= 1", "rows");
  Rng rng(seed);
  const Timestamp start = *parse_timestamp("2021-01-04T00:00:00Z");
  std::string out = "timestamp,temperature,wind_speed,load\n";
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < rows; ++i) {
    const Timestamp ts{start.seconds + static_cast<std::int64_t>(i) * 3600};
    const double hour = static_cast<double>(i % 24);
    const double weekday = static_cast<double>((i / 24) % 7);
    const double daily = std::sin(two_pi * (hour - 7.0) / 24.0);
    const double temperature = 2.0 + 5.0 * std::sin(two_pi * (hour - 9.0) / 24.0) + rng.normal();
    const double wind = std::abs(5.0 + 2.0 * rng.normal());
    const double noise_scale = 120.0 + 80.0 * (1.0 + daily);
    const double load = 6000.0 + 900.0 * daily - 35.0 * temperature - 8.0 * wind -
                        (weekday >= 5.0 ? 400.0 : 0.0) + noise_scale * rng.normal();
    char buf[96];
    std::snprintf(buf, sizeof buf, ",%.3f,%.3f,%.2f\n", temperature, wind, load);
    out += format_timestamp(ts) + buf;
  }
  return out;
}

}  // namespace kqr
