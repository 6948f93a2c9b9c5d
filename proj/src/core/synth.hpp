#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace kqr {

// Portable variates on top of mt19937_64; the standard distributions are
// implementation-defined, which would make generated files differ between
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double laplace(double scale);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Hourly load-like series starting 2021-01-04T00:00:00Z with columns
// timestamp, temperature, wind_speed, load. Noise grows with the daily
// cycle so the quantile bands are heteroscedastic.
std::string synthetic_load_csv(std::size_t rows, std::uint64_t seed);

}  // namespace kqr
