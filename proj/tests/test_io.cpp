#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "core/error.hpp"
#include "core/io.hpp"
#include "support.hpp"

using namespace testing_support;
using json = nlohmann::ordered_json;

namespace {

kqr::ErrorKind kind_of(const auto& fn) {
  try {
    fn();
  } catch (const kqr::Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return kqr::ErrorKind::Numerical;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "kqr_test_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

kqr::ModelFile sample_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto X = random_matrix(rng, 40, 3, -5, 5);
  kqr::Vector y(40);
  for (int i = 0; i < 40; ++i) y[i] = std::exp(X(i, 0) / 3) + 0.1 * X(i, 1) * X(i, 2) + laplace(rng, 0.3);
  const auto scaler = kqr::fit_standardizer(X, {false, false, true});
  kqr::ModelFile file;
  file.model = kqr::fit_multi(X, y, {0.05, 0.5, 0.95}, {3.0, 1.0, 3.0},
                              kqr::KernelSpec::with_family("matern_2.5"), scaler, {}, true);
  file.feature_names = {"a", "b", "c"};
  file.target = "load";
  file.recipe = json::parse(R"(["a","b","c"])");
  return file;
}

bool bitwise_equal(const kqr::Matrix& a, const kqr::Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("format_double round-trips") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double v = std::ldexp(uniform(rng, -1, 1), static_cast<int>(rng() % 200) - 100);
    CHECK(std::stod(kqr::format_double(v)) == v);
  }
  CHECK(kqr::format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(kqr::format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(kqr::format_double(std::nan("")) == "nan");
}

TEST_CASE("model round-trip is bit exact") {
  const auto file = sample_model(2);
  const auto path = scratch("model.json").string();
  kqr::save_model(file, path);
  const auto loaded = kqr::load_model(path);

  std::mt19937_64 rng(3);
  const auto Xnew = random_matrix(rng, 10, 3, -6, 6);
  CHECK(bitwise_equal(kqr::predict_multi(file.model, Xnew), kqr::predict_multi(loaded.model, Xnew)));
  CHECK(loaded.feature_names == file.feature_names);
  CHECK(loaded.target == "load");
  CHECK(loaded.recipe == file.recipe);
  CHECK(loaded.model.quantiles == file.model.quantiles);
  CHECK(loaded.model.rearrange);
  CHECK(loaded.model.basis().kernel == file.model.basis().kernel);
  CHECK(loaded.model.basis().scaler.categorical_mask == std::vector<bool>{false, false, true});
  CHECK(kqr::serialize_model(loaded) == kqr::serialize_model(file));
  CHECK(kqr::serialize_model(file) == kqr::serialize_model(sample_model(2)));
}

TEST_CASE("damaged and foreign model files") {
  const auto text = kqr::serialize_model(sample_model(4));
  CHECK(kind_of([&] { kqr::deserialize_model(text.substr(0, text.size() / 2)); }) ==
        kqr::ErrorKind::Parse);
  CHECK(kind_of([] { kqr::deserialize_model(""); }) == kqr::ErrorKind::Parse);
  CHECK(kind_of([] { kqr::deserialize_model("[1, 2]"); }) == kqr::ErrorKind::Parse);

  auto j = json::parse(text);
  j["format_version"] = kqr::kModelFormatVersion + 1;
  CHECK(kind_of([&] { kqr::deserialize_model(j.dump()); }) == kqr::ErrorKind::Version);

  auto short_a = json::parse(text);
  short_a["models"][0]["a"].erase(0);
  CHECK(kind_of([&] { kqr::deserialize_model(short_a.dump()); }) == kqr::ErrorKind::Parse);

  CHECK(kind_of([] { kqr::load_model("/nonexistent/dir/model.json"); }) == kqr::ErrorKind::Io);
}

TEST_CASE("quantile column names") {
  CHECK(kqr::quantile_column_name(0.05) == "q05");
  CHECK(kqr::quantile_column_name(0.5) == "q50");
  CHECK(kqr::quantile_column_name(0.95) == "q95");
  CHECK(kqr::quantile_column_name(0.025) == "q2.5");
  for (double q : {0.01, 0.1, 0.25, 0.333, 0.975, 0.999}) {
    CHECK(kqr::parse_quantile_column(kqr::quantile_column_name(q)) == q);
  }
  CHECK_FALSE(kqr::parse_quantile_column("load").has_value());
  CHECK_FALSE(kqr::parse_quantile_column("q").has_value());
}

TEST_CASE("band files") {
  kqr::BandTable bands;
  bands.timestamps = {"2022-01-01T00:00:00Z"};
  bands.observed = std::vector<double>{3.25};
  bands.quantiles = {0.05, 0.95};
  bands.predictions = kqr::Matrix(1, 2);
  bands.predictions << 1.0 / 3.0, 7.0;
  const auto text = kqr::format_bands(bands);
  CHECK(text.substr(0, text.find('\n')) == "timestamp,observed,q05,q95");
  CHECK(text.back() == '\n');
  CHECK(text.find('\r') == std::string::npos);

  const auto back = kqr::parse_bands(text);
  CHECK(back.timestamps == bands.timestamps);
  CHECK(back.quantiles == bands.quantiles);
  CHECK(back.predictions == bands.predictions);
  REQUIRE(back.observed.has_value());
  CHECK((*back.observed)[0] == 3.25);
  CHECK(kqr::format_bands(back) == text);

  bands.observed.reset();
  const auto bare = kqr::format_bands(bands);
  CHECK(bare.substr(0, bare.find('\n')) == "timestamp,q05,q95");
  CHECK_FALSE(kqr::parse_bands(bare).observed.has_value());

  bands.predictions = kqr::Matrix(2, 2);
  CHECK(kind_of([&] { kqr::format_bands(bands); }) == kqr::ErrorKind::Input);
  CHECK_THROWS_AS(kqr::parse_bands("timestamp,load\n2022-01-01,3\n"), kqr::Error);
}

TEST_CASE("reading datasets") {
  const auto good = scratch("good.csv").string();
  kqr::write_text_file(good,
                       "timestamp,x,load\n2022-01-01T00:00,1,2\n2022-01-01T01:00,3,4\n"
                       "2022-01-01T02:00,5,6\n");
  const auto ds = kqr::read_dataset(good, json::parse(R"(["x"])"), "load");
  CHECK(ds.rows() == 3);
  CHECK(ds.warnings.empty());

  const auto bad = scratch("bad.csv").string();
  kqr::write_text_file(bad,
                       "timestamp,x,load\n2022-01-01T00:00,1,2\n2022-01-01X01:00,3,4\n"
                       "2022-01-01T02:00,5,6\n");
  const auto ds2 = kqr::read_dataset(bad, json::parse(R"(["x"])"), "load");
  CHECK(ds2.rows() == 2);
  REQUIRE(ds2.warnings.size() == 1);
  CHECK(ds2.warnings[0].find("line 3") != std::string::npos);

  const auto empty = scratch("empty.csv").string();
  kqr::write_text_file(empty, "");
  CHECK(kind_of([&] { kqr::read_dataset(empty, json::parse(R"(["x"])"), "load"); }) ==
        kqr::ErrorKind::Input);
  CHECK(kind_of([&] { kqr::read_dataset(good, json::parse(R"(["x"])"), "demand"); }) ==
        kqr::ErrorKind::Config);
  CHECK(kind_of([] { kqr::read_dataset("/nonexistent.csv", json::array(), "load"); }) ==
        kqr::ErrorKind::Io);
}

TEST_CASE("csv quoting") {
  const auto t = kqr::parse_csv("a,\"b,c\"\r\n\"x \"\"y\"\"\",2\r\n");
  CHECK(t.header == std::vector<std::string>{"a", "b,c"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "x \"y\"");
  CHECK(t.rows[0][1] == "2");
  CHECK(t.line_numbers[0] == 2);
}

TEST_CASE("loss tables and reports") {
  const auto losses = kqr::parse_losses("quantile,pinball\n0.1,100\n0.5,100\n0.9,100\n");
  CHECK(losses.size() == 3);
  CHECK(losses.at(0.5) == 100);
  const auto report = kqr::report_from_losses(losses, 4000);
  const auto table = kqr::format_report_table(report);
  CHECK(table.find("0.025") != std::string::npos);
  CHECK(table == kqr::format_report_table(kqr::report_from_losses(losses, 4000)));
  CHECK_THROWS_AS(kqr::parse_losses("quantile,pinball\n0.5,abc\n"), kqr::Error);
}
