// kqr: fit, predict, evaluate and cross-validate kernel quantile regression
// models from CSV time series.

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kqr/kqr.h"

namespace {

using json = nlohmann::ordered_json;

struct UsageError {
  std::string message;
  std::string flag;
};

int report(int code, const std::string& kind, const std::string& message,
           const std::string& flag) {
  json err;
  err["error"] = {{"kind", kind}, {"message", message}, {"flag", flag}, {"exit_code", code}};
  std::cerr << err.dump() << "\n";
  return code;
}

// Library fields that are not themselves flags come from kernel parameters.
std::string flag_for(const std::string& field) {
  static const std::vector<std::string> flags = {
      "data",  "recipe", "target", "quantiles", "kernel",   "params",   "C",
      "grid",  "splits", "min-train", "scale",  "model",    "out",      "table",
      "losses", "seed",  "rows",   "max-iter",  "gap-tol",  "feas-tol"};
  for (const auto& f : flags) {
    if (f == field) return f;
  }
  static const std::vector<std::string> params = {"gamma",  "length_scale", "period",
                                                  "degree", "coef0",        "nu"};
  for (const auto& p : params) {
    if (p == field) return "params";
  }
  return field;
}

int library_failure(kqr_status status) {
  const int code = status == KQR_ERR_INTERNAL ? 1 : static_cast<int>(status);
  return report(code, kqr_last_error_kind(), kqr_last_error_message(),
                flag_for(kqr_last_error_field()));
}

// Thrown from command bodies; converted to an exit code in main.
struct Failure {
  kqr_status status;
};

void check(kqr_status status) {
  if (status != KQR_OK) throw Failure{status};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  kqr_string_free(s);
  return out;
}

std::string slurp(const std::string& path, const std::string& flag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError{"cannot read '" + path + "'", flag};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A JSON flag may be given inline or as a path to a JSON file.
std::string json_arg(const std::string& value, const std::string& flag) {
  const auto first = value.find_first_not_of(" \t\r\n");
  const std::string text =
      first != std::string::npos && (value[first] == '{' || value[first] == '[')
          ? value
          : slurp(value, flag);
  try {
    return json::parse(text).dump();
  } catch (const json::parse_error& e) {
    throw UsageError{"--" + flag + " is not valid JSON: " + e.what(), flag};
  }
}

std::vector<double> number_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end == item.c_str() || *end != '\0') {
      throw UsageError{"--" + flag + ": '" + item + "' is not a number", flag};
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError{"--" + flag + " is empty", flag};
  return out;
}

std::vector<double> quantile_list(const std::string& text) {
  const auto qs = number_list(text, "quantiles");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (!(qs[i] > 0.0 && qs[i] < 1.0)) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "quantile %g is outside (0, 1)", qs[i]);
      throw UsageError{buf, "quantiles"};
    }
    if (i > 0 && !(qs[i] > qs[i - 1])) {
      throw UsageError{"quantiles must be strictly increasing", "quantiles"};
    }
  }
  return qs;
}

struct Options {
  std::string data, recipe, target = "load", quantiles, kernel = "gaussian_rbf", params, C,
                                 grid, model, out, table, losses;
  std::size_t splits = 3, min_train = 0, rows = 200;
  std::uint64_t seed = 1;
  double scale = 0.0;
  bool scale_set = false, rearrange = false, as_json = false;
  kqr_solver_settings settings = kqr_solver_settings_default();
};

void need(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError{"--" + flag + " is required", flag};
}

std::string kernel_json(const Options& o) {
  json k;
  k["family"] = o.kernel;
  k["params"] = o.params.empty() ? json::object() : json::parse(json_arg(o.params, "params"));
  if (!k["params"].is_object()) throw UsageError{"--params must be a JSON object", "params"};
  return k.dump();
}

std::optional<std::string> recipe_json(const Options& o) {
  if (o.recipe.empty()) return std::nullopt;
  return json_arg(o.recipe, "recipe");
}

void check_settings(const kqr_solver_settings& s) {
  if (s.max_iterations <= 0) throw UsageError{"--max-iter must be positive", "max-iter"};
  if (!(s.gap_tolerance > 0.0)) throw UsageError{"--gap-tol must be positive", "gap-tol"};
  if (!(s.feasibility_tolerance > 0.0)) {
    throw UsageError{"--feas-tol must be positive", "feas-tol"};
  }
}

struct DatasetHandle {
  kqr_dataset* ptr = nullptr;
  ~DatasetHandle() { kqr_dataset_free(ptr); }
};

struct ModelHandle {
  kqr_model* ptr = nullptr;
  ~ModelHandle() { kqr_model_free(ptr); }
};

void load_dataset(const Options& o, DatasetHandle& ds) {
  const auto recipe = recipe_json(o);
  check(kqr_dataset_read(o.data.c_str(), recipe ? recipe->c_str() : nullptr, o.target.c_str(), 1,
                         &ds.ptr));
  for (std::size_t i = 0; i < kqr_dataset_warning_count(ds.ptr); ++i) {
    spdlog::warn("{}", kqr_dataset_warning(ds.ptr, i));
  }
  spdlog::info("{}: {} rows x {} features ({} dropped)", o.data, kqr_dataset_rows(ds.ptr),
               kqr_dataset_cols(ds.ptr), kqr_dataset_dropped(ds.ptr));
}

std::optional<std::string> created_at() {
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  if (epoch == nullptr || *epoch == '\0') return std::nullopt;
  const std::time_t t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

int cmd_fit(const Options& o) {
  need(o.data, "data");
  need(o.out, "out");
  const auto qs = quantile_list(o.quantiles.empty() ? "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
                                                    : o.quantiles);
  auto Cs = number_list(o.C.empty() ? "1" : o.C, "C");
  if (Cs.size() == 1) Cs.assign(qs.size(), Cs.front());
  if (Cs.size() != qs.size()) {
    throw UsageError{"--C needs one value or one per quantile", "C"};
  }
  for (double c : Cs) {
    if (!(c > 0.0)) throw UsageError{"--C must be positive", "C"};
  }
  check_settings(o.settings);
  const std::string kernel = kernel_json(o);

  DatasetHandle ds;
  load_dataset(o, ds);
  ModelHandle model;
  spdlog::info("fitting {} quantile levels", qs.size());
  check(kqr_model_fit(ds.ptr, kernel.c_str(), qs.data(), Cs.data(), qs.size(), o.rearrange ? 1 : 0,
                      &o.settings, &model.ptr));
  const auto stamp = created_at();
  if (stamp) check(kqr_model_set_created_at(model.ptr, stamp->c_str()));
  check(kqr_model_save(model.ptr, o.out.c_str()));
  char* summary = nullptr;
  check(kqr_model_summary_json(model.ptr, &summary));
  std::cout << take(summary) << "\n";
  return 0;
}

int cmd_predict(const Options& o) {
  need(o.model, "model");
  need(o.data, "data");
  need(o.out, "out");
  ModelHandle model;
  check(kqr_model_load(o.model.c_str(), &model.ptr));
  const auto recipe = recipe_json(o);
  char* summary = nullptr;
  check(kqr_model_predict_bands(model.ptr, o.data.c_str(), recipe ? recipe->c_str() : nullptr,
                                o.rearrange ? 1 : -1, o.out.c_str(), &summary));
  const json s = json::parse(take(summary));
  for (const auto& w : s["warnings"]) spdlog::warn("{}", w.get<std::string>());
  std::cout << s.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  if (o.data.empty() && o.losses.empty()) {
    throw UsageError{"--data (band file) or --losses is required", "data"};
  }
  if (!o.data.empty() && !o.losses.empty()) {
    throw UsageError{"--data and --losses are mutually exclusive", "losses"};
  }
  if (o.scale_set && !(o.scale > 0.0)) throw UsageError{"--scale must be positive", "scale"};
  const char* out = o.out.empty() ? nullptr : o.out.c_str();
  const char* table = o.table.empty() ? nullptr : o.table.c_str();
  char* report_text = nullptr;
  if (!o.data.empty()) {
    check(kqr_evaluate_bands(o.data.c_str(), o.scale, out, table, &report_text));
  } else {
    check(kqr_evaluate_losses(o.losses.c_str(), o.scale, out, table, &report_text));
  }
  std::cout << take(report_text);
  return 0;
}

int cmd_cv(const Options& o) {
  need(o.data, "data");
  const auto qs = quantile_list(o.quantiles.empty() ? "0.5" : o.quantiles);
  if (qs.size() != 1) throw UsageError{"cv takes a single quantile level", "quantiles"};
  if (o.splits == 0) throw UsageError{"--splits must be positive", "splits"};
  check_settings(o.settings);
  const std::string kernel = kernel_json(o);
  const std::string grid = o.grid.empty() ? std::string() : json_arg(o.grid, "grid");

  DatasetHandle ds;
  load_dataset(o, ds);
  char* best = nullptr;
  check(kqr_cross_validate(ds.ptr, kernel.c_str(), grid.empty() ? nullptr : grid.c_str(), o.splits,
                           o.min_train, qs.front(), &o.settings,
                           o.out.empty() ? nullptr : o.out.c_str(),
                           o.table.empty() ? nullptr : o.table.c_str(), &best));
  std::cout << take(best) << "\n";
  return 0;
}

int cmd_kernels(const Options& o) {
  char* text = nullptr;
  check(kqr_kernels_json(&text));
  const json list = json::parse(take(text));
  if (o.as_json) {
    std::cout << list.dump(2) << "\n";
    return 0;
  }
  for (const auto& k : list) {
    std::string params;
    for (const auto& p : k["required_params"]) {
      params += (params.empty() ? "" : ", ") + p.get<std::string>();
    }
    std::printf("%-14s params: %-28s %s\n", k["name"].get<std::string>().c_str(),
                params.empty() ? "(none)" : params.c_str(), k["formula"].get<std::string>().c_str());
  }
  return 0;
}

int cmd_synth(const Options& o) {
  need(o.out, "out");
  if (o.rows == 0) throw UsageError{"--rows must be positive", "rows"};
  check(kqr_synthetic_csv(o.out.c_str(), o.rows, o.seed));
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("kqr");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("KQR_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  Options o;
  CLI::App app{"Kernel quantile regression for probabilistic time-series forecasts"};
  app.require_subcommand(1);

  const auto add_data = [&](CLI::App* c, const std::string& help) {
    c->add_option("--data", o.data, help);
  };
  const auto add_dataset = [&](CLI::App* c) {
    c->add_option("--recipe", o.recipe, "feature recipe (JSON file or inline JSON)");
    c->add_option("--target", o.target, "target column")->capture_default_str();
  };
  const auto add_kernel = [&](CLI::App* c) {
    c->add_option("--kernel", o.kernel, "kernel name (see `kqr kernels`)")->capture_default_str();
    c->add_option("--params", o.params, "kernel parameters as a JSON object");
  };
  const auto add_solver = [&](CLI::App* c) {
    c->add_option("--max-iter", o.settings.max_iterations, "interior-point iteration cap")
        ->capture_default_str();
    c->add_option("--gap-tol", o.settings.gap_tolerance, "duality-gap tolerance")
        ->capture_default_str();
    c->add_option("--feas-tol", o.settings.feasibility_tolerance, "feasibility tolerance")
        ->capture_default_str();
  };

  auto* fit = app.add_subcommand("fit", "fit a multi-quantile model and save it");
  add_data(fit, "training CSV");
  add_dataset(fit);
  add_kernel(fit);
  add_solver(fit);
  fit->add_option("--quantiles", o.quantiles, "comma-separated levels in (0, 1)");
  fit->add_option("--C", o.C, "regularization constant, one value or one per quantile");
  fit->add_flag("--rearrange", o.rearrange, "sort predictions across quantiles");
  fit->add_option("--out", o.out, "model file to write");

  auto* predict = app.add_subcommand("predict", "write forecast bands for a CSV");
  predict->add_option("--model", o.model, "model file");
  add_data(predict, "input CSV");
  predict->add_option("--recipe", o.recipe, "override the model's feature recipe");
  predict->add_flag("--rearrange", o.rearrange, "sort predictions across quantiles");
  predict->add_option("--out", o.out, "band CSV to write");

  auto* evaluate = app.add_subcommand("evaluate", "score a band file");
  add_data(evaluate, "band CSV with an observed column");
  evaluate->add_option("--losses", o.losses, "CSV of precomputed per-quantile losses");
  evaluate->add_option("--scale", o.scale, "loss scale (default: mean |observed|)")
      ->each([&](const std::string&) { o.scale_set = true; });
  evaluate->add_option("--out", o.out, "score report JSON");
  evaluate->add_option("--table", o.table, "quantile/CRPS table CSV");

  auto* cv = app.add_subcommand("cv", "expanding-window grid search");
  add_data(cv, "training CSV");
  add_dataset(cv);
  add_kernel(cv);
  add_solver(cv);
  cv->add_option("--quantiles", o.quantiles, "quantile level to tune (default 0.5)");
  cv->add_option("--grid", o.grid, "grid JSON: {\"C\": [...], \"<param>\": [...]}");
  cv->add_option("--splits", o.splits, "number of folds")->capture_default_str();
  cv->add_option("--min-train", o.min_train, "rows in the first training window (default n/2)");
  cv->add_option("--out", o.out, "grid result JSON");
  cv->add_option("--table", o.table, "heat-map CSV");

  auto* kernels = app.add_subcommand("kernels", "list supported kernels");
  kernels->add_flag("--json", o.as_json, "machine-readable output");

  auto* synth = app.add_subcommand("synth", "write a synthetic load CSV");
  synth->add_option("--rows", o.rows, "number of hourly rows")->capture_default_str();
  synth->add_option("--seed", o.seed, "random seed")->capture_default_str();
  synth->add_option("--out", o.out, "CSV to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(2, "usage", e.what(), "");
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*predict) return cmd_predict(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*cv) return cmd_cv(o);
    if (*kernels) return cmd_kernels(o);
    if (*synth) return cmd_synth(o);
  } catch (const UsageError& e) {
    return report(2, "config", e.message, e.flag);
  } catch (const Failure& f) {
    return library_failure(f.status);
  } catch (const std::exception& e) {
    return report(1, "internal", e.what(), "");
  }
  return 0;
}
