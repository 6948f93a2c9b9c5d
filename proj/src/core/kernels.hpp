#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "core/types.hpp"

namespace kqr {

enum class KernelFamily {
  GaussianRbf,
  LaplacianAbs,
  Matern,
  Linear,
  Periodic,
  Polynomial,
  Sigmoid,
  Cosine,
};

// Declarative kernel description. Only the fields used by `family` matter;
// the rest keep their defaults and are ignored by evaluation, comparison and
// serialization.
struct KernelSpec {
  KernelFamily family = KernelFamily::GaussianRbf;
  double gamma = 1.0;
  double length_scale = 1.0;
  double period = 1.0;
  int degree = 3;
  double coef0 = 0.0;
  double nu = 1.5;  // Matern smoothness, one of 0.5, 1.5, 2.5

  // Throws Error{Config} naming the first invalid used parameter.
  void validate() const;

  // Names of the parameters read by this family, in serialization order.
  std::vector<std::string> used_params() const;

  // Sets a used parameter by name. Unknown or unused names are rejected.
  void set_param(std::string_view name, double value);
  double param(std::string_view name) const;

  nlohmann::ordered_json to_json() const;
  static KernelSpec from_json(const nlohmann::json& j);

  static KernelSpec with_family(std::string_view name);

  friend bool operator==(const KernelSpec& a, const KernelSpec& b);
};

std::string family_name(KernelFamily family);
KernelFamily parse_family(std::string_view name);

// The ten kernels exposed to users: Matern counts once per smoothness.
struct KernelListing {
  std::string name;
  std::string family;
  std::vector<std::string> required_params;
  std::string formula;
};
const std::vector<KernelListing>& kernel_catalog();

// True for families whose Gram matrices are PSD for every input. Polynomial
// qualifies only when coef0 >= 0.
bool is_psd_family(const KernelSpec& spec);

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> xp);

struct GramMatrix {
  Matrix values;
  double jitter_applied = 0.0;
};

inline constexpr double kPsdTolerance = 1e-8;

// Pairwise kernel matrix without any repair. Upper triangle computed and
// mirrored so the result is exactly symmetric.
Matrix gram_unrepaired(const KernelSpec& spec, const RowMatrix& X);

// Raises the diagonal when the smallest eigenvalue is below -kPsdTolerance.
// Returns the jitter added (zero when none was needed).
double repair_psd(Matrix& K);

GramMatrix gram_matrix(const KernelSpec& spec, const RowMatrix& X);

// Rectangular (m x n) kernel block: entry (j, i) = k(X_new_j, X_train_i).
Matrix cross_gram(const KernelSpec& spec, const RowMatrix& X_train, const RowMatrix& X_new);

}  // namespace kqr
