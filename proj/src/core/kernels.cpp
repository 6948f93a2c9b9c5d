#include "core/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "core/error.hpp"

namespace kqr {
namespace {

struct FamilyInfo {
  KernelFamily family;
  const char* name;
  std::vector<std::string> params;
};

const std::vector<FamilyInfo>& family_table() {
  static const std::vector<FamilyInfo> table = {
      {KernelFamily::GaussianRbf, "gaussian_rbf", {"gamma"}},
      {KernelFamily::LaplacianAbs, "laplacian_abs", {"gamma"}},
      {KernelFamily::Matern, "matern", {"nu", "length_scale"}},
      {KernelFamily::Linear, "linear", {}},
      {KernelFamily::Periodic, "periodic", {"length_scale", "period"}},
      {KernelFamily::Polynomial, "polynomial", {"gamma", "degree", "coef0"}},
      {KernelFamily::Sigmoid, "sigmoid", {"gamma", "coef0"}},
      {KernelFamily::Cosine, "cosine", {}},
  };
  return table;
}

const FamilyInfo& info(KernelFamily family) {
  for (const auto& entry : family_table()) {
    if (entry.family == family) return entry;
  }
  throw Error(ErrorKind::Config, "unknown kernel family", "family");
}

double squared_euclidean(std::span<const double> x, std::span<const double> xp) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - xp[k];
    acc += diff * diff;
  }
  return acc;
}

double manhattan(std::span<const double> x, std::span<const double> xp) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) acc += std::abs(x[k] - xp[k]);
  return acc;
}

double dot(std::span<const double> x, std::span<const double> xp) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * xp[k];
  return acc;
}

double matern(double nu, double r, double length_scale) {
  const double s = r / length_scale;
  if (nu == 0.5) return std::exp(-s);
  if (nu == 1.5) {
    const double t = std::sqrt(3.0) * s;
    return (1.0 + t) * std::exp(-t);
  }
  const double t = std::sqrt(5.0) * s;
  return (1.0 + t + t * t / 3.0) * std::exp(-t);
}

// Evaluation without argument checks; callers validate shapes and finiteness.
double eval_unchecked(const KernelSpec& spec, std::span<const double> x, std::span<const double> xp) {
  switch (spec.family) {
    case KernelFamily::GaussianRbf:
      return std::exp(-spec.gamma * squared_euclidean(x, xp));
    case KernelFamily::LaplacianAbs:
      return std::exp(-spec.gamma * manhattan(x, xp));
    case KernelFamily::Matern:
      return matern(spec.nu, std::sqrt(squared_euclidean(x, xp)), spec.length_scale);
    case KernelFamily::Linear:
      return dot(x, xp);
    case KernelFamily::Periodic: {
      // Summed per coordinate: the Euclidean-radius form is not PSD for d > 1.
      double acc = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double s = std::sin(std::numbers::pi * std::abs(x[k] - xp[k]) / spec.period);
        acc += s * s;
      }
      return std::exp(-2.0 * acc / (spec.length_scale * spec.length_scale));
    }
    case KernelFamily::Polynomial:
      return std::pow(spec.gamma * dot(x, xp) + spec.coef0, spec.degree);
    case KernelFamily::Sigmoid:
      return std::tanh(spec.gamma * dot(x, xp) + spec.coef0);
    case KernelFamily::Cosine: {
      const double nx = dot(x, x);
      const double np = dot(xp, xp);
      if (nx == 0.0 || np == 0.0) {
        throw Error(ErrorKind::Domain, "cosine kernel is undefined for a zero vector");
      }
      return std::clamp(dot(x, xp) / std::sqrt(nx * np), -1.0, 1.0);
    }
  }
  return 0.0;
}

void check_finite_rows(const RowMatrix& X, const char* what) {
  if (!X.allFinite()) {
    throw Error(ErrorKind::Input, std::string(what) + " contains non-finite values");
  }
}

std::span<const double> row(const RowMatrix& X, Eigen::Index i) {
  return {X.data() + i * X.cols(), static_cast<std::size_t>(X.cols())};
}

bool is_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

std::string family_name(KernelFamily family) { return info(family).name; }

KernelFamily parse_family(std::string_view name) {
  for (const auto& entry : family_table()) {
    if (name == entry.name) return entry.family;
  }
  throw Error(ErrorKind::Config, "unknown kernel family '" + std::string(name) + "'", "kernel");
}

KernelSpec KernelSpec::with_family(std::string_view name) {
  KernelSpec spec;
  if (name == "matern_0.5" || name == "matern_1.5" || name == "matern_2.5") {
    spec.family = KernelFamily::Matern;
    spec.nu = std::stod(std::string(name.substr(7)));
    return spec;
  }
  spec.family = parse_family(name);
  return spec;
}

std::vector<std::string> KernelSpec::used_params() const { return info(family).params; }

void KernelSpec::set_param(std::string_view name, double value) {
  const auto used = used_params();
  if (std::find(used.begin(), used.end(), name) == used.end()) {
    throw Error(ErrorKind::Config,
                "parameter '" + std::string(name) + "' is not used by kernel " + family_name(family),
                std::string(name));
  }
  if (name == "gamma") {
    gamma = value;
  } else if (name == "length_scale") {
    length_scale = value;
  } else if (name == "period") {
    period = value;
  } else if (name == "coef0") {
    coef0 = value;
  } else if (name == "nu") {
    nu = value;
  } else if (name == "degree") {
    if (value != std::floor(value) || value < 1.0 || value > 64.0) {
      throw Error(ErrorKind::Config, "degree must be an integer >= 1", "degree");
    }
    degree = static_cast<int>(value);
  }
}

double KernelSpec::param(std::string_view name) const {
  if (name == "gamma") return gamma;
  if (name == "length_scale") return length_scale;
  if (name == "period") return period;
  if (name == "coef0") return coef0;
  if (name == "nu") return nu;
  if (name == "degree") return degree;
  throw Error(ErrorKind::Config, "unknown kernel parameter '" + std::string(name) + "'",
              std::string(name));
}

void KernelSpec::validate() const {
  const auto fail = [](const char* name, const char* why) {
    throw Error(ErrorKind::Config, std::string(name) + " " + why, name);
  };
  for (const auto& name : used_params()) {
    if (name == "gamma" && !is_positive(gamma)) fail("gamma", "must be > 0");
    if (name == "length_scale" && !is_positive(length_scale)) fail("length_scale", "must be > 0");
    if (name == "period" && !is_positive(period)) fail("period", "must be > 0");
    if (name == "degree" && degree < 1) fail("degree", "must be >= 1");
    if (name == "coef0" && !std::isfinite(coef0)) fail("coef0", "must be finite");
    if (name == "nu" && nu != 0.5 && nu != 1.5 && nu != 2.5) {
      fail("nu", "must be one of 0.5, 1.5, 2.5");
    }
  }
}

nlohmann::ordered_json KernelSpec::to_json() const {
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (const auto& name : used_params()) {
    if (name == "degree") {
      params[name] = degree;
    } else {
      params[name] = param(name);
    }
  }
  return {{"family", family_name(family)}, {"params", params}};
}

KernelSpec KernelSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family") || !j["family"].is_string()) {
    throw Error(ErrorKind::Config, "kernel spec must be an object with a string 'family'", "kernel");
  }
  KernelSpec spec = with_family(j["family"].get<std::string>());
  if (j.contains("params")) {
    const auto& params = j["params"];
    if (!params.is_object()) {
      throw Error(ErrorKind::Config, "kernel 'params' must be an object", "params");
    }
    for (const auto& [name, value] : params.items()) {
      if (!value.is_number()) {
        throw Error(ErrorKind::Config, "kernel parameter '" + name + "' must be a number", name);
      }
      spec.set_param(name, value.get<double>());
    }
  }
  for (const auto& [name, value] : j.items()) {
    if (name != "family" && name != "params") {
      throw Error(ErrorKind::Config, "unknown kernel spec key '" + name + "'", name);
    }
  }
  spec.validate();
  return spec;
}

bool operator==(const KernelSpec& a, const KernelSpec& b) {
  if (a.family != b.family) return false;
  for (const auto& name : a.used_params()) {
    if (a.param(name) != b.param(name)) return false;
  }
  return true;
}

const std::vector<KernelListing>& kernel_catalog() {
  static const std::vector<KernelListing> catalog = {
      {"gaussian_rbf", "gaussian_rbf", {"gamma"}, "exp(-gamma * ||x - x'||_2^2)"},
      {"laplacian_abs", "laplacian_abs", {"gamma"}, "exp(-gamma * ||x - x'||_1)"},
      {"matern_0.5", "matern", {"length_scale"}, "exp(-r / l)"},
      {"matern_1.5", "matern", {"length_scale"}, "(1 + sqrt(3) r / l) exp(-sqrt(3) r / l)"},
      {"matern_2.5", "matern", {"length_scale"},
       "(1 + sqrt(5) r / l + 5 r^2 / (3 l^2)) exp(-sqrt(5) r / l)"},
      {"linear", "linear", {}, "x . x'"},
      {"periodic", "periodic", {"length_scale", "period"},
       "exp(-2 sum_k sin^2(pi |x_k - x'_k| / period) / length_scale^2)"},
      {"polynomial", "polynomial", {"gamma", "degree", "coef0"}, "(gamma x . x' + coef0)^degree"},
      {"sigmoid", "sigmoid", {"gamma", "coef0"}, "tanh(gamma x . x' + coef0)"},
      {"cosine", "cosine", {}, "x . x' / (||x||_2 ||x'||_2)"},
  };
  return catalog;
}

bool is_psd_family(const KernelSpec& spec) {
  switch (spec.family) {
    case KernelFamily::Sigmoid:
      return false;
    case KernelFamily::Polynomial:
      return spec.coef0 >= 0.0;
    default:
      return true;
  }
}

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> xp) {
  if (x.size() != xp.size()) {
    throw Error(ErrorKind::Input, "kernel arguments differ in dimension (" +
                                      std::to_string(x.size()) + " vs " +
                                      std::to_string(xp.size()) + ")");
  }
  if (x.empty()) throw Error(ErrorKind::Input, "kernel arguments must have dimension >= 1");
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(xp.begin(), xp.end(), finite)) {
    throw Error(ErrorKind::Input, "kernel arguments contain non-finite values");
  }
  return eval_unchecked(spec, x, xp);
}

Matrix gram_unrepaired(const KernelSpec& spec, const RowMatrix& X) {
  if (X.rows() == 0) throw Error(ErrorKind::Input, "Gram matrix needs at least one row");
  if (X.cols() == 0) throw Error(ErrorKind::Input, "Gram matrix needs at least one column");
  check_finite_rows(X, "feature matrix");
  const Eigen::Index n = X.rows();
  Matrix K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = eval_unchecked(spec, row(X, i), row(X, j));
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

double repair_psd(Matrix& K) {
  const Eigen::Index n = K.rows();
  // A Cholesky factorization of K + tol*I exists exactly when the smallest
  // eigenvalue exceeds -tol, which settles the common PSD case cheaply.
  Matrix shifted = K;
  shifted.diagonal().array() += kPsdTolerance;
  if (Eigen::LLT<Matrix>(shifted).info() == Eigen::Success) return 0.0;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(K, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::Numerical, "eigenvalue computation failed during PSD repair");
  }
  const double lambda_min = eig.eigenvalues().minCoeff();
  if (lambda_min >= -kPsdTolerance) return 0.0;
  const double jitter = -lambda_min + kPsdTolerance;
  for (Eigen::Index i = 0; i < n; ++i) K(i, i) += jitter;
  return jitter;
}

GramMatrix gram_matrix(const KernelSpec& spec, const RowMatrix& X) {
  GramMatrix gram;
  gram.values = gram_unrepaired(spec, X);
  gram.jitter_applied = repair_psd(gram.values);
  return gram;
}

Matrix cross_gram(const KernelSpec& spec, const RowMatrix& X_train, const RowMatrix& X_new) {
  if (X_train.cols() != X_new.cols()) {
    throw Error(ErrorKind::Input, "feature dimension mismatch: expected " +
                                      std::to_string(X_train.cols()) + " columns, got " +
                                      std::to_string(X_new.cols()));
  }
  if (X_train.cols() == 0) throw Error(ErrorKind::Input, "feature matrices need at least one column");
  check_finite_rows(X_train, "training matrix");
  check_finite_rows(X_new, "input matrix");
  Matrix out(X_new.rows(), X_train.rows());
  for (Eigen::Index j = 0; j < X_new.rows(); ++j) {
    for (Eigen::Index i = 0; i < X_train.rows(); ++i) {
      out(j, i) = eval_unchecked(spec, row(X_new, j), row(X_train, i));
    }
  }
  return out;
}

}  // namespace kqr
