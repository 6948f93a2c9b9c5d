#include "core/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "core/error.hpp"

namespace kqr {
namespace {

constexpr double kStepFraction = 0.99;
constexpr double kInitialRegularization = 1e-10;
constexpr int kRegularizationRetries = 3;
constexpr int kMaxBacktracks = 40;

struct Iterate {
  Vector a;
  Vector z_lower;
  Vector z_upper;
  double nu = 0.0;
};

struct Direction {
  Vector da;
  Vector dz_lower;
  Vector dz_upper;
  double dnu = 0.0;
};

// Largest step in [0, 1] keeping v + step * dv >= 0.
double max_step(const Vector& v, const Vector& dv) {
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) step = std::min(step, -v[i] / dv[i]);
  }
  return step;
}

double complementarity(const Vector& s_lower, const Vector& z_lower, const Vector& s_upper,
                       const Vector& z_upper) {
  return s_lower.dot(z_lower) + s_upper.dot(z_upper);
}

// Factorization of H = K + D with the equality constraint eliminated through
// the Schur complement 1'H^{-1}1.
class ReducedKkt {
 public:
  bool factor(const Matrix& K, const Vector& diag) {
    const Eigen::Index n = K.rows();
    double reg = 0.0;
    for (int attempt = 0; attempt <= kRegularizationRetries; ++attempt) {
      Matrix H = K;
      H.diagonal() += diag;
      if (reg > 0.0) H.diagonal().array() += reg;
      llt_.compute(H);
      if (llt_.info() == Eigen::Success) {
        ones_solve_ = llt_.solve(Vector::Ones(n));
        schur_ = ones_solve_.sum();
        if (std::isfinite(schur_) && schur_ > 0.0) return true;
      }
      reg = reg == 0.0 ? kInitialRegularization : reg * 10.0;
    }
    return false;
  }

  // Solves (K + D) da - dnu 1 = rhs, 1'da = -r_primal.
  std::pair<Vector, double> solve(const Vector& rhs, double r_primal) const {
    Vector x = llt_.solve(rhs);
    const double dnu = (-r_primal - x.sum()) / schur_;
    x += dnu * ones_solve_;
    return {std::move(x), dnu};
  }

 private:
  Eigen::LLT<Matrix> llt_;
  Vector ones_solve_;
  double schur_ = 0.0;
};

struct Polished {
  Vector a;
  double nu = 0.0;
};

// Active-set refinement of a converged iterate. Coordinates whose slack is
// below their multiplier are fixed at that bound; the others solve the
// equality-constrained problem on that face exactly. Rejected unless the
// result is feasible with correctly signed bound multipliers, so degenerate
// bounds (slack and multiplier both vanishing) land exactly on the optimum.
std::optional<Polished> polish(const QpProblem& problem, const Iterate& it, const Vector& s_lower,
                               const Vector& s_upper, double objective, double dual_tol) {
  const Eigen::Index n = problem.size();
  const double lo = problem.lower();
  const double hi = problem.upper();
  const double box_tol = 1e-9 * problem.C;

  enum State { Lower, Upper, Free };
  std::vector<State> state(static_cast<std::size_t>(n), Free);
  std::vector<Eigen::Index> free_idx;
  Vector a = it.a;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool at_lower = s_lower[i] < it.z_lower[i];
    const bool at_upper = s_upper[i] < it.z_upper[i];
    auto& st = state[static_cast<std::size_t>(i)];
    if (at_lower && (!at_upper || s_lower[i] <= s_upper[i])) {
      st = Lower;
      a[i] = lo;
    } else if (at_upper) {
      st = Upper;
      a[i] = hi;
    } else {
      free_idx.push_back(i);
    }
  }

  const auto f = static_cast<Eigen::Index>(free_idx.size());
  double nu = 0.0;
  if (f > 0) {
    // [K_FF  1] [ a_F]   [y_F - K_FB a_B]
    // [1'    0] [-nu ] = [-sum a_B      ]
    Matrix A = Matrix::Zero(f + 1, f + 1);
    Vector rhs = Vector::Zero(f + 1);
    Vector a_bound = a;
    for (Eigen::Index r = 0; r < f; ++r) a_bound[free_idx[static_cast<std::size_t>(r)]] = 0.0;
    const Vector K_bound = problem.K * a_bound;
    for (Eigen::Index r = 0; r < f; ++r) {
      const Eigen::Index i = free_idx[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < f; ++c) A(r, c) = problem.K(i, free_idx[static_cast<std::size_t>(c)]);
      A(r, f) = 1.0;
      A(f, r) = 1.0;
      rhs[r] = problem.y[i] - K_bound[i];
    }
    rhs[f] = -a_bound.sum();
    // Solved as a correction to the interior-point iterate, which keeps an
    // already exact iterate exact.
    Vector start(f + 1);
    for (Eigen::Index r = 0; r < f; ++r) start[r] = it.a[free_idx[static_cast<std::size_t>(r)]];
    start[f] = -it.nu;
    const Vector sol = start + A.partialPivLu().solve(rhs - A * start);
    if (!sol.allFinite()) return std::nullopt;
    for (Eigen::Index r = 0; r < f; ++r) {
      const double v = sol[r];
      if (v < lo - box_tol || v > hi + box_tol) return std::nullopt;
      a[free_idx[static_cast<std::size_t>(r)]] = std::clamp(v, lo, hi);
    }
    nu = -sol[f];
    if ((A.topRows(f) * sol - rhs.head(f)).cwiseAbs().maxCoeff() > dual_tol) return std::nullopt;
  } else {
    // A vertex: any nu between the bound gradients will do.
    const Vector g = problem.K * a - problem.y;
    double nu_max = std::numeric_limits<double>::infinity();
    double nu_min = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[static_cast<std::size_t>(i)] == Lower) nu_max = std::min(nu_max, g[i]);
      if (state[static_cast<std::size_t>(i)] == Upper) nu_min = std::max(nu_min, g[i]);
    }
    if (nu_min > nu_max + dual_tol) return std::nullopt;
    nu = 0.5 * (std::max(nu_min, -1e300) + std::min(nu_max, 1e300));
  }

  if (std::abs(a.sum()) > 1e-12 * static_cast<double>(n) * problem.C) return std::nullopt;
  const Vector g = problem.K * a - problem.y - Vector::Constant(n, nu);
  for (Eigen::Index i = 0; i < n; ++i) {
    const State st = state[static_cast<std::size_t>(i)];
    if (st == Lower && g[i] < -dual_tol) return std::nullopt;
    if (st == Upper && g[i] > dual_tol) return std::nullopt;
  }
  if (dual_objective(problem, a) > objective + 1e-12 * (1.0 + std::abs(objective))) {
    return std::nullopt;
  }
  return Polished{std::move(a), nu};
}

}  // namespace

void SolverSettings::validate() const {
  if (max_iterations < 1) {
    throw Error(ErrorKind::Config, "max_iterations must be >= 1", "max-iter");
  }
  if (!(gap_tolerance > 0.0) || !std::isfinite(gap_tolerance)) {
    throw Error(ErrorKind::Config, "gap_tolerance must be > 0", "gap-tol");
  }
  if (!(feasibility_tolerance > 0.0) || !std::isfinite(feasibility_tolerance)) {
    throw Error(ErrorKind::Config, "feasibility_tolerance must be > 0", "feas-tol");
  }
}

void QpProblem::validate() const {
  const Eigen::Index n = y.size();
  if (n < 2) throw Error(ErrorKind::Input, "QP needs at least 2 observations");
  if (K.rows() != n || K.cols() != n) {
    throw Error(ErrorKind::Input, "kernel matrix must be " + std::to_string(n) + "x" +
                                      std::to_string(n));
  }
  if (!K.allFinite() || !y.allFinite()) {
    throw Error(ErrorKind::Input, "QP data contains non-finite values");
  }
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::Config, "quantile must lie in (0, 1)", "q");
  if (!(C > 0.0) || !std::isfinite(C)) throw Error(ErrorKind::Config, "C must be > 0", "C");
  const double scale = 1.0 + K.cwiseAbs().maxCoeff();
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorKind::Input, "kernel matrix is not symmetric");
  }
}

double dual_objective(const QpProblem& problem, const Vector& a) {
  return 0.5 * a.dot(problem.K * a) - a.dot(problem.y);
}

const char* status_name(QpStatus status) {
  switch (status) {
    case QpStatus::Converged: return "converged";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

QpSolution solve_dual(const QpProblem& problem, const SolverSettings& settings) {
  problem.validate();
  settings.validate();

  const Eigen::Index n = problem.size();
  const Matrix& K = problem.K;
  const Vector& y = problem.y;
  const double lo = problem.lower();
  const double hi = problem.upper();
  const double two_n = 2.0 * static_cast<double>(n);
  const double dual_scale = 1.0 + y.cwiseAbs().maxCoeff();
  const double primal_scale = static_cast<double>(n) * problem.C;

  // Dual-feasible start at a = 0: with w = y + nu the stationarity residual
  // vanishes when z_upper - z_lower = w. Centering nu on the mean of y makes
  // the iterates invariant to a shift of y. Feasible Newton steps stay
  // feasible, so the complementarity gap is the true duality gap.
  Iterate it;
  it.a = Vector::Zero(n);
  it.nu = -y.mean();
  const Vector w = y.array() + it.nu;
  const double base = std::max(1.0, w.cwiseAbs().mean());
  it.z_lower = (base + (-w).array().max(0.0)).matrix();
  it.z_upper = (base + w.array().max(0.0)).matrix();

  QpSolution sol;
  sol.status = QpStatus::MaxIter;
  ReducedKkt kkt;

  for (int iter = 0;; ++iter) {
    const Vector s_lower = it.a.array() - lo;
    const Vector s_upper = hi - it.a.array();
    const Vector Ka = K * it.a;
    const Vector r_dual = Ka - y - Vector::Constant(n, it.nu) - it.z_lower + it.z_upper;
    const double r_primal = it.a.sum();
    const double gap = complementarity(s_lower, it.z_lower, s_upper, it.z_upper);
    const double objective = 0.5 * it.a.dot(Ka) - it.a.dot(y);

    sol.a = it.a;
    sol.objective = objective;
    sol.iterations = iter;
    sol.duality_gap = gap;
    sol.equality_multiplier = it.nu;
    sol.gap_history.push_back(gap);

    const bool gap_ok = gap <= settings.gap_tolerance * (1.0 + std::abs(objective));
    const bool dual_ok = r_dual.cwiseAbs().maxCoeff() <= settings.feasibility_tolerance * dual_scale;
    const bool primal_ok = std::abs(r_primal) <= settings.feasibility_tolerance * primal_scale;
    if (gap_ok && dual_ok && primal_ok) {
      sol.status = QpStatus::Converged;
      if (auto p = polish(problem, it, s_lower, s_upper, objective,
                          settings.feasibility_tolerance * dual_scale)) {
        sol.a = std::move(p->a);
        sol.objective = dual_objective(problem, sol.a);
        sol.equality_multiplier = p->nu;
      }
      return sol;
    }
    if (iter >= settings.max_iterations) {
      sol.status = QpStatus::MaxIter;
      return sol;
    }

    const Vector ratio_lower = it.z_lower.cwiseQuotient(s_lower);
    const Vector ratio_upper = it.z_upper.cwiseQuotient(s_upper);
    if (!kkt.factor(K, ratio_lower + ratio_upper)) {
      sol.status = QpStatus::NumericalFailure;
      return sol;
    }

    const auto direction = [&](const Vector& rc_lower, const Vector& rc_upper) {
      const Vector rhs =
          -r_dual + rc_lower.cwiseQuotient(s_lower) - rc_upper.cwiseQuotient(s_upper);
      auto [da, dnu] = kkt.solve(rhs, r_primal);
      Direction d;
      d.dz_lower = (rc_lower - it.z_lower.cwiseProduct(da)).cwiseQuotient(s_lower);
      d.dz_upper = (rc_upper + it.z_upper.cwiseProduct(da)).cwiseQuotient(s_upper);
      d.da = std::move(da);
      d.dnu = dnu;
      return d;
    };
    const auto step_to_boundary = [&](const Direction& d) {
      return std::min({max_step(s_lower, d.da), max_step(s_upper, -d.da),
                       max_step(it.z_lower, d.dz_lower), max_step(it.z_upper, d.dz_upper)});
    };
    const auto gap_after = [&](const Direction& d, double step) {
      return complementarity(s_lower + step * d.da, it.z_lower + step * d.dz_lower,
                             s_upper - step * d.da, it.z_upper + step * d.dz_upper);
    };

    // Predictor.
    const Vector sz_lower = s_lower.cwiseProduct(it.z_lower);
    const Vector sz_upper = s_upper.cwiseProduct(it.z_upper);
    const Direction affine = direction(-sz_lower, -sz_upper);
    const double step_affine = step_to_boundary(affine);
    const double mu = gap / two_n;
    const double mu_affine = gap_after(affine, step_affine) / two_n;
    const double sigma = std::pow(std::clamp(mu_affine / mu, 0.0, 1.0), 3);

    // Corrector with second-order term.
    const Vector rc_lower = (Vector::Constant(n, sigma * mu) - sz_lower -
                             affine.da.cwiseProduct(affine.dz_lower));
    const Vector rc_upper = (Vector::Constant(n, sigma * mu) - sz_upper +
                             affine.da.cwiseProduct(affine.dz_upper));
    const Direction d = direction(rc_lower, rc_upper);
    if (!d.da.allFinite() || !d.dz_lower.allFinite() || !d.dz_upper.allFinite() ||
        !std::isfinite(d.dnu)) {
      sol.status = QpStatus::NumericalFailure;
      return sol;
    }

    double step = std::min(1.0, kStepFraction * step_to_boundary(d));
    // Keep the complementarity gap non-increasing along the iterate sequence.
    for (int k = 0; k < kMaxBacktracks && gap_after(d, step) > gap; ++k) step *= 0.5;

    it.a += step * d.da;
    it.z_lower += step * d.dz_lower;
    it.z_upper += step * d.dz_upper;
    it.nu += step * d.dnu;
  }
}

QpSolution oracle_solve(const QpProblem& problem, double grid_step) {
  problem.validate();
  const Eigen::Index n = problem.size();
  if (n > 4) throw Error(ErrorKind::Input, "oracle_solve supports n <= 4");
  if (!(grid_step > 0.0)) throw Error(ErrorKind::Config, "grid_step must be > 0", "grid_step");

  const double lo = problem.lower();
  const double hi = problem.upper();
  const double slack = 1e-12 * (1.0 + problem.C);
  const auto free_dims = static_cast<int>(n - 1);
  const auto last_unit = static_cast<long long>(std::floor((hi - lo) / grid_step + 1e-9));

  // Grid coordinates are integers k with a_i = lo + k * grid_step.
  std::vector<long long> center(static_cast<std::size_t>(free_dims), 0);
  long long spacing = std::max<long long>(1, last_unit / 48);
  long long radius = last_unit;  // first pass covers the whole box

  std::optional<Vector> best;
  double best_value = std::numeric_limits<double>::infinity();
  Vector candidate(n);

  for (;;) {
    std::vector<long long> first(static_cast<std::size_t>(free_dims));
    std::vector<long long> last(static_cast<std::size_t>(free_dims));
    for (int k = 0; k < free_dims; ++k) {
      const auto idx = static_cast<std::size_t>(k);
      first[idx] = std::max<long long>(0, center[idx] - radius);
      last[idx] = std::min<long long>(last_unit, center[idx] + radius);
      // Align to the current level's sub-lattice.
      first[idx] -= first[idx] % spacing;
    }
    std::vector<long long> index = first;
    bool done = false;
    while (!done) {
      double sum = 0.0;
      for (int k = 0; k < free_dims; ++k) {
        candidate[k] = lo + static_cast<double>(index[static_cast<std::size_t>(k)]) * grid_step;
        sum += candidate[k];
      }
      candidate[n - 1] = -sum;
      if (candidate[n - 1] >= lo - slack && candidate[n - 1] <= hi + slack) {
        const double value = dual_objective(problem, candidate);
        if (value < best_value) {
          best_value = value;
          best = candidate;
        }
      }
      int k = 0;
      for (; k < free_dims; ++k) {
        auto& v = index[static_cast<std::size_t>(k)];
        v += spacing;
        if (v <= last[static_cast<std::size_t>(k)]) break;
        v = first[static_cast<std::size_t>(k)];
      }
      done = k == free_dims;
    }
    if (spacing == 1) break;
    if (!best) {
      // Coarse lattice missed the feasible slab; rescan the whole box finer.
      spacing = std::max<long long>(1, spacing / 4);
      continue;
    }
    for (int k = 0; k < free_dims; ++k) {
      center[static_cast<std::size_t>(k)] =
          std::llround(((*best)[k] - lo) / grid_step);
    }
    radius = 3 * spacing;
    spacing = std::max<long long>(1, spacing / 4);
  }

  QpSolution sol;
  if (!best) {
    sol.a = Vector::Zero(n);
    sol.status = QpStatus::NumericalFailure;
    return sol;
  }
  sol.a = *best;
  sol.objective = best_value;
  sol.status = QpStatus::Converged;
  return sol;
}

KktReport kkt_residuals(const QpProblem& problem, const Vector& a) {
  const Eigen::Index n = problem.size();
  if (a.size() != n) {
    throw Error(ErrorKind::Input, "coefficient vector has length " + std::to_string(a.size()) +
                                      ", expected " + std::to_string(n));
  }
  const double lo = problem.lower();
  const double hi = problem.upper();
  const Vector g = problem.K * a - problem.y;

  KktReport report;
  for (Eigen::Index i = 0; i < n; ++i) {
    report.primal_feas = std::max({report.primal_feas, lo - a[i], a[i] - hi});
  }
  report.primal_feas = std::max(report.primal_feas, std::abs(a.sum()));

  std::vector<bool> near_lower(static_cast<std::size_t>(n));
  Vector dist(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool lower = (a[i] - lo) <= (hi - a[i]);
    near_lower[static_cast<std::size_t>(i)] = lower;
    dist[i] = std::max(0.0, lower ? a[i] - lo : hi - a[i]);
  }

  // Derivative in nu of sum(stationarity^2 + comp_slack^2); nondecreasing,
  // so the least-squares multiplier is found by bisection.
  const auto slope = [&](double nu) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = g[i] - nu;
      const bool lower = near_lower[static_cast<std::size_t>(i)];
      const bool wrong_sign = lower ? r < 0.0 : r > 0.0;
      const double weight = wrong_sign ? 1.0 : dist[i] * dist[i];
      acc += -2.0 * r * weight;
    }
    return acc;
  };
  double left = g.minCoeff();
  double right = g.maxCoeff();
  for (int k = 0; k < 200 && right > left; ++k) {
    const double mid = 0.5 * (left + right);
    if (mid <= left || mid >= right) break;
    if (slope(mid) > 0.0) {
      right = mid;
    } else {
      left = mid;
    }
  }
  const double nu = 0.5 * (left + right);
  report.multiplier = nu;

  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = g[i] - nu;
    const bool lower = near_lower[static_cast<std::size_t>(i)];
    const double multiplier = lower ? std::max(0.0, r) : std::max(0.0, -r);
    const double wrong = lower ? std::max(0.0, -r) : std::max(0.0, r);
    report.stationarity = std::max(report.stationarity, wrong);
    report.comp_slack = std::max(report.comp_slack, multiplier * dist[i]);
  }
  return report;
}

}  // namespace kqr
