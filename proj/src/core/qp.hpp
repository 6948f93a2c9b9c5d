#pragma once

#include <vector>

#include "core/types.hpp"

namespace kqr {

struct SolverSettings {
  int max_iterations = 100;
  double gap_tolerance = 1e-8;
  double feasibility_tolerance = 1e-8;

  void validate() const;
};

// Dual of the kernel quantile regression problem:
//
//   minimize    1/2 a'Ka - a'y
//   subject to  C(q-1) <= a_i <= Cq,   sum_i a_i = 0
//
// The feasible set always contains a = 0.
struct QpProblem {
  Matrix K;
  Vector y;
  double C = 1.0;
  double q = 0.5;

  Eigen::Index size() const { return y.size(); }
  double lower() const { return C * (q - 1.0); }
  double upper() const { return C * q; }

  // Throws Error{Input} for shape/symmetry/finiteness problems and
  // Error{Config} for C or q out of range.
  void validate() const;
};

double dual_objective(const QpProblem& problem, const Vector& a);

enum class QpStatus { Converged, MaxIter, NumericalFailure };

const char* status_name(QpStatus status);

struct QpSolution {
  Vector a;
  double objective = 0.0;
  int iterations = 0;
  double duality_gap = 0.0;
  QpStatus status = QpStatus::NumericalFailure;
  // Multiplier of the equality constraint at the returned iterate.
  double equality_multiplier = 0.0;
  // Complementarity gap observed at the start of every iteration.
  std::vector<double> gap_history;
};

// Primal-dual interior point (Mehrotra predictor-corrector) started from
// a = 0 with dual-feasible bound multipliers, followed by an active-set
// polish. Deterministic for fixed inputs.
QpSolution solve_dual(const QpProblem& problem, const SolverSettings& settings = {});

// Exhaustive grid search, for tests only. The first n-1 coordinates range
// over a grid of the given spacing anchored at the lower bound; the last is
// fixed by the equality constraint and the point is rejected when it leaves
// the box. The grid is scanned coarse-to-fine so n = 4 stays tractable.
QpSolution oracle_solve(const QpProblem& problem, double grid_step);

struct KktReport {
  double stationarity = 0.0;
  double primal_feas = 0.0;
  double comp_slack = 0.0;
  // Least-squares estimate of the equality multiplier used for the report.
  double multiplier = 0.0;
};

// Max-norm KKT residuals of `a` with multipliers fitted by least squares.
// Each coordinate is attributed to its nearer bound; the bound multiplier is
// the correctly-signed part of the reduced gradient, stationarity is the
// wrongly-signed remainder and complementary slackness is multiplier times
// distance to that bound.
KktReport kkt_residuals(const QpProblem& problem, const Vector& a);

}  // namespace kqr
