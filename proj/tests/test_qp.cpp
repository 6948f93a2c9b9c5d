#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "core/error.hpp"
#include "core/qp.hpp"
#include "support.hpp"

using namespace testing_support;

namespace {

kqr::QpProblem make(const Mat& K, std::vector<double> y, double C, double q) {
  kqr::QpProblem p;
  p.K = K;
  p.y = Vec::Map(y.data(), static_cast<Eigen::Index>(y.size()));
  p.C = C;
  p.q = q;
  return p;
}

kqr::QpProblem random_problem(std::mt19937_64& rng, int n, double C, double q) {
  kqr::QpProblem p;
  p.K = random_spd(rng, n);
  p.y = random_vector(rng, n);
  p.C = C;
  p.q = q;
  return p;
}

}  // namespace

TEST_CASE("two-point instance") {
  const auto p = make(Mat::Identity(2, 2), {1, 0}, 1.0, 0.5);
  const auto sol = kqr::solve_dual(p);
  CHECK(sol.status == kqr::QpStatus::Converged);
  CHECK(sol.a[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(sol.a[1] == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(std::abs(sol.objective + 0.25) <= 1e-8);

  const auto oracle = kqr::oracle_solve(p, 1e-3);
  CHECK((oracle.a - Vec::Map(std::vector<double>{0.5, -0.5}.data(), 2)).cwiseAbs().maxCoeff() <=
        1e-3);
}

TEST_CASE("zero targets give zero coefficients") {
  std::mt19937_64 rng(1);
  auto p = random_problem(rng, 6, 2.0, 0.3);
  p.y.setZero();
  const auto sol = kqr::solve_dual(p);
  CHECK(sol.status == kqr::QpStatus::Converged);
  CHECK(sol.a.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::abs(sol.objective) <= 1e-12);

  auto small = make(Mat::Identity(2, 2), {0, 0}, 1.0, 0.5);
  CHECK(kqr::oracle_solve(small, 1e-2).a.cwiseAbs().maxCoeff() <= 1e-2);
}

TEST_CASE("three-point identity instance matches the oracles") {
  const auto p = make(Mat::Identity(3, 3), {2, 1, 0}, 1.0, 0.5);
  const auto sol = kqr::solve_dual(p);
  const auto grid = kqr::oracle_solve(p, 1e-4);
  CHECK((sol.a - grid.a).cwiseAbs().maxCoeff() <= 1e-4);
  CHECK((sol.a - exact_qp(p.K, p.y, p.C, p.q)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("asymmetric q agrees with the grid oracle") {
  const auto p = make(Mat::Identity(2, 2), {1, -1}, 1.0, 0.9);
  const auto sol = kqr::solve_dual(p);
  const double step = 1e-3;
  CHECK((sol.a - kqr::oracle_solve(p, step).a).cwiseAbs().maxCoeff() <= 2 * step);
}

TEST_CASE("matches the active-set oracle up to n = 6") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 60; ++t) {
    const int n = 2 + t % 5;
    const double C = std::pow(10.0, uniform(rng, -1, 1.5));
    const double q = uniform(rng, 0.05, 0.95);
    const auto p = random_problem(rng, n, C, q);
    const auto sol = kqr::solve_dual(p);
    REQUIRE(sol.status == kqr::QpStatus::Converged);
    const Vec exact = exact_qp(p.K, p.y, p.C, p.q);
    CHECK((sol.a - exact).cwiseAbs().maxCoeff() <= 1e-7 * std::max(1.0, C));
  }
}

TEST_CASE("feasibility and stopping invariants") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 40; ++t) {
    const int n = 2 + static_cast<int>(rng() % 40);
    const double C = std::pow(10.0, uniform(rng, -2, 2));
    const double q = uniform(rng, 0.01, 0.99);
    const auto p = random_problem(rng, n, C, q);
    const auto sol = kqr::solve_dual(p);
    CHECK(sol.status == kqr::QpStatus::Converged);
    CHECK(sol.a.minCoeff() >= p.lower() - 1e-8);
    CHECK(sol.a.maxCoeff() <= p.upper() + 1e-8);
    CHECK(std::abs(sol.a.sum()) <= 1e-8 * n * C);
    CHECK(sol.duality_gap <= 1e-8 * (1 + std::abs(sol.objective)));
    CHECK(sol.objective == doctest::Approx(qp_objective(p.K, p.y, sol.a)).epsilon(1e-12));
  }
}

TEST_CASE("duality gap never increases between iterations") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    const auto p = random_problem(rng, 3 + t, std::pow(10.0, uniform(rng, -1, 2)),
                                  uniform(rng, 0.05, 0.95));
    const auto sol = kqr::solve_dual(p);
    for (std::size_t k = 1; k < sol.gap_history.size(); ++k) {
      CHECK(sol.gap_history[k] <= sol.gap_history[k - 1]);
    }
  }
}

TEST_CASE("scaling y and C together scales the solution") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    auto p = random_problem(rng, 4 + t, uniform(rng, 0.2, 5.0), uniform(rng, 0.1, 0.9));
    const auto base = kqr::solve_dual(p);
    const double s = uniform(rng, 0.1, 20.0);
    p.y *= s;
    p.C *= s;
    const auto scaled = kqr::solve_dual(p);
    CHECK((scaled.a - s * base.a).cwiseAbs().maxCoeff() <= 1e-6 * s * std::max(1.0, base.a.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("deterministic") {
  std::mt19937_64 rng(6);
  const auto p = random_problem(rng, 25, 3.0, 0.7);
  const auto a = kqr::solve_dual(p);
  const auto b = kqr::solve_dual(p);
  CHECK(a.a == b.a);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("iteration limit returns a feasible iterate") {
  std::mt19937_64 rng(7);
  const auto p = random_problem(rng, 30, 5.0, 0.2);
  kqr::SolverSettings s;
  s.max_iterations = 2;
  const auto sol = kqr::solve_dual(p, s);
  CHECK(sol.status == kqr::QpStatus::MaxIter);
  CHECK(sol.iterations == 2);
  CHECK(sol.a.minCoeff() >= p.lower());
  CHECK(sol.a.maxCoeff() <= p.upper());
  CHECK(std::abs(sol.a.sum()) <= 1e-8 * 30 * 5.0);
}

TEST_CASE("input validation") {
  auto p = make(Mat::Identity(2, 2), {1, 0}, 1.0, 0.5);
  p.K(0, 1) = 0.3;
  try {
    kqr::solve_dual(p);
    FAIL("expected an input error");
  } catch (const kqr::Error& e) {
    CHECK(e.kind() == kqr::ErrorKind::Input);
  }
  auto bad_q = make(Mat::Identity(2, 2), {1, 0}, 1.0, 1.0);
  CHECK_THROWS_AS(kqr::solve_dual(bad_q), kqr::Error);
  auto bad_C = make(Mat::Identity(2, 2), {1, 0}, 0.0, 0.5);
  CHECK_THROWS_AS(kqr::solve_dual(bad_C), kqr::Error);
  auto tiny = make(Mat::Identity(1, 1), {1}, 1.0, 0.5);
  CHECK_THROWS_AS(kqr::solve_dual(tiny), kqr::Error);

  kqr::SolverSettings s;
  s.gap_tolerance = 0;
  CHECK_THROWS_AS(kqr::solve_dual(make(Mat::Identity(2, 2), {1, 0}, 1.0, 0.5), s), kqr::Error);

  auto big = make(Mat::Identity(5, 5), {1, 0, 0, 0, 0}, 1.0, 0.5);
  try {
    kqr::oracle_solve(big, 0.1);
    FAIL("expected an input error");
  } catch (const kqr::Error& e) {
    CHECK(e.kind() == kqr::ErrorKind::Input);
  }
}

TEST_CASE("KKT residuals") {
  auto zero = make(Mat::Identity(3, 3), {0, 0, 0}, 1.0, 0.5);
  const auto r0 = kqr::kkt_residuals(zero, Vec::Zero(3));
  CHECK(r0.stationarity <= 1e-12);
  CHECK(r0.primal_feas <= 1e-12);
  CHECK(r0.comp_slack <= 1e-12);

  auto p = make(Mat::Identity(2, 2), {1, 0}, 1.0, 0.5);
  Vec outside(2);
  outside << 0.6, -0.6;
  CHECK(kqr::kkt_residuals(p, outside).primal_feas >= 0.1 - 1e-12);

  // A feasible but suboptimal point is flagged.
  Vec interior(2);
  interior << 0.1, -0.1;
  const auto ri = kqr::kkt_residuals(p, interior);
  CHECK(std::max({ri.stationarity, ri.comp_slack}) > 1e-3);

  std::mt19937_64 rng(8);
  for (int t = 0; t < 30; ++t) {
    const auto rp = random_problem(rng, 2 + t, uniform(rng, 0.1, 10), uniform(rng, 0.1, 0.9));
    const auto r = kqr::kkt_residuals(rp, kqr::solve_dual(rp).a);
    CHECK(std::max({r.stationarity, r.primal_feas, r.comp_slack}) <= 1e-6);
  }
  CHECK_THROWS_AS(kqr::kkt_residuals(p, Vec::Zero(3)), kqr::Error);
}
