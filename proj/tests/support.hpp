#pragma once

// Shared helpers for the test binaries. Everything here is written
// independently of the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace testing_support {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double laplace(std::mt19937_64& rng, double scale) {
  const double u = uniform(rng, -0.5, 0.5);
  return -scale * (u < 0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(u));
}

inline RowMat random_matrix(std::mt19937_64& rng, int rows, int cols, double lo = -1.0,
                            double hi = 1.0) {
  RowMat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = uniform(rng, lo, hi);
  }
  return m;
}

inline Vec random_vector(std::mt19937_64& rng, int n, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = uniform(rng, lo, hi);
  return v;
}

// K = M'M + ridge I with M drawn entrywise from U[-0.5, 0.5].
inline Mat random_spd(std::mt19937_64& rng, int n, double ridge = 0.1) {
  const Mat M = random_matrix(rng, n, n, -0.5, 0.5);
  Mat K = M.transpose() * M;
  K.diagonal().array() += ridge;
  return 0.5 * (K + K.transpose());
}

inline double min_eigenvalue(const Mat& K) {
  Eigen::SelfAdjointEigenSolver<Mat> es(K, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double qp_objective(const Mat& K, const Vec& y, const Vec& a) {
  return 0.5 * a.dot(K * a) - a.dot(y);
}

// Exact minimizer of 1/2 a'Ka - a'y over C(q-1) <= a <= Cq, sum a = 0 by
// enumerating every assignment of coordinates to {lower, upper, free}. The
// optimum lies in the relative interior of some face, where it solves the
// equality-constrained problem on that face; every other feasible face
// solution has a larger objective. Practical for n <= 8.
inline Vec exact_qp(const Mat& K, const Vec& y, double C, double q) {
  const int n = static_cast<int>(y.size());
  const double lo = C * (q - 1.0), hi = C * q;
  const double tol = 1e-12 * std::max(1.0, C);
  Vec best;
  double best_obj = std::numeric_limits<double>::infinity();
  int patterns = 1;
  for (int i = 0; i < n; ++i) patterns *= 3;
  for (int p = 0; p < patterns; ++p) {
    std::vector<int> state(n);
    int code = p;
    for (int i = 0; i < n; ++i) {
      state[i] = code % 3;  // 0 lower, 1 upper, 2 free
      code /= 3;
    }
    Vec a = Vec::Zero(n);
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      if (state[i] == 0) a[i] = lo;
      else if (state[i] == 1) a[i] = hi;
      else free_idx.push_back(i);
    }
    const int f = static_cast<int>(free_idx.size());
    if (f == 0) {
      if (std::abs(a.sum()) > tol) continue;
    } else {
      // [K_FF  -1] [a_F]   [y_F - K_FB a_B]
      // [1'     0] [nu ] = [-sum a_B      ]
      Mat A = Mat::Zero(f + 1, f + 1);
      Vec rhs = Vec::Zero(f + 1);
      for (int r = 0; r < f; ++r) {
        const int i = free_idx[r];
        for (int c = 0; c < f; ++c) A(r, c) = K(i, free_idx[c]);
        A(r, f) = -1.0;
        A(f, r) = 1.0;
        double fixed = 0.0;
        for (int j = 0; j < n; ++j) {
          if (state[j] != 2) fixed += K(i, j) * a[j];
        }
        rhs[r] = y[i] - fixed;
      }
      double fixed_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (state[j] != 2) fixed_sum += a[j];
      }
      rhs[f] = -fixed_sum;
      Eigen::FullPivLU<Mat> lu(A);
      if (!lu.isInvertible()) continue;
      const Vec sol = lu.solve(rhs);
      bool inside = true;
      for (int r = 0; r < f; ++r) {
        const double v = sol[r];
        if (v < lo - tol || v > hi + tol) inside = false;
        a[free_idx[r]] = std::clamp(v, lo, hi);
      }
      if (!inside) continue;
    }
    const double obj = qp_objective(K, y, a);
    if (obj < best_obj) {
      best_obj = obj;
      best = a;
    }
  }
  return best;
}

// Check loss summed over a sample, written out directly.
inline double pinball_sum(const std::vector<double>& v, double q, double x) {
  double s = 0.0;
  for (double vi : v) {
    const double u = vi - x;
    s += u >= 0 ? q * u : (q - 1.0) * u;
  }
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace testing_support
