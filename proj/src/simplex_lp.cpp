#include "ivot/simplex_lp.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ivot {

namespace {

// One simplex phase on an explicit tableau.
//   T is (m+1) x (rhs_col+1): the last row holds reduced costs, column
//   `rhs_col` the basic solution / negated objective.  Only the first
//   `n_enter` columns are eligible to enter the basis.  `basis` maps rows to
//   basic columns.  Returns true when optimal, false when unbounded.
bool run_simplex(Eigen::MatrixXd& T, std::vector<long>& basis, long n_enter,
                 long rhs_col, double tol, long max_iterations,
                 bool& hit_limit) {
  const long m = static_cast<long>(basis.size());
  hit_limit = false;
  // Dantzig pricing (most negative reduced cost) for speed; after a run of
  // degenerate pivots switch to Bland's lowest-index rule, which guarantees
  // termination.
  long degenerate_streak = 0;
  const long bland_threshold = 4 * (m + n_enter);
  for (long iter = 0; iter < max_iterations; ++iter) {
    const bool bland = degenerate_streak > bland_threshold;
    long enter = -1;
    double most_negative = -tol;
    for (long j = 0; j < n_enter; ++j) {
      if (T(m, j) < most_negative) {
        enter = j;
        if (bland) break;
        most_negative = T(m, j);
      }
    }
    if (enter < 0) return true;  // optimal

    // Ratio test, breaking ties by the lowest basic-variable index (Bland).
    long leave = -1;
    double best_ratio = 0.0;
    for (long i = 0; i < m; ++i) {
      const double a = T(i, enter);
      if (a > tol) {
        const double ratio = T(i, rhs_col) / a;
        if (leave < 0 || ratio < best_ratio - tol ||
            (ratio < best_ratio + tol && basis[i] < basis[leave])) {
          leave = i;
          best_ratio = ratio;
        }
      }
    }
    if (leave < 0) return false;  // unbounded
    if (best_ratio <= tol)
      ++degenerate_streak;
    else
      degenerate_streak = 0;

    // Pivot on (leave, enter).
    T.row(leave) /= T(leave, enter);
    for (long i = 0; i <= m; ++i) {
      if (i == leave) continue;
      const double f = T(i, enter);
      if (f != 0.0) T.row(i) -= f * T.row(leave);
    }
    basis[leave] = enter;
  }
  hit_limit = true;
  return true;
}

}  // namespace

LpResult solve_lp_equality(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& c, double pivot_tol,
                           long max_iterations) {
  const long m = A.rows();
  const long n = A.cols();
  if (b.size() != m || c.size() != n) {
    throw std::invalid_argument("solve_lp_equality: dimension mismatch");
  }

  // Normalize to b >= 0 so the artificial basis is feasible.
  Eigen::MatrixXd Aw = A;
  Eigen::VectorXd bw = b;
  for (long i = 0; i < m; ++i) {
    if (bw(i) < 0.0) {
      Aw.row(i) *= -1.0;
      bw(i) *= -1.0;
    }
  }

  // Crash basis: a column whose only nonzero is positive and sits in row i
  // (e.g. a slack) can serve as row i's initial basic variable, so only the
  // remaining rows need phase-one artificials.  This keeps phase one cheap
  // when most rows are slack-padded inequalities.
  std::vector<long> crash(m, -1);
  {
    std::vector<long> nnz_count(n, 0), nnz_row(n, -1);
    for (long j = 0; j < n; ++j) {
      for (long i = 0; i < m; ++i) {
        if (Aw(i, j) != 0.0) {
          ++nnz_count[j];
          nnz_row[j] = i;
          if (nnz_count[j] > 1) break;
        }
      }
    }
    for (long j = 0; j < n; ++j) {
      if (nnz_count[j] != 1) continue;
      const long i = nnz_row[j];
      if (crash[i] >= 0 || Aw(i, j) <= 0.0) continue;
      crash[i] = j;
      bw(i) /= Aw(i, j);
      Aw.row(i) /= Aw(i, j);
    }
  }
  long n_art = 0;
  for (long i = 0; i < m; ++i)
    if (crash[i] < 0) ++n_art;

  // Phase-one tableau: [A | artificials | b] minimizing the artificial sum.
  const long ncols = n + n_art;
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, ncols + 1);
  T.block(0, 0, m, n) = Aw;
  T.block(0, ncols, m, 1) = bw;
  std::vector<long> basis(m);
  long art = 0;
  for (long i = 0; i < m; ++i) {
    if (crash[i] >= 0) {
      basis[i] = crash[i];
    } else {
      basis[i] = n + art;
      T(i, n + art) = 1.0;
      ++art;
      // Reduced costs of the phase-one objective: subtract artificial rows.
      T.row(m) -= T.row(i);
    }
  }
  // Artificial columns have zero reduced cost in their own objective.
  for (long j = n; j < ncols; ++j) T(m, j) = 0.0;

  LpResult result;
  bool hit_limit = false;
  run_simplex(T, basis, ncols, ncols, pivot_tol, max_iterations, hit_limit);
  if (hit_limit) {
    result.status = LpResult::Status::kIterLimit;
    return result;
  }
  const double phase1 = -T(m, ncols);
  if (phase1 > 1e-7) {
    result.status = LpResult::Status::kInfeasible;
    return result;
  }

  // Drive remaining artificials out of the basis; rows where no structural
  // pivot exists are redundant and are neutralized.
  std::vector<bool> active_row(m, true);
  for (long i = 0; i < m; ++i) {
    if (basis[i] < n) continue;
    long pivot_col = -1;
    for (long j = 0; j < n; ++j) {
      if (std::abs(T(i, j)) > pivot_tol) {
        pivot_col = j;
        break;
      }
    }
    if (pivot_col < 0) {
      active_row[i] = false;  // redundant constraint
      continue;
    }
    T.row(i) /= T(i, pivot_col);
    for (long r = 0; r <= m; ++r) {
      if (r == i) continue;
      const double f = T(r, pivot_col);
      if (f != 0.0) T.row(r) -= f * T.row(i);
    }
    basis[i] = pivot_col;
  }

  // Phase two: restore the true objective row over structural columns only.
  for (long j = 0; j < n; ++j) T(m, j) = c(j);
  for (long j = n; j < ncols; ++j) T(m, j) = 0.0;
  T(m, ncols) = 0.0;
  for (long i = 0; i < m; ++i) {
    if (!active_row[i] || basis[i] >= n) continue;
    const double cb = c(basis[i]);
    if (cb != 0.0) T.row(m) -= cb * T.row(i);
  }
  // Forbid artificial columns from re-entering.
  for (long j = n; j < ncols; ++j) T(m, j) = 1.0;

  // Deactivated rows must not participate in the ratio test: zero them.
  for (long i = 0; i < m; ++i) {
    if (!active_row[i]) T.row(i).setZero();
  }

  bool optimal =
      run_simplex(T, basis, n, ncols, pivot_tol, max_iterations, hit_limit);
  if (hit_limit) {
    result.status = LpResult::Status::kIterLimit;
    return result;
  }
  if (!optimal) {
    result.status = LpResult::Status::kUnbounded;
    return result;
  }

  result.status = LpResult::Status::kOptimal;
  result.x = Eigen::VectorXd::Zero(n);
  for (long i = 0; i < m; ++i) {
    if (active_row[i] && basis[i] < n) result.x(basis[i]) = T(i, ncols);
  }
  result.objective = c.dot(result.x);
  return result;
}

}  // namespace ivot
