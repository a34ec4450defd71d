#ifndef IVOT_SIMPLEX_LP_HPP_
#define IVOT_SIMPLEX_LP_HPP_

#include <Eigen/Dense>

namespace ivot {

// Outcome of a linear program solve.
struct LpResult {
  enum class Status { kOptimal, kInfeasible, kUnbounded, kIterLimit };
  Status status = Status::kIterLimit;
  double objective = 0.0;
  Eigen::VectorXd x;  // primal solution when status == kOptimal
};

// Solves the standard-form linear program
//     min  c'x   s.t.  A x = b,  x >= 0
// with a dense two-phase tableau simplex using Bland's anti-cycling rule.
// Rows of A may be linearly dependent; redundant rows are detected in
// phase one and dropped.  `pivot_tol` is the reduced-cost/pivot threshold.
LpResult solve_lp_equality(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& c, double pivot_tol = 1e-9,
                           long max_iterations = 200000);

}  // namespace ivot

#endif  // IVOT_SIMPLEX_LP_HPP_
