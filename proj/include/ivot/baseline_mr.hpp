#ifndef IVOT_BASELINE_MR_HPP_
#define IVOT_BASELINE_MR_HPP_

#include <vector>

#include "ivot/roy_bounds.hpp"
#include "ivot/step_weight.hpp"

namespace ivot {

// Clamped B-spline sieve on [0, 1] used to parameterize the marginal
// treatment response functions m_w(u).  The basis is the standard
// Cox-de Boor family of the given degree with the given interior knots
// (maximal smoothness); it spans all polynomials of degree <= `degree`.
class MtrSieve {
 public:
  // degree >= 0; interior knots strictly increasing inside (0, 1).
  // The default knot set is the nine-point uniform grid {0.1, ..., 0.9}.
  explicit MtrSieve(int degree,
                    std::vector<double> interior_knots = default_knots());

  static std::vector<double> default_knots();

  int degree() const { return degree_; }
  // Number of basis functions: degree + 1 + #interior knots.
  int size() const;
  // B_j(u) for u in [0, 1]; the rightmost basis attains 1 at u = 1.
  double basis(int j, double u) const;
  // Exact integral of B_j over [a, b] (Gauss-Legendre per knot span).
  double basis_integral(int j, double a, double b) const;
  // Exact integral of B_j(u) * weight(u) over [0, 1].
  double weighted_integral(int j, const StepWeight& weight) const;

  // Distinct knot abscissae including 0 and 1 (span boundaries).
  const std::vector<double>& span_points() const { return spans_; }

 private:
  int degree_ = 0;
  std::vector<double> knots_;  // full clamped knot vector
  std::vector<double> spans_;  // unique span boundaries
};

// Conditional outcome means by baseline propensity level: each level k
// carries p_k together with E[Y | W=1, Z in S_k] and E[Y | W=0, Z in S_k].
struct MrMoments {
  struct Level {
    double p = 0.0;
    double mean_y1 = 0.0;  // ignored when p == 0
    double mean_y0 = 0.0;  // ignored when p == 1
  };
  std::vector<Level> levels;
};

// Moment-relaxation bounds on the policy effect integral
//     int (m1(u) - m0(u)) weight(u) du
// over sieve pairs (m1, m0) satisfying, for every level k,
//     (1/p_k)      int_0^{p_k} m1 = mean_y1_k,
//     (1/(1-p_k))  int_{p_k}^1 m0 = mean_y0_k,
// and y_min <= m_w(u) <= y_max checked on a uniform grid of
// `check_grid` points.  Solved as a pair of exact simplex LPs with
// lazily generated pointwise-bound rows.  Throws std::runtime_error
// when the moment system is infeasible within the sieve
// (model misspecification).
BoundPair solve_mr_bounds(const MrMoments& moments, const StepWeight& weight,
                          const MtrSieve& sieve, double y_min, double y_max,
                          int check_grid = 512);

}  // namespace ivot

#endif  // IVOT_BASELINE_MR_HPP_
