#ifndef IVOT_OT1D_HPP_
#define IVOT_OT1D_HPP_

#include "ivot/measures.hpp"

namespace ivot {

// Which extreme coupling of two one-dimensional marginals to evaluate.
enum class CouplingMode {
  kComonotone,       // maximizes E[X * Y']: pairs quantiles Q_mu(t), Q_nu(t)
  kCountermonotone,  // minimizes E[X * Y']: pairs Q_mu(t), Q_nu(1 - t)
};

// Exact value of E[X * Y'] under the extreme coupling of `mu` and `nu`
// (both treated as probability measures; masses are normalized away):
//   comonotone:       integral_0^1 Q_mu(t) Q_nu(t)     dt
//   countermonotone:  integral_0^1 Q_mu(t) Q_nu(1 - t) dt
// Evaluated piecewise on the merged cumulative-weight grids (no quadrature).
double ot_product_extreme(const EmpiricalMeasure& mu,
                          const EmpiricalMeasure& nu, CouplingMode mode);

// Extreme transport costs found by an exact LP oracle.
struct OtBruteforceResult {
  double min_cost = 0.0;
  double max_cost = 0.0;
};

// Solves min / max of sum_{i,j} x_i y_j pi_{ij} over all couplings pi of the
// two discrete marginals, as an explicit transportation linear program with
// an exact simplex.  Intended as a verification oracle: supports of size
// at most 8 are accepted.
OtBruteforceResult ot_bruteforce(const EmpiricalMeasure& mu,
                                 const EmpiricalMeasure& nu);

}  // namespace ivot

#endif  // IVOT_OT1D_HPP_
