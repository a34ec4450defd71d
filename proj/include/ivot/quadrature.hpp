#ifndef IVOT_QUADRATURE_HPP_
#define IVOT_QUADRATURE_HPP_

#include <functional>

namespace ivot {

// Adaptive Simpson integration of f over [a, b] to the given absolute
// tolerance.  Intended for smooth integrands on short intervals; callers
// should split at known kinks (e.g. weight breakpoints) beforehand.
double integrate_adaptive(const std::function<double(double)>& f, double a,
                          double b, double abs_tol = 1e-8,
                          int max_depth = 40);

}  // namespace ivot

#endif  // IVOT_QUADRATURE_HPP_
