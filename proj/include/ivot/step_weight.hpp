#ifndef IVOT_STEP_WEIGHT_HPP_
#define IVOT_STEP_WEIGHT_HPP_

#include <vector>

#include "ivot/measures.hpp"

namespace ivot {

// A closed interval [lo, hi] in [0, 1]; degenerate (lo == hi) intervals
// represent single attained propensity values.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

// Piecewise-constant weight function on the unit interval.
//
// Values are attached to the half-open cells (breaks[i], breaks[i+1]], with
// breaks[0] == 0 and breaks.back() == 1; the value at u <= 0 is the first
// cell's value.  Policy weights (differences of two survival functions of
// propensity values) are exactly of this form.
class StepWeight {
 public:
  // breaks must be strictly increasing from 0 to 1; values has one entry per
  // cell (breaks.size() - 1).
  StepWeight(std::vector<double> breaks, std::vector<double> values);

  static StepWeight constant(double value);

  double operator()(double u) const;

  const std::vector<double>& breaks() const { return breaks_; }
  const std::vector<double>& values() const { return values_; }

  // Exact integrals over [a, b] of w, max(0, w), and min(0, w).
  double integral(double a, double b) const;
  double integral_positive_part(double a, double b) const;
  double integral_negative_part(double a, double b) const;

  // Law of w(U) for U uniform on the union of the given disjoint intervals
  // (total length must be positive).  The result is a probability measure
  // whose atoms are the attained weight values.
  EmpiricalMeasure restriction_law(const std::vector<Interval>& region) const;

 private:
  std::vector<double> breaks_;
  std::vector<double> values_;
};

}  // namespace ivot

#endif  // IVOT_STEP_WEIGHT_HPP_
