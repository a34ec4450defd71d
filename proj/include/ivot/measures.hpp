#ifndef IVOT_MEASURES_HPP_
#define IVOT_MEASURES_HPP_

#include <utility>
#include <vector>

namespace ivot {

// A finite discrete measure on the real line with non-negative atom weights.
//
// Atoms are stored sorted and distinct (duplicates passed to the constructor
// are merged, zero-weight atoms are dropped).  The total mass is arbitrary:
// probability measures have mass one, while scaled sub-distributions (e.g.
// conditional laws multiplied by a propensity value) carry their own mass.
// Quantile-type queries are always taken with respect to the normalized
// measure, so they are well defined for any positive mass.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;

  // Builds the measure from parallel atom/weight arrays.  Atoms may be
  // unsorted and may repeat; weights must be non-negative.
  EmpiricalMeasure(std::vector<double> atoms, std::vector<double> weights);

  // Uniform empirical distribution of a sample (weight 1/n per draw).
  static EmpiricalMeasure from_samples(const std::vector<double>& values);

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  double mass() const { return mass_; }
  double mean() const;
  double min() const;
  double max() const;

  // Left-continuous generalized inverse of the normalized CDF,
  //   Q(t) = inf{ y : F(y) >= t },
  // with Q(t) = smallest atom for t <= 0 and Q(t) = largest atom for t >= 1.
  // Cumulative weights are compared with a small relative tolerance so that
  // exact breakpoints (t equal to a partial sum of weights) resolve to the
  // atom that closes the breakpoint, matching the inf convention.
  double quantile(double t) const;

  // Exact integral of the quantile function over [a, b] (0 <= a <= b <= 1),
  // computed cell-by-cell on the cumulative-weight grid (no quadrature).
  double quantile_integral(double a, double b) const;

  // Lower conditional value at risk: (1/alpha) * integral_0^alpha Q(t) dt,
  // for alpha in (0, 1].
  double cvar(double alpha) const;

  // Returns the measure with all weights multiplied by c >= 0.
  EmpiricalMeasure scaled(double c) const;

  // Returns the probability measure with the same atoms (mass one).
  EmpiricalMeasure normalized() const;

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
  std::vector<double> cum_;  // inclusive partial sums of weights_
  double mass_ = 0.0;
};

// A finite collection of atoms with signed weights, used as an intermediate
// when differencing two scaled sub-distributions.  Duplicate atoms are merged
// on construction; weights of either sign are kept (including exact zeros).
class SignedAtomMeasure {
 public:
  SignedAtomMeasure() = default;
  SignedAtomMeasure(std::vector<double> atoms, std::vector<double> weights);

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  double total() const;

  // this + c * other, atom-wise on the merged atom set.
  SignedAtomMeasure axpy(double c, const SignedAtomMeasure& other) const;
  SignedAtomMeasure scaled(double c) const;

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

// Diagnostics of the clip-and-renormalize projection used when an estimated
// complier measure has (numerically) negative atoms.
struct ComplierDiagnostic {
  // Total absolute weight removed by clipping negative atoms (>= 0).
  double negative_mass = 0.0;
  // Mass of the clipped measure before renormalization to one.
  double mass_before_renormalization = 0.0;
};

// Identified complier outcome distribution between two propensity values.
//
// Arguments:
//   sub_hi: scaled sub-distribution P(dy, treated | p = p_hi), mass ~ p_hi;
//   sub_lo: scaled sub-distribution P(dy, treated | p = p_lo), mass ~ p_lo
//           (pass an empty measure for the convention P(. | p = 0) = 0);
//   p_hi, p_lo: the two propensity values, p_hi > p_lo >= 0.
// Returns the probability measure ((sub_hi - sub_lo) / (p_hi - p_lo)) with
// negative atoms clipped at zero and the result renormalized to mass one,
// together with the clipping diagnostic.
std::pair<EmpiricalMeasure, ComplierDiagnostic> complier_measure(
    const EmpiricalMeasure& sub_hi, const EmpiricalMeasure& sub_lo,
    double p_hi, double p_lo);

}  // namespace ivot

#endif  // IVOT_MEASURES_HPP_
