#ifndef IVOT_ROY_BOUNDS_HPP_
#define IVOT_ROY_BOUNDS_HPP_

#include <functional>
#include <optional>
#include <vector>

#include "ivot/measures.hpp"
#include "ivot/step_weight.hpp"

namespace ivot {

// Which potential-outcome arm a component bound refers to.
enum class Arm { kTreated, kUntreated };

enum class Side { kLower, kUpper };

// A two-sided identified set.
struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
};

// The support geometry of the baseline propensity score: the sorted disjoint
// closed intervals of attained values inside (0, 1].  Degenerate intervals
// are attained points (discrete instruments); non-degenerate intervals are
// regions where local instrumental-variable derivatives point-identify the
// marginal outcome means.
class PropensityLayout {
 public:
  // Attained propensity values of a discrete instrument; values closer than
  // `merge_tol` are treated as a single point.
  static PropensityLayout from_points(const std::vector<double>& points,
                                      double merge_tol = 0.0);
  // General case: intervals are sorted and overlapping/touching ones merged.
  static PropensityLayout from_intervals(std::vector<Interval> intervals);

  // Identified intervals L_1..L_K, ascending and disjoint.
  const std::vector<Interval>& intervals() const { return intervals_; }
  std::size_t num_intervals() const { return intervals_.size(); }

  // Gap g (g = 0..K-1) is the open region below interval g:
  // (hi_{g-1}, lo_g) with hi_{-1} = 0.  May have zero length.
  Interval gap(std::size_t g) const;
  // The open tail region above the last interval, (hi_K, 1].
  Interval tail() const;

 private:
  std::vector<Interval> intervals_;
};

// The identified ingredients needed to evaluate one component bound: the
// complier outcome laws on the unidentified gaps of a PropensityLayout, and
// the derivative callables that point-identify marginal means on the
// non-degenerate intervals.
struct GapData {
  // Treated-arm complier laws, one slot per gap (entry g unused when
  // gap(g) has zero length).  Identified for every gap; the tail region is
  // unconstrained for the treated arm.
  std::vector<std::optional<EmpiricalMeasure>> treated_gap;
  // Untreated-arm complier laws: identified on gaps g >= 1; the head gap
  // (g = 0) is unconstrained for the untreated arm.
  std::vector<std::optional<EmpiricalMeasure>> untreated_gap;
  // Untreated-arm outcome law on the tail region above the top interval.
  std::optional<EmpiricalMeasure> untreated_tail;
  // d/du E[Y W | p(Z) = u] on the interiors of non-degenerate intervals;
  // identifies the treated marginal mean E[Y(1) | U = u].
  std::function<double(double)> d_mean_yw;
  // d/du E[Y (1 - W) | p(Z) = u]; its negative identifies the untreated
  // marginal mean E[Y(0) | U = u].
  std::function<double(double)> d_mean_y_untreated;
};

// Sharp one-sided bound on the component E[Y(arm) * weight(U)] given the
// identified layout data and the outcome support [y_min, y_max].
// Gap regions contribute extreme one-dimensional transport terms
// (countermonotone for the lower side, comonotone for the upper side),
// identified intervals contribute exact weighted integrals of the
// point-identified marginal mean, and the unconstrained region contributes
// the trivial support bound.  `quad_tol` controls the interval quadrature.
double bound_component(const PropensityLayout& layout, const GapData& data,
                       const StepWeight& weight, Arm arm, Side side,
                       double y_min, double y_max, double quad_tol = 1e-8);

// Sharp width of the component bound interval for one arm:
//   sum_gaps |G| * integral (Q_Y(t) - Q_Y(1-t)) Q_w(t) dt
//     + (y_max - y_min) * integral_trivial |w|.
double bound_width(const PropensityLayout& layout, const GapData& data,
                   const StepWeight& weight, Arm arm, double y_min,
                   double y_max);

// Combines per-arm component bounds into the bound on
// E[(Y(1) - Y(0)) * weight(U)]-type contrasts:
//   [lower_1 - upper_0, upper_1 - lower_0].
BoundPair aggregate_bounds(const BoundPair& treated,
                           const BoundPair& untreated);

// Expectation of per-stratum bounds over covariate strata with the given
// probabilities (must sum to ~1).
BoundPair bound_with_covariates(const std::vector<double>& stratum_probs,
                                const std::vector<BoundPair>& per_stratum);

// ---------------------------------------------------------------------------
// Weight constructors.
// ---------------------------------------------------------------------------

// Baseline propensity distribution of a discrete instrument: attained values
// with their probabilities.
struct PropensityDistribution {
  std::vector<double> values;
  std::vector<double> probs;
};

// Policy-contrast weight w(u) = P(q >= u) - P(p >= u), where the policy maps
// the i-th attained baseline value to new_values[i].
StepWeight prte_weight(const PropensityDistribution& baseline,
                       const std::vector<double>& new_values);

// Classical weights: average effect (w = 1), effect on the treated
// (P(p >= u) / E[p]), effect on the untreated (P(p < u) / E[1 - p]), and the
// local effect between two propensity values (1(p0 < u <= p1) / (p1 - p0)).
StepWeight ate_weight();
StepWeight att_weight(const PropensityDistribution& baseline);
StepWeight atu_weight(const PropensityDistribution& baseline);
StepWeight late_weight(double p0, double p1);

// ---------------------------------------------------------------------------
// Population evaluation for discrete instruments.
// ---------------------------------------------------------------------------

// A discrete-instrument population described level by level: each attained
// propensity value with its probability and the conditional outcome laws in
// the two arms.  Used to evaluate the closed-form bounds exactly (test
// oracles, simulation ground truth, moment checks).
struct DiscreteLevelPopulation {
  struct Level {
    double p = 0.0;            // attained propensity value, in (0, 1]
    double prob = 0.0;         // P(p(Z) = p)
    EmpiricalMeasure y_treated;    // law of Y | W = 1, p(Z) = p
    EmpiricalMeasure y_untreated;  // law of Y | W = 0, p(Z) = p
  };
  std::vector<Level> levels;  // ascending in p
  double y_min = 0.0;
  double y_max = 1.0;
};

// Exact sharp bounds on E[(Y(1) - Y(0)) * weight(U)] for the population.
BoundPair bound_discrete_population(const DiscreteLevelPopulation& pop,
                                    const StepWeight& weight);

// Per-arm component bounds for the same population (lower_1/upper_1 and
// lower_0/upper_0 before aggregation).
void bound_discrete_population_components(const DiscreteLevelPopulation& pop,
                                          const StepWeight& weight,
                                          BoundPair* treated,
                                          BoundPair* untreated);

}  // namespace ivot

#endif  // IVOT_ROY_BOUNDS_HPP_
