#ifndef IVOT_GEN_TREATMENT_HPP_
#define IVOT_GEN_TREATMENT_HPP_

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ivot/measures.hpp"
#include "ivot/roy_bounds.hpp"
#include "ivot/step_weight.hpp"

namespace ivot {

// A finite family of latent-index intervals, one per instrument value: the
// treatment arm of interest is selected exactly when U falls in I(z).
struct IntervalFamily {
  std::map<std::string, Interval> entries;
};

// Returns true iff every pairwise intersection of member intervals is either
// Lebesgue-null or coincides (within 1e-12 on endpoints) with some member.
// This closure property is what makes the inclusion structure a DAG whose
// isolated regions partition [0, 1].
bool validate_pi_system(const IntervalFamily& family);

// One node of the inclusion DAG.  Instrument values whose intervals coincide
// are collapsed into a single node and listed in `labels`.
struct DagNode {
  std::vector<std::string> labels;
  Interval interval;
  // Indices into InclusionDag::nodes of direct children (maximal strictly
  // included intervals) and of all strict descendants.
  std::vector<std::size_t> children;
  std::vector<std::size_t> descendants;
  // Isolated region J = interval minus the union of the children, kept as an
  // exact finite union of disjoint intervals, and its total length.
  std::vector<Interval> isolated;
  double isolated_length = 0.0;
};

// Inclusion DAG of an interval family together with the induced partition of
// [0, 1] into isolated regions and the unconstrained remainder.
struct InclusionDag {
  std::vector<DagNode> nodes;
  // J(empty set): the part of [0, 1] covered by no member interval.  The
  // latent law is unrestricted there, so only support bounds apply.
  std::vector<Interval> unconstrained;

  // Index of the node containing the given instrument label, or nullopt.
  std::optional<std::size_t> find(const std::string& label) const;
};

// Builds the inclusion DAG and the isolated-region partition.  Throws
// std::invalid_argument naming the offending pair when the closure property
// required by validate_pi_system fails.
InclusionDag build_dag_and_regions(const IntervalFamily& family);

// Isolated outcome measures, one per DAG node with a non-null isolated
// region, aligned with InclusionDag::nodes.
struct IsolatedMeasureSet {
  std::vector<std::optional<EmpiricalMeasure>> by_node;
  std::vector<ComplierDiagnostic> diagnostics;
};

// Disentangles the observed conditional outcome laws into per-region
// measures by the leaves-upward recursion
//   mu_z = (|I(z)| P_obs(. | z) - sum_{z' descendant} |J(z')| mu_{z'}) / |J(z)|,
// followed by a clip-and-renormalize projection with diagnostics.  `observed`
// maps each instrument label to the conditional law of Y given the arm and
// that instrument value.  Labels collapsed into one node must carry laws that
// agree within total variation 1e-6; otherwise throws std::invalid_argument.
IsolatedMeasureSet isolated_measures(
    const InclusionDag& dag,
    const std::map<std::string, EmpiricalMeasure>& observed);

// Sharp bound component for one arm under the interval-selection model:
//   sum_z |J(z)| * extreme E[Y w(U)] over couplings on J(z)
//     + support-bound term on the unconstrained region.
// The per-region extremes are the one-dimensional quantile couplings of the
// isolated measure with the law of the weight restricted to J(z).  Throws
// std::invalid_argument when a region with positive length and non-null
// weight restriction has no measure.
double bound_ordered_choice(const InclusionDag& dag,
                            const IsolatedMeasureSet& measures,
                            const StepWeight& weight, double y_min,
                            double y_max, Side side);

// Sharp bound component when selection into the arm is strictly monotone in
// the instrument, so the conditional mean m(u) = E[Y | U = u] is point
// identified on a measurable set: the bound integrates m * w where
// identified and the support envelope elsewhere,
//   lower:  integral of 1_id m w + 1_not_id (y_min max(0,w) + y_max min(0,w)),
// with the support roles swapped for the upper side.  Quadrature is split at
// the weight breakpoints and refined adaptively to `quad_tol`.
double bound_strict_monotone(
    const std::function<double(double)>& identified_mean,
    const std::function<bool(double)>& identified_indicator,
    const StepWeight& weight, double y_min, double y_max, Side side,
    double quad_tol = 1e-8);

}  // namespace ivot

#endif  // IVOT_GEN_TREATMENT_HPP_
