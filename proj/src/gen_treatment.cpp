#include "ivot/gen_treatment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ivot/ot1d.hpp"
#include "ivot/quadrature.hpp"

namespace ivot {

namespace {

constexpr double kEndpointTol = 1e-12;

bool same_interval(const Interval& a, const Interval& b) {
  return std::abs(a.lo - b.lo) <= kEndpointTol &&
         std::abs(a.hi - b.hi) <= kEndpointTol;
}

// a strictly inside b (subset with tolerance, not equal).
bool strictly_included(const Interval& a, const Interval& b) {
  return b.lo <= a.lo + kEndpointTol && a.hi <= b.hi + kEndpointTol &&
         !same_interval(a, b);
}

// Sorted union of intervals with overlapping/abutting pieces merged.
std::vector<Interval> merge_union(std::vector<Interval> parts) {
  std::sort(parts.begin(), parts.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> out;
  for (const Interval& p : parts) {
    if (!out.empty() && p.lo <= out.back().hi + kEndpointTol) {
      out.back().hi = std::max(out.back().hi, p.hi);
    } else {
      out.push_back(p);
    }
  }
  return out;
}

// base minus the (already merged) union `cut`, dropping null leftovers.
std::vector<Interval> subtract_union(const Interval& base,
                                     const std::vector<Interval>& cut) {
  std::vector<Interval> out;
  double cursor = base.lo;
  for (const Interval& c : cut) {
    if (c.hi < base.lo || c.lo > base.hi) continue;
    if (c.lo > cursor + kEndpointTol) {
      out.push_back({cursor, std::min(c.lo, base.hi)});
    }
    cursor = std::max(cursor, c.hi);
    if (cursor >= base.hi) break;
  }
  if (cursor < base.hi - kEndpointTol) out.push_back({cursor, base.hi});
  return out;
}

double total_length(const std::vector<Interval>& parts) {
  double s = 0.0;
  for (const Interval& p : parts) s += p.length();
  return s;
}

// Total-variation distance between two probability measures.
double tv_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  SignedAtomMeasure sa(a.normalized().atoms(), a.normalized().weights());
  SignedAtomMeasure sb(b.normalized().atoms(), b.normalized().weights());
  const SignedAtomMeasure diff = sa.axpy(-1.0, sb);
  double s = 0.0;
  for (double w : diff.weights()) s += std::abs(w);
  return 0.5 * s;
}

// Clip negative atoms and renormalize to a probability measure; the input is
// expected to have total near one.
std::pair<EmpiricalMeasure, ComplierDiagnostic> project_to_probability(
    const SignedAtomMeasure& signed_measure) {
  ComplierDiagnostic diag;
  std::vector<double> atoms, weights;
  for (std::size_t i = 0; i < signed_measure.atoms().size(); ++i) {
    const double w = signed_measure.weights()[i];
    if (w < 0.0) {
      diag.negative_mass += -w;
    } else if (w > 0.0) {
      atoms.push_back(signed_measure.atoms()[i]);
      weights.push_back(w);
    }
  }
  EmpiricalMeasure clipped(std::move(atoms), std::move(weights));
  diag.mass_before_renormalization = clipped.mass();
  if (clipped.mass() <= 0.0) {
    throw std::invalid_argument(
        "isolated_measures: projection left no positive mass");
  }
  return {clipped.normalized(), diag};
}

}  // namespace

bool validate_pi_system(const IntervalFamily& family) {
  std::vector<Interval> members;
  for (const auto& [label, iv] : family.entries) members.push_back(iv);
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      const double lo = std::max(members[i].lo, members[j].lo);
      const double hi = std::min(members[i].hi, members[j].hi);
      if (hi - lo <= kEndpointTol) continue;  // null intersection
      const Interval cap{lo, hi};
      bool found = false;
      for (const Interval& m : members) {
        if (same_interval(cap, m)) {
          found = true;
          break;
        }
      }
      if (!found) return false;
    }
  }
  return true;
}

std::optional<std::size_t> InclusionDag::find(const std::string& label) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (const std::string& l : nodes[i].labels) {
      if (l == label) return i;
    }
  }
  return std::nullopt;
}

InclusionDag build_dag_and_regions(const IntervalFamily& family) {
  for (const auto& [label, iv] : family.entries) {
    if (iv.lo < -kEndpointTol || iv.hi > 1.0 + kEndpointTol ||
        iv.lo > iv.hi + kEndpointTol) {
      throw std::invalid_argument(
          "build_dag_and_regions: interval of '" + label +
          "' is not a valid subinterval of [0, 1]");
    }
  }
  if (!validate_pi_system(family)) {
    // Re-run the check to name an offending pair.
    std::vector<std::pair<std::string, Interval>> members(
        family.entries.begin(), family.entries.end());
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        const double lo = std::max(members[i].second.lo, members[j].second.lo);
        const double hi = std::min(members[i].second.hi, members[j].second.hi);
        if (hi - lo <= kEndpointTol) continue;
        const Interval cap{lo, hi};
        bool found = false;
        for (const auto& [label, m] : members) {
          if (same_interval(cap, m)) found = true;
        }
        if (!found) {
          throw std::invalid_argument(
              "build_dag_and_regions: intersection of intervals for '" +
              members[i].first + "' and '" + members[j].first +
              "' is neither null nor a member of the family");
        }
      }
    }
  }

  InclusionDag dag;
  // Collapse coinciding intervals into one node.
  for (const auto& [label, iv] : family.entries) {
    bool merged = false;
    for (DagNode& node : dag.nodes) {
      if (same_interval(node.interval, iv)) {
        node.labels.push_back(label);
        merged = true;
        break;
      }
    }
    if (!merged) {
      DagNode node;
      node.labels.push_back(label);
      node.interval = iv;
      dag.nodes.push_back(std::move(node));
    }
  }

  const std::size_t n = dag.nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j ||
          !strictly_included(dag.nodes[j].interval, dag.nodes[i].interval)) {
        continue;
      }
      dag.nodes[i].descendants.push_back(j);
      bool direct = true;
      for (std::size_t k = 0; k < n && direct; ++k) {
        if (k == i || k == j) continue;
        if (strictly_included(dag.nodes[j].interval, dag.nodes[k].interval) &&
            strictly_included(dag.nodes[k].interval, dag.nodes[i].interval)) {
          direct = false;
        }
      }
      if (direct) dag.nodes[i].children.push_back(j);
    }
  }

  std::vector<Interval> all_intervals;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Interval> child_parts;
    for (std::size_t c : dag.nodes[i].children) {
      child_parts.push_back(dag.nodes[c].interval);
    }
    dag.nodes[i].isolated =
        subtract_union(dag.nodes[i].interval, merge_union(child_parts));
    dag.nodes[i].isolated_length = total_length(dag.nodes[i].isolated);
    all_intervals.push_back(dag.nodes[i].interval);
  }
  dag.unconstrained = subtract_union({0.0, 1.0}, merge_union(all_intervals));
  return dag;
}

IsolatedMeasureSet isolated_measures(
    const InclusionDag& dag,
    const std::map<std::string, EmpiricalMeasure>& observed) {
  const std::size_t n = dag.nodes.size();
  IsolatedMeasureSet out;
  out.by_node.resize(n);
  out.diagnostics.resize(n);

  // Observed conditional per node (labels collapsed into one node must agree).
  std::vector<EmpiricalMeasure> node_law(n);
  for (std::size_t i = 0; i < n; ++i) {
    const DagNode& node = dag.nodes[i];
    for (std::size_t l = 0; l < node.labels.size(); ++l) {
      const auto it = observed.find(node.labels[l]);
      if (it == observed.end()) {
        throw std::invalid_argument(
            "isolated_measures: no observed law for instrument '" +
            node.labels[l] + "'");
      }
      if (l == 0) {
        node_law[i] = it->second.normalized();
      } else if (tv_distance(node_law[i], it->second) > 1e-6) {
        throw std::invalid_argument(
            "isolated_measures: instruments '" + node.labels[0] + "' and '" +
            node.labels[l] +
            "' share an interval but their observed laws disagree");
      }
    }
  }

  // Children have strictly shorter intervals, so ascending-length order
  // visits every descendant before its ancestors.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dag.nodes[a].interval.length() < dag.nodes[b].interval.length();
  });

  for (std::size_t idx : order) {
    const DagNode& node = dag.nodes[idx];
    if (node.isolated_length <= kEndpointTol) continue;  // nothing isolated
    SignedAtomMeasure acc(node_law[idx].atoms(), node_law[idx].weights());
    acc = acc.scaled(node.interval.length());
    for (std::size_t d : node.descendants) {
      if (!out.by_node[d].has_value()) continue;
      const EmpiricalMeasure& mu = *out.by_node[d];
      acc = acc.axpy(-dag.nodes[d].isolated_length,
                     SignedAtomMeasure(mu.atoms(), mu.weights()));
    }
    acc = acc.scaled(1.0 / node.isolated_length);
    auto [measure, diag] = project_to_probability(acc);
    out.by_node[idx] = std::move(measure);
    out.diagnostics[idx] = diag;
  }
  return out;
}

double bound_ordered_choice(const InclusionDag& dag,
                            const IsolatedMeasureSet& measures,
                            const StepWeight& weight, double y_min,
                            double y_max, Side side) {
  if (measures.by_node.size() != dag.nodes.size()) {
    throw std::invalid_argument(
        "bound_ordered_choice: measure set does not match the DAG");
  }
  const CouplingMode mode = side == Side::kLower
                                ? CouplingMode::kCountermonotone
                                : CouplingMode::kComonotone;
  double total = 0.0;
  for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
    const DagNode& node = dag.nodes[i];
    if (node.isolated_length <= kEndpointTol) continue;
    if (!measures.by_node[i].has_value()) {
      throw std::invalid_argument(
          "bound_ordered_choice: missing isolated measure for instrument '" +
          node.labels[0] + "'");
    }
    const EmpiricalMeasure weight_law = weight.restriction_law(node.isolated);
    total += node.isolated_length *
             ot_product_extreme(*measures.by_node[i], weight_law, mode);
  }
  for (const Interval& g : dag.unconstrained) {
    const double pos = weight.integral_positive_part(g.lo, g.hi);
    const double neg = weight.integral_negative_part(g.lo, g.hi);
    total += side == Side::kLower ? y_min * pos + y_max * neg
                                  : y_max * pos + y_min * neg;
  }
  return total;
}

double bound_strict_monotone(
    const std::function<double(double)>& identified_mean,
    const std::function<bool(double)>& identified_indicator,
    const StepWeight& weight, double y_min, double y_max, Side side,
    double quad_tol) {
  const auto integrand = [&](double u) {
    const double w = weight(u);
    if (identified_indicator(u)) return identified_mean(u) * w;
    const double pos = std::max(0.0, w);
    const double neg = std::min(0.0, w);
    return side == Side::kLower ? y_min * pos + y_max * neg
                                : y_max * pos + y_min * neg;
  };
  double total = 0.0;
  const std::vector<double>& breaks = weight.breaks();
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    total += integrate_adaptive(integrand, breaks[i], breaks[i + 1], quad_tol);
  }
  return total;
}

}  // namespace ivot
