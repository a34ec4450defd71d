#include "ivot/roy_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ivot/ot1d.hpp"
#include "ivot/quadrature.hpp"

namespace ivot {

namespace {

// Trivial support bound of integral_region (y * w(u)) du over an
// unconstrained region, taking y pointwise at the favorable support end.
double trivial_term(const StepWeight& weight, const Interval& region,
                    Side side, double y_min, double y_max) {
  const double pos = weight.integral_positive_part(region.lo, region.hi);
  const double neg = weight.integral_negative_part(region.lo, region.hi);
  return side == Side::kLower ? y_min * pos + y_max * neg
                              : y_max * pos + y_min * neg;
}

// Extreme transport term |G| * integral Q_mu(t) Q_w(side-dependent t) dt for
// an identified gap region.
double gap_term(const StepWeight& weight, const Interval& gap,
                const EmpiricalMeasure& mu, Side side) {
  const EmpiricalMeasure omega_law = weight.restriction_law({gap});
  const CouplingMode mode = side == Side::kLower
                                ? CouplingMode::kCountermonotone
                                : CouplingMode::kComonotone;
  return gap.length() * ot_product_extreme(mu, omega_law, mode);
}

// Exact integral of m(u) * w(u) over [lo, hi], splitting at the weight's
// breakpoints so each adaptive panel has a smooth integrand.
double interval_term(const StepWeight& weight,
                     const std::function<double(double)>& m, double lo,
                     double hi, double quad_tol) {
  std::vector<double> cuts;
  cuts.push_back(lo);
  for (double b : weight.breaks()) {
    if (b > lo && b < hi) cuts.push_back(b);
  }
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    if (b <= a) continue;
    const double w = weight(0.5 * (a + b));
    if (w == 0.0) continue;
    total += w * integrate_adaptive(m, a, b, quad_tol);
  }
  return total;
}

const EmpiricalMeasure* arm_gap_measure(const GapData& data, Arm arm,
                                        std::size_t g) {
  const auto& slots =
      arm == Arm::kTreated ? data.treated_gap : data.untreated_gap;
  if (arm == Arm::kUntreated && g == 0) return nullptr;
  if (g < slots.size() && slots[g].has_value()) return &*slots[g];
  return nullptr;
}

}  // namespace

PropensityLayout PropensityLayout::from_points(
    const std::vector<double>& points, double merge_tol) {
  std::vector<Interval> intervals;
  intervals.reserve(points.size());
  for (double p : points) intervals.push_back({p, p});
  // Touching within merge_tol collapses to one point/interval below.
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> merged;
  for (const Interval& iv : intervals) {
    if (!merged.empty() && iv.lo <= merged.back().hi + merge_tol) {
      merged.back().hi = std::max(merged.back().hi, iv.hi);
    } else {
      merged.push_back(iv);
    }
  }
  return from_intervals(std::move(merged));
}

PropensityLayout PropensityLayout::from_intervals(
    std::vector<Interval> intervals) {
  if (intervals.empty()) {
    throw std::invalid_argument("PropensityLayout: no intervals");
  }
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> merged;
  for (const Interval& iv : intervals) {
    if (!(iv.hi >= iv.lo) || iv.lo < 0.0 || iv.hi > 1.0 || iv.hi <= 0.0) {
      throw std::invalid_argument(
          "PropensityLayout: intervals must lie in (0, 1]");
    }
    if (!merged.empty() && iv.lo <= merged.back().hi) {
      merged.back().hi = std::max(merged.back().hi, iv.hi);
    } else {
      merged.push_back(iv);
    }
  }
  PropensityLayout layout;
  layout.intervals_ = std::move(merged);
  return layout;
}

Interval PropensityLayout::gap(std::size_t g) const {
  if (g >= intervals_.size()) {
    throw std::out_of_range("PropensityLayout::gap index");
  }
  const double lo = g == 0 ? 0.0 : intervals_[g - 1].hi;
  return {lo, intervals_[g].lo};
}

Interval PropensityLayout::tail() const {
  return {intervals_.back().hi, 1.0};
}

double bound_component(const PropensityLayout& layout, const GapData& data,
                       const StepWeight& weight, Arm arm, Side side,
                       double y_min, double y_max, double quad_tol) {
  if (!(y_max >= y_min)) {
    throw std::invalid_argument("bound_component: y_max < y_min");
  }
  double total = 0.0;

  for (std::size_t g = 0; g < layout.num_intervals(); ++g) {
    const Interval gap = layout.gap(g);
    if (gap.length() <= 0.0) continue;
    if (const EmpiricalMeasure* mu = arm_gap_measure(data, arm, g)) {
      total += gap_term(weight, gap, *mu, side);
    } else if (arm == Arm::kUntreated && g == 0) {
      total += trivial_term(weight, gap, side, y_min, y_max);
    } else {
      throw std::invalid_argument("bound_component: missing gap measure");
    }
  }

  const Interval tail = layout.tail();
  if (tail.length() > 0.0) {
    if (arm == Arm::kUntreated) {
      if (!data.untreated_tail.has_value()) {
        throw std::invalid_argument(
            "bound_component: missing untreated tail measure");
      }
      total += gap_term(weight, tail, *data.untreated_tail, side);
    } else {
      total += trivial_term(weight, tail, side, y_min, y_max);
    }
  }

  for (const Interval& iv : layout.intervals()) {
    if (iv.length() <= 0.0) continue;
    std::function<double(double)> m;
    if (arm == Arm::kTreated) {
      if (!data.d_mean_yw) {
        throw std::invalid_argument("bound_component: missing d_mean_yw");
      }
      m = data.d_mean_yw;
    } else {
      if (!data.d_mean_y_untreated) {
        throw std::invalid_argument(
            "bound_component: missing d_mean_y_untreated");
      }
      const auto& d = data.d_mean_y_untreated;
      m = [&d](double u) { return -d(u); };
    }
    total += interval_term(weight, m, iv.lo, iv.hi, quad_tol);
  }

  return total;
}

double bound_width(const PropensityLayout& layout, const GapData& data,
                   const StepWeight& weight, Arm arm, double y_min,
                   double y_max) {
  double width = 0.0;
  for (std::size_t g = 0; g < layout.num_intervals(); ++g) {
    const Interval gap = layout.gap(g);
    if (gap.length() <= 0.0) continue;
    if (const EmpiricalMeasure* mu = arm_gap_measure(data, arm, g)) {
      width += gap_term(weight, gap, *mu, Side::kUpper) -
               gap_term(weight, gap, *mu, Side::kLower);
    } else {
      const double abs_mass =
          weight.integral_positive_part(gap.lo, gap.hi) -
          weight.integral_negative_part(gap.lo, gap.hi);
      width += (y_max - y_min) * abs_mass;
    }
  }
  const Interval tail = layout.tail();
  if (tail.length() > 0.0) {
    if (arm == Arm::kUntreated && data.untreated_tail.has_value()) {
      width += gap_term(weight, tail, *data.untreated_tail, Side::kUpper) -
               gap_term(weight, tail, *data.untreated_tail, Side::kLower);
    } else {
      const double abs_mass =
          weight.integral_positive_part(tail.lo, tail.hi) -
          weight.integral_negative_part(tail.lo, tail.hi);
      width += (y_max - y_min) * abs_mass;
    }
  }
  return width;
}

BoundPair aggregate_bounds(const BoundPair& treated,
                           const BoundPair& untreated) {
  return {treated.lower - untreated.upper, treated.upper - untreated.lower};
}

BoundPair bound_with_covariates(const std::vector<double>& stratum_probs,
                                const std::vector<BoundPair>& per_stratum) {
  if (stratum_probs.size() != per_stratum.size() || stratum_probs.empty()) {
    throw std::invalid_argument("bound_with_covariates: size mismatch");
  }
  double psum = 0.0;
  BoundPair out;
  for (std::size_t i = 0; i < stratum_probs.size(); ++i) {
    if (stratum_probs[i] < 0.0) {
      throw std::invalid_argument("bound_with_covariates: negative prob");
    }
    psum += stratum_probs[i];
    out.lower += stratum_probs[i] * per_stratum[i].lower;
    out.upper += stratum_probs[i] * per_stratum[i].upper;
  }
  if (std::abs(psum - 1.0) > 1e-8) {
    throw std::invalid_argument(
        "bound_with_covariates: probabilities must sum to one");
  }
  return out;
}

StepWeight prte_weight(const PropensityDistribution& baseline,
                       const std::vector<double>& new_values) {
  if (baseline.values.size() != baseline.probs.size() ||
      baseline.values.size() != new_values.size() || baseline.values.empty()) {
    throw std::invalid_argument("prte_weight: size mismatch");
  }
  std::vector<double> breaks{0.0, 1.0};
  for (double v : baseline.values) {
    if (v > 0.0 && v < 1.0) breaks.push_back(v);
  }
  for (double v : new_values) {
    if (v > 0.0 && v < 1.0) breaks.push_back(v);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  std::vector<double> values(breaks.size() - 1, 0.0);
  for (std::size_t c = 0; c + 1 < breaks.size(); ++c) {
    // On the cell (b_c, b_{c+1}], the indicator 1(u <= v) equals
    // 1(v >= b_{c+1}) because every v is itself a breakpoint.
    const double hi = breaks[c + 1];
    double w = 0.0;
    for (std::size_t i = 0; i < baseline.values.size(); ++i) {
      w += baseline.probs[i] * ((new_values[i] >= hi ? 1.0 : 0.0) -
                                (baseline.values[i] >= hi ? 1.0 : 0.0));
    }
    values[c] = w;
  }
  return StepWeight(std::move(breaks), std::move(values));
}

StepWeight ate_weight() { return StepWeight::constant(1.0); }

StepWeight att_weight(const PropensityDistribution& baseline) {
  double mean_p = 0.0;
  for (std::size_t i = 0; i < baseline.values.size(); ++i) {
    mean_p += baseline.values[i] * baseline.probs[i];
  }
  if (mean_p <= 0.0) throw std::invalid_argument("att_weight: E[p] <= 0");
  std::vector<double> breaks{0.0, 1.0};
  for (double v : baseline.values) {
    if (v > 0.0 && v < 1.0) breaks.push_back(v);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> values(breaks.size() - 1, 0.0);
  for (std::size_t c = 0; c + 1 < breaks.size(); ++c) {
    double surv = 0.0;
    for (std::size_t i = 0; i < baseline.values.size(); ++i) {
      if (baseline.values[i] >= breaks[c + 1]) surv += baseline.probs[i];
    }
    values[c] = surv / mean_p;
  }
  return StepWeight(std::move(breaks), std::move(values));
}

StepWeight atu_weight(const PropensityDistribution& baseline) {
  double mean_p = 0.0;
  for (std::size_t i = 0; i < baseline.values.size(); ++i) {
    mean_p += baseline.values[i] * baseline.probs[i];
  }
  if (mean_p >= 1.0) throw std::invalid_argument("atu_weight: E[1-p] <= 0");
  std::vector<double> breaks{0.0, 1.0};
  for (double v : baseline.values) {
    if (v > 0.0 && v < 1.0) breaks.push_back(v);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> values(breaks.size() - 1, 0.0);
  for (std::size_t c = 0; c + 1 < breaks.size(); ++c) {
    double below = 0.0;
    for (std::size_t i = 0; i < baseline.values.size(); ++i) {
      // On (b_c, b_{c+1}], 1(p < u) = 1(p <= b_c) since p is a breakpoint.
      if (baseline.values[i] <= breaks[c]) below += baseline.probs[i];
    }
    values[c] = below / (1.0 - mean_p);
  }
  return StepWeight(std::move(breaks), std::move(values));
}

StepWeight late_weight(double p0, double p1) {
  if (!(0.0 <= p0 && p0 < p1 && p1 <= 1.0)) {
    throw std::invalid_argument("late_weight: need 0 <= p0 < p1 <= 1");
  }
  std::vector<double> breaks{0.0};
  std::vector<double> values;
  if (p0 > 0.0) {
    breaks.push_back(p0);
    values.push_back(0.0);
  }
  breaks.push_back(p1);
  values.push_back(1.0 / (p1 - p0));
  if (p1 < 1.0) {
    breaks.push_back(1.0);
    values.push_back(0.0);
  }
  return StepWeight(std::move(breaks), std::move(values));
}

void bound_discrete_population_components(const DiscreteLevelPopulation& pop,
                                          const StepWeight& weight,
                                          BoundPair* treated,
                                          BoundPair* untreated) {
  const std::size_t K = pop.levels.size();
  if (K == 0) {
    throw std::invalid_argument("bound_discrete_population: no levels");
  }
  std::vector<double> points;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& lvl = pop.levels[k];
    if (!(lvl.p > 0.0 && lvl.p <= 1.0)) {
      throw std::invalid_argument(
          "bound_discrete_population: levels must have p in (0, 1]");
    }
    if (k > 0 && !(lvl.p > pop.levels[k - 1].p)) {
      throw std::invalid_argument(
          "bound_discrete_population: levels must be ascending");
    }
    points.push_back(lvl.p);
  }
  const PropensityLayout layout = PropensityLayout::from_points(points);

  GapData data;
  data.treated_gap.resize(K);
  data.untreated_gap.resize(K);
  for (std::size_t g = 0; g < K; ++g) {
    const auto& lvl = pop.levels[g];
    // Treated complier law on (p_{g-1}, p_g), differencing against zero at
    // the head gap.
    const EmpiricalMeasure hi1 = lvl.y_treated.scaled(lvl.p);
    if (g == 0) {
      data.treated_gap[g] =
          complier_measure(hi1, EmpiricalMeasure(), lvl.p, 0.0).first;
    } else {
      const auto& prev = pop.levels[g - 1];
      data.treated_gap[g] =
          complier_measure(hi1, prev.y_treated.scaled(prev.p), lvl.p, prev.p)
              .first;
      // Untreated complier law on the same gap: difference of untreated
      // sub-distributions, larger mass at the lower propensity level.
      data.untreated_gap[g] =
          complier_measure(prev.y_untreated.scaled(1.0 - prev.p),
                           lvl.y_untreated.scaled(1.0 - lvl.p), 1.0 - prev.p,
                           1.0 - lvl.p)
              .first;
    }
  }
  const auto& top = pop.levels.back();
  if (top.p < 1.0) data.untreated_tail = top.y_untreated;

  treated->lower = bound_component(layout, data, weight, Arm::kTreated,
                                   Side::kLower, pop.y_min, pop.y_max);
  treated->upper = bound_component(layout, data, weight, Arm::kTreated,
                                   Side::kUpper, pop.y_min, pop.y_max);
  untreated->lower = bound_component(layout, data, weight, Arm::kUntreated,
                                     Side::kLower, pop.y_min, pop.y_max);
  untreated->upper = bound_component(layout, data, weight, Arm::kUntreated,
                                     Side::kUpper, pop.y_min, pop.y_max);
}

BoundPair bound_discrete_population(const DiscreteLevelPopulation& pop,
                                    const StepWeight& weight) {
  BoundPair treated, untreated;
  bound_discrete_population_components(pop, weight, &treated, &untreated);
  return aggregate_bounds(treated, untreated);
}

}  // namespace ivot
