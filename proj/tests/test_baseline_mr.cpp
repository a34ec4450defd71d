#include "ivot/baseline_mr.hpp"

#include <algorithm>
#include <random>
#include <vector>

#include "doctest.h"
#include "ivot/quadrature.hpp"
#include "ivot/roy_bounds.hpp"
#include "ivot/step_weight.hpp"
#include "random_population.hpp"

using ivot::BoundPair;
using ivot::MrMoments;
using ivot::MtrSieve;
using ivot::StepWeight;
using doctest::Approx;

TEST_CASE("spline basis is a partition of unity with exact integrals") {
  for (int degree : {0, 1, 3, 9}) {
    const MtrSieve sieve(degree);
    for (double u : {0.0, 0.05, 0.1, 0.33, 0.5, 0.77, 0.999, 1.0}) {
      double total = 0.0;
      for (int j = 0; j < sieve.size(); ++j) {
        const double b = sieve.basis(j, u);
        CHECK(b >= 0.0);
        total += b;
      }
      CHECK(total == Approx(1.0).epsilon(1e-12));
    }
    // Exact quadrature agrees with adaptive integration on every basis.
    for (int j = 0; j < sieve.size(); ++j) {
      const double exact = sieve.basis_integral(j, 0.13, 0.87);
      double adaptive = 0.0;
      const auto& spans = sieve.span_points();
      for (std::size_t s = 0; s + 1 < spans.size(); ++s) {
        const double lo = std::max(0.13, spans[s]);
        const double hi = std::min(0.87, spans[s + 1]);
        if (hi <= lo) continue;
        adaptive += ivot::integrate_adaptive(
            [&](double u) { return sieve.basis(j, u); }, lo, hi, 1e-11);
      }
      CHECK(exact == Approx(adaptive).epsilon(1e-8));
    }
  }
  // Partition of unity integrates to the interval length.
  const MtrSieve sieve(9);
  double total = 0.0;
  for (int j = 0; j < sieve.size(); ++j)
    total += sieve.basis_integral(j, 0.0, 1.0);
  CHECK(total == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constants-only sieve with one interior moment gives a point") {
  const MtrSieve sieve(0, {});
  REQUIRE(sieve.size() == 1);
  MrMoments mom;
  mom.levels.push_back({0.4, 0.7, 0.2});
  const BoundPair b =
      ivot::solve_mr_bounds(mom, ivot::ate_weight(), sieve, -1.0, 1.0);
  CHECK(b.lower == Approx(0.5).epsilon(1e-7));
  CHECK(b.upper == Approx(0.5).epsilon(1e-7));
}

TEST_CASE("zero weight gives zero bounds") {
  MrMoments mom;
  mom.levels.push_back({0.3, 0.4, 0.1});
  const BoundPair b = ivot::solve_mr_bounds(mom, StepWeight::constant(0.0),
                                            MtrSieve(9), 0.0, 1.0);
  CHECK(b.lower == Approx(0.0).epsilon(1e-9));
  CHECK(b.upper == Approx(0.0).epsilon(1e-9));
}

TEST_CASE("a full-support treated moment pins the treated integral") {
  // p = 1: only int_0^1 m1 = 0.3 is imposed, m0 roams the outcome box.
  const MtrSieve sieve(3);
  MrMoments mom;
  mom.levels.push_back({1.0, 0.3, 0.0});
  const BoundPair b =
      ivot::solve_mr_bounds(mom, ivot::ate_weight(), sieve, 0.0, 1.0);
  CHECK(b.lower == Approx(-0.7).epsilon(1e-6));
  CHECK(b.upper == Approx(0.3).epsilon(1e-6));
}

TEST_CASE("point-mass-at-zero outcomes still allow a wide relaxation") {
  // Binary instrument with p in {1/4, 3/4} and Y identically zero: the
  // moment system only forces both response functions to integrate to zero
  // over (1/4, 3/4), so with outcomes ranged in [-1, 1] the relaxation
  // approaches [-1/2, 1/2] while the sharp value is 0.
  MrMoments mom;
  mom.levels.push_back({0.25, 0.0, 0.0});
  mom.levels.push_back({0.75, 0.0, 0.0});
  const StepWeight target({0.0, 0.25, 0.5, 1.0}, {0.0, 1.0, 0.0});
  std::vector<double> knots;
  for (int i = 1; i < 20; ++i) knots.push_back(0.05 * i);
  const MtrSieve rich(9, knots);
  const BoundPair b = ivot::solve_mr_bounds(mom, target, rich, -1.0, 1.0);
  CHECK(b.lower == Approx(-0.5).epsilon(0.1));
  CHECK(b.upper == Approx(0.5).epsilon(0.1));
  CHECK(std::abs(b.lower + 0.5) < 0.05);
  CHECK(std::abs(b.upper - 0.5) < 0.05);
  CHECK(b.lower < 0.0);
  CHECK(b.upper > 0.0);
}

// The sharp solution's response functions, averaged over each cell of the
// partition generated by the propensity levels and the weight breakpoints,
// keep every moment, the outcome box, and the objective unchanged.  A
// piecewise-constant sieve whose knots refine that partition therefore
// always contains a feasible point attaining the sharp value, which is what
// makes the moment relaxation an outer bound.
static MtrSieve refinement_sieve(const std::vector<double>& levels,
                                 const StepWeight& weight) {
  std::vector<double> knots;
  for (double p : levels)
    if (p > 0.0 && p < 1.0) knots.push_back(p);
  for (double b : weight.breaks())
    if (b > 0.0 && b < 1.0) knots.push_back(b);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end(),
                          [](double a, double b) { return b - a < 1e-12; }),
              knots.end());
  return MtrSieve(0, knots);
}

TEST_CASE("relaxation interval contains the exact interval") {
  std::mt19937 rng(20260826);
  for (int rep = 0; rep < 30; ++rep) {
    const int levels = 2 + static_cast<int>(rng() % 3);
    const auto pop = ivot_test::random_population(rng, levels, -1.0, 2.0);
    ivot::PropensityDistribution base;
    MrMoments mom;
    for (const auto& lv : pop.levels) {
      base.values.push_back(lv.p);
      base.probs.push_back(lv.prob);
      mom.levels.push_back(
          {lv.p, lv.y_treated.mean(), lv.y_untreated.mean()});
    }
    std::vector<double> shifted;
    for (double p : base.values)
      shifted.push_back(std::min(1.0, p + 0.1));
    const StepWeight w = ivot::prte_weight(base, shifted);
    const MtrSieve sieve = refinement_sieve(base.values, w);
    const BoundPair exact = ivot::bound_discrete_population(pop, w);
    const BoundPair relaxed =
        ivot::solve_mr_bounds(mom, w, sieve, pop.y_min, pop.y_max);
    CHECK(relaxed.lower <= exact.lower + 1e-7);
    CHECK(relaxed.upper >= exact.upper - 1e-7);
  }
}

TEST_CASE("enlarging the sieve degree never shrinks the interval") {
  // Moments generated by linear response functions inside [0, 1], so the
  // system is feasible for every polynomial degree.
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 3; ++rep) {
    const double a1 = 0.3 + 0.3 * unif(rng), b1 = -0.2 + 0.5 * unif(rng);
    const double a0 = 0.1 + 0.3 * unif(rng), b0 = -0.1 + 0.4 * unif(rng);
    std::vector<double> ps = {0.15 + 0.2 * unif(rng), 0.55 + 0.2 * unif(rng)};
    ivot::PropensityDistribution base;
    base.values = ps;
    base.probs = {0.5, 0.5};
    MrMoments mom;
    for (double p : ps)
      mom.levels.push_back(
          {p, a1 + b1 * p / 2.0, a0 + b0 * (1.0 + p) / 2.0});
    std::vector<double> shifted;
    for (double p : ps) shifted.push_back(std::min(1.0, p + 0.05));
    const StepWeight w = ivot::prte_weight(base, shifted);
    BoundPair prev{1e300, -1e300};
    bool first = true;
    for (int degree : {3, 9, 20}) {
      const BoundPair b =
          ivot::solve_mr_bounds(mom, w, MtrSieve(degree), 0.0, 1.0);
      if (!first) {
        CHECK(b.lower <= prev.lower + 1e-7);
        CHECK(b.upper >= prev.upper - 1e-7);
      }
      prev = b;
      first = false;
    }
  }
}
