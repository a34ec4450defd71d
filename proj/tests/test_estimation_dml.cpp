#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "ivot/estimation_dml.hpp"
#include "ivot/measures.hpp"
#include "ivot/roy_bounds.hpp"
#include "population_nuisance.hpp"
#include "random_population.hpp"

using ivot::BoundPair;
using ivot::Dataset;
using ivot::DiscreteLevelPopulation;
using ivot::DmlConfig;
using ivot::DmlResult;
using ivot::LevelSets;
using ivot::NuisanceSet;
using ivot::Observation;
using ivot::PolicySpec;
using ivot::Side;
using ivot_test::level_name;
using ivot_test::mirror_population;
using ivot_test::negate_population;
using ivot_test::population_expectation;
using ivot_test::population_levels;
using ivot_test::population_nuisances;
using ivot_test::random_population;
using ivot_test::sample_dataset;

namespace {

PolicySpec uniform_shift(double alpha) {
  PolicySpec p;
  p.kind = PolicySpec::Kind::kUniformShift;
  p.alpha = alpha;
  return p;
}

// The policy-contrast weight implied by a population and a policy.
ivot::StepWeight population_weight(const DiscreteLevelPopulation& pop,
                                   const PolicySpec& policy) {
  ivot::PropensityDistribution base;
  std::vector<double> targets;
  for (std::size_t k = 0; k < pop.levels.size(); ++k) {
    base.values.push_back(pop.levels[k].p);
    base.probs.push_back(pop.levels[k].prob);
    targets.push_back(policy.apply(level_name(k), pop.levels[k].p));
  }
  return ivot::prte_weight(base, targets);
}

// All four population-exact score expectations (treated/flipped-arm, each
// side) for a continuous-outcome population.
struct ScoreMoments {
  double treated_lower, treated_upper, flipped_lower, flipped_upper;
};

ScoreMoments continuous_score_moments(const DiscreteLevelPopulation& pop,
                                      const PolicySpec& policy) {
  ScoreMoments m{};
  auto one_arm = [](const DiscreteLevelPopulation& p, const PolicySpec& pol,
                    double* lower, double* upper) {
    LevelSets lv = population_levels(p, pol);
    NuisanceSet low = population_nuisances(p, lv, pol, false);
    *lower = population_expectation(p, [&](const Observation& o) {
      return ivot::score_continuous_outcome(o, low, lv, p.y_min, p.y_max);
    });
    DiscreteLevelPopulation pn = negate_population(p);
    NuisanceSet high = population_nuisances(pn, lv, pol, false);
    *upper = -population_expectation(pn, [&](const Observation& o) {
      return ivot::score_continuous_outcome(o, high, lv, pn.y_min, pn.y_max);
    });
  };
  one_arm(pop, policy, &m.treated_lower, &m.treated_upper);
  const DiscreteLevelPopulation mir = mirror_population(pop);
  const PolicySpec mir_policy = uniform_shift(-policy.alpha);
  one_arm(mir, mir_policy, &m.flipped_lower, &m.flipped_upper);
  return m;
}

// Minimum pairwise distance among all baseline and policy values; the exact
// moment comparison needs the level geometry to be unambiguous.
double min_value_gap(const DiscreteLevelPopulation& pop,
                     const PolicySpec& policy) {
  std::vector<double> v;
  for (std::size_t k = 0; k < pop.levels.size(); ++k) {
    v.push_back(pop.levels[k].p);
    v.push_back(policy.apply(level_name(k), pop.levels[k].p));
  }
  std::sort(v.begin(), v.end());
  double g = 1.0;
  for (std::size_t i = 1; i < v.size(); ++i) g = std::min(g, v[i] - v[i - 1]);
  return g;
}

// A fixed two-level population with well-separated levels, built from
// per-gap complier laws so that level differencing is exact.
DiscreteLevelPopulation two_level_population(double y_min, double y_max,
                                             unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto random_law = [&](int atoms) {
    std::vector<double> a, w;
    for (int i = 0; i < atoms; ++i) {
      a.push_back(y_min + (y_max - y_min) * unif(rng));
      w.push_back(0.2 + unif(rng));
    }
    return ivot::EmpiricalMeasure(a, w).normalized();
  };
  const double p0 = 0.25, p1 = 0.75;
  std::vector<ivot::EmpiricalMeasure> mu1 = {random_law(3), random_law(3),
                                             random_law(2)};
  std::vector<ivot::EmpiricalMeasure> mu0 = {random_law(2), random_law(3),
                                             random_law(3)};
  auto sam = [](const ivot::EmpiricalMeasure& m) {
    return ivot::SignedAtomMeasure(m.atoms(), m.weights());
  };
  DiscreteLevelPopulation pop;
  pop.y_min = y_min;
  pop.y_max = y_max;
  {
    DiscreteLevelPopulation::Level lvl;
    lvl.p = p0;
    lvl.prob = 0.5;
    lvl.y_treated = mu1[0];
    ivot::SignedAtomMeasure c =
        sam(mu0[1]).scaled(p1 - p0).axpy(1.0 - p1, sam(mu0[2]));
    lvl.y_untreated =
        ivot::EmpiricalMeasure(c.atoms(), c.weights()).normalized();
    pop.levels.push_back(lvl);
  }
  {
    DiscreteLevelPopulation::Level lvl;
    lvl.p = p1;
    lvl.prob = 0.5;
    ivot::SignedAtomMeasure c =
        sam(mu1[0]).scaled(p0).axpy(p1 - p0, sam(mu1[1]));
    lvl.y_treated = ivot::EmpiricalMeasure(c.atoms(), c.weights()).normalized();
    lvl.y_untreated = mu0[2];
    pop.levels.push_back(lvl);
  }
  return pop;
}

// A two-level binary-outcome population (atoms {0, 1}) with exact nesting.
DiscreteLevelPopulation binary_two_level_population() {
  auto bern = [](double r) {
    return ivot::EmpiricalMeasure({0.0, 1.0}, {1.0 - r, r});
  };
  const double p0 = 0.3, p1 = 0.7;
  // Per-gap treated one-rates 0.2 / 0.6 / - and untreated - / 0.5 / 0.8.
  DiscreteLevelPopulation pop;
  pop.y_min = 0.0;
  pop.y_max = 1.0;
  {
    DiscreteLevelPopulation::Level lvl;
    lvl.p = p0;
    lvl.prob = 0.45;
    lvl.y_treated = bern(0.2);
    lvl.y_untreated = bern(((p1 - p0) * 0.5 + (1.0 - p1) * 0.8) / (1.0 - p0));
    pop.levels.push_back(lvl);
  }
  {
    DiscreteLevelPopulation::Level lvl;
    lvl.p = p1;
    lvl.prob = 0.55;
    lvl.y_treated = bern((p0 * 0.2 + (p1 - p0) * 0.6) / p1);
    lvl.y_untreated = bern(0.8);
    pop.levels.push_back(lvl);
  }
  return pop;
}

}  // namespace

TEST_CASE("policy rules clip into the unit interval and report flat "
          "derivatives where clipped") {
  PolicySpec up = uniform_shift(0.4);
  CHECK(up.apply("z", 0.3) == doctest::Approx(0.7));
  CHECK(up.apply("z", 0.8) == doctest::Approx(1.0));
  CHECK(up.derivative("z", 0.3) == 1.0);
  CHECK(up.derivative("z", 0.8) == 0.0);

  PolicySpec prop;
  prop.kind = PolicySpec::Kind::kProportional;
  prop.alpha = 0.5;
  CHECK(prop.apply("z", 0.4) == doctest::Approx(0.6));
  CHECK(prop.derivative("z", 0.4) == doctest::Approx(1.5));
  CHECK(prop.apply("z", 0.8) == doctest::Approx(1.0));
  CHECK(prop.derivative("z", 0.8) == 0.0);

  PolicySpec ex;
  ex.kind = PolicySpec::Kind::kExplicitLevels;
  ex.targets["a"] = 0.9;
  CHECK(ex.apply("a", 0.2) == doctest::Approx(0.9));
  CHECK(ex.derivative("a", 0.2) == 0.0);
}

TEST_CASE("scalar quantile solve matches the weighted quantile convention") {
  std::vector<double> y = {3.0, 1.0, 4.0, 2.0};
  std::vector<double> omega = {1.0, 1.0, 1.0, 1.0};
  // Subgradient (1/n)#{y < v} - target crosses zero at the tau-quantile;
  // flat stretches resolve to the smallest minimizer.
  CHECK(ivot::quantile_nuisance_scalar(y, omega, 0.5) == 2.0);
  CHECK(ivot::quantile_nuisance_scalar(y, omega, 0.6) == 3.0);
  CHECK(ivot::quantile_nuisance_scalar(y, omega, 0.26) == 2.0);
  // Zero target: the smallest supported value.
  CHECK(ivot::quantile_nuisance_scalar(y, omega, 0.0) == 1.0);
  // Constant outcomes give the constant at every level.
  std::vector<double> yc = {2.5, 2.5, 2.5};
  std::vector<double> oc = {1.0, 1.0, 1.0};
  CHECK(ivot::quantile_nuisance_scalar(yc, oc, 0.4) == 2.5);
  // Rows with zero weight are ignored.
  std::vector<double> y2 = {0.0, 5.0, 6.0};
  std::vector<double> o2 = {0.0, 1.0, 1.0};
  CHECK(ivot::quantile_nuisance_scalar(y2, o2, 0.0) == 5.0);
}

TEST_CASE("monotone rearrangement sorts a level profile") {
  CHECK(ivot::monotone_rearrange({0.3, 0.1, 0.2}) ==
        std::vector<double>{0.1, 0.2, 0.3});
}

TEST_CASE("rearrangement is a contraction toward any monotone profile") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> truth(5), est(5);
    for (double& v : truth) v = unif(rng);
    std::sort(truth.begin(), truth.end());
    for (std::size_t i = 0; i < est.size(); ++i)
      est[i] = truth[i] + 0.5 * (unif(rng) - 0.5);
    std::vector<double> sorted = ivot::monotone_rearrange(est);
    double d_raw = 0.0, d_sorted = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      d_raw += (est[i] - truth[i]) * (est[i] - truth[i]);
      d_sorted += (sorted[i] - truth[i]) * (sorted[i] - truth[i]);
    }
    CHECK(d_sorted <= d_raw + 1e-15);
  }
}

TEST_CASE("level clustering groups coinciding values and indexes policy "
          "sub-levels") {
  std::map<std::string, double> p = {{"a", 0.3}, {"b", 0.7}};
  std::map<std::string, double> q = {{"a", 0.45}, {"b", 0.7}};
  LevelSets lv = ivot::cluster_levels({"a", "b"}, p, q, 0.05);
  // Origin level plus the two baseline levels.
  REQUIRE(lv.levels.size() == 3);
  CHECK(lv.levels[0].p == doctest::Approx(0.0));
  CHECK(lv.levels[0].s_members.empty());
  CHECK(lv.s_index.at("a") == 1);
  CHECK(lv.s_index.at("b") == 2);
  // q("a") is a sub-level inside [0.3, 0.7); q("b") coincides with its level.
  CHECK(lv.q_index.at("a") == std::pair<int, int>{1, 1});
  CHECK(lv.q_index.at("b") == std::pair<int, int>{2, 0});
  REQUIRE(lv.levels[1].subs.size() == 1);
  CHECK(lv.levels[1].subs[0].q == doctest::Approx(0.45));

  // A shift pushing past the top level lands in the tail region.
  std::map<std::string, double> q2 = {{"a", 0.35}, {"b", 0.75}};
  LevelSets lv2 = ivot::cluster_levels({"a", "b"}, p, q2, 0.05);
  CHECK(lv2.q_index.at("b") == std::pair<int, int>{2, 1});

  // Identical baseline values merge into a single level set.
  std::map<std::string, double> p3 = {{"a", 0.5}, {"b", 0.5}};
  std::map<std::string, double> q3 = {{"a", 0.5}, {"b", 0.5}};
  LevelSets lv3 = ivot::cluster_levels({"a", "b"}, p3, q3, 0.05);
  REQUIRE(lv3.levels.size() == 2);
  CHECK(lv3.levels[1].s_members.size() == 2);

  // A chained cluster spanning more than c_gap is ambiguous.
  std::map<std::string, double> pbad = {{"a", 0.30},
                                        {"b", 0.32},
                                        {"c", 0.34},
                                        {"d", 0.36},
                                        {"e", 0.38}};
  CHECK_THROWS_AS(
      ivot::cluster_levels({"a", "b", "c", "d", "e"}, pbad, pbad, 0.05),
      std::invalid_argument);
}

TEST_CASE("binary partial-mass function matches the worked example") {
  // h = max(0, q_j - max(q_{j-1}, p_{k+1} - J_full)) at q_j = 0.4,
  // q_{j-1} = 0.3, p_{k+1} = 0.5, J_full = 0.15.
  const double h = std::max(0.0, 0.4 - std::max(0.3, 0.5 - 0.15));
  CHECK(h == doctest::Approx(0.05));
  // The score reproduces it through a population where those values arise:
  // handled by the closed-form oracle below; here we pin the formula itself.
}

TEST_CASE("population score moments reproduce the closed-form bounds for "
          "continuous outcomes") {
  std::mt19937 rng(314159);
  int done = 0;
  for (unsigned seed = 1; done < 8 && seed < 40; ++seed) {
    std::mt19937 pop_rng(seed);
    const int num_levels = 2 + static_cast<int>(seed % 3);
    DiscreteLevelPopulation pop =
        random_population(pop_rng, num_levels, -1.0, 2.0);
    const double alpha = (seed % 2 == 0) ? 0.031 : -0.043;
    PolicySpec policy = uniform_shift(alpha);
    if (min_value_gap(pop, policy) < 1e-4) continue;  // ambiguous geometry
    ++done;

    BoundPair treated, untreated;
    ivot::bound_discrete_population_components(
        pop, population_weight(pop, policy), &treated, &untreated);
    ScoreMoments m = continuous_score_moments(pop, policy);
    CHECK(std::abs(m.treated_lower - treated.lower) < 1e-9);
    CHECK(std::abs(m.treated_upper - treated.upper) < 1e-9);
    // The flipped-arm canonical moments are the negated untreated-arm
    // component bounds.
    CHECK(std::abs(m.flipped_lower + untreated.upper) < 1e-9);
    CHECK(std::abs(m.flipped_upper + untreated.lower) < 1e-9);
    // Summing the arms gives the policy-contrast bounds.
    BoundPair full = ivot::bound_discrete_population(
        pop, population_weight(pop, policy));
    CHECK(std::abs(m.treated_lower + m.flipped_lower - full.lower) < 1e-9);
    CHECK(std::abs(m.treated_upper + m.flipped_upper - full.upper) < 1e-9);
  }
  CHECK(done == 8);
  (void)rng;
}

TEST_CASE("population score moments reproduce the closed-form bounds for "
          "binary outcomes") {
  DiscreteLevelPopulation pop = binary_two_level_population();
  for (double alpha : {0.05, 0.12, -0.08}) {
    PolicySpec policy = uniform_shift(alpha);
    BoundPair treated, untreated;
    ivot::bound_discrete_population_components(
        pop, population_weight(pop, policy), &treated, &untreated);

    auto arm_moments = [](const DiscreteLevelPopulation& p,
                          const PolicySpec& pol, double* lo, double* hi) {
      LevelSets lv = population_levels(p, pol);
      NuisanceSet nuis = population_nuisances(p, lv, pol, true);
      *lo = population_expectation(p, [&](const Observation& o) {
        return ivot::score_binary(o, nuis, lv, Side::kLower, p.y_min, p.y_max);
      });
      *hi = population_expectation(p, [&](const Observation& o) {
        return ivot::score_binary(o, nuis, lv, Side::kUpper, p.y_min, p.y_max);
      });
    };
    double tl, tu, fl, fu;
    arm_moments(pop, policy, &tl, &tu);
    arm_moments(mirror_population(pop), uniform_shift(-alpha), &fl, &fu);
    CHECK(std::abs(tl - treated.lower) < 1e-9);
    CHECK(std::abs(tu - treated.upper) < 1e-9);
    CHECK(std::abs(fl + untreated.upper) < 1e-9);
    CHECK(std::abs(fu + untreated.lower) < 1e-9);
  }
}

TEST_CASE("score means are second-order insensitive to joint nuisance "
          "perturbations") {
  // Continuous-outcome population: the orthogonality argument for the
  // quantile thresholds needs a positive outcome density at the thresholds,
  // so the mean is computed exactly against uniform conditional laws rather
  // than atom laws.
  ivot_test::UniformOutcomePopulation pop;
  pop.levels = {{0.25, 0.5}, {0.75, 0.5}};
  PolicySpec policy = uniform_shift(0.07);
  LevelSets lv = ivot_test::uniform_population_levels(pop, policy);
  NuisanceSet truth = ivot_test::uniform_population_nuisances(pop, lv, policy);

  // The score is piecewise linear in y with breakpoints at the outcome
  // thresholds, so segment-midpoint integration is exact.
  auto breakpoints = [](const NuisanceSet& n) {
    std::vector<double> b;
    for (const auto& I : n.intervals)
      for (const auto& f : I.nu) b.push_back(f({}));
    return b;
  };
  auto mean_score = [&](const NuisanceSet& n) {
    return ivot_test::uniform_population_expectation(
        pop, breakpoints(n), [&](const Observation& o) {
          return ivot::score_continuous_outcome(o, n, lv, pop.y_min,
                                                pop.y_max);
        });
  };
  const double base = mean_score(truth);
  // The exact mean at the true nuisances matches the closed-form bound of a
  // fine discretization of the same population.
  DiscreteLevelPopulation dpop =
      ivot_test::discretize_uniform_population(pop, 4000);
  BoundPair treated, untreated;
  ivot::bound_discrete_population_components(
      dpop, population_weight(dpop, policy), &treated, &untreated);
  CHECK(std::abs(base - treated.lower) < 1e-4);

  // Perturbation in the direction of a joint estimation error of every
  // nuisance.  A propensity error propagates through the policy rule
  // (q' = phi(p'), dphi' = phi'(p')) and into every place the same
  // propensity enters: the interval endpoints, the sub-level policy values,
  // and the top level.  The remaining nuisances move in fixed directions.
  auto perturbed = [&](double t) {
    NuisanceSet n = truth;
    std::map<std::string, double> dp = {{"z0", 0.21}, {"z1", -0.17}};
    for (auto& [z, f] : n.p_z) {
      const double pv = truth.p_z.at(z)({}) + t * dp.at(z);
      f = ivot_test::cpred(pv);
      n.q_z[z] = ivot_test::cpred(policy.apply(z, pv));
      n.dphi_z[z] = ivot_test::cpred(policy.derivative(z, pv));
      n.pi_z[z] = ivot_test::cpred(truth.pi_z.at(z)({}) * (1.0 + 0.3 * t));
    }
    auto bump = [&](ivot::Predictor& f, double d) {
      const double v = f({}) + t * d;
      f = ivot_test::cpred(v);
    };
    for (std::size_t k = 0; k < n.intervals.size(); ++k) {
      auto& I = n.intervals[k];
      const std::string z_lo = k == 0 ? "" : level_name(k - 1);
      const std::string z_hi = level_name(k);
      if (!z_lo.empty()) I.p_lo = n.p_z.at(z_lo);
      I.p_hi = n.p_z.at(z_hi);
      if (!z_lo.empty()) bump(I.pi_lo, 0.09);
      bump(I.pi_hi, -0.06);
      bump(I.gamma_full, 0.13);
      for (auto& s : I.subs) bump(s.gamma, -0.11);
      if (!I.subs.empty()) {
        // The sub-level value is the policy value of z0 and must follow it.
        I.subs[0].q = n.q_z.at("z0");
      }
      bump(I.Jfull_hi, 0.19);
      if (!z_lo.empty()) bump(I.Jfull_lo, -0.23);
      for (auto& f : I.M_hi) bump(f, 0.07);
      if (!z_lo.empty())
        for (auto& f : I.M_lo) bump(f, -0.05);
      for (auto& f : I.Jband_hi) bump(f, 0.08);
      if (!z_lo.empty())
        for (auto& f : I.Jband_lo) bump(f, 0.04);
      for (auto& f : I.nu) bump(f, 0.045);
    }
    n.p_top = n.p_z.at(level_name(pop.levels.size() - 1));
    bump(n.pi_top, -0.06);
    bump(n.gamma_top, 0.05);
    return n;
  };

  std::vector<double> devs;
  for (double t : {1e-1, 1e-2, 1e-3}) {
    devs.push_back(std::abs(mean_score(perturbed(t)) - base));
  }
  REQUIRE(devs[0] > 1e-12);  // the direction is not degenerate
  const double slope1 = std::log10(devs[0] / devs[1]);
  const double slope2 = std::log10(devs[1] / devs[2]);
  CHECK(slope1 >= 1.8);
  CHECK(slope2 >= 1.8);
}

TEST_CASE("binary score means are second-order insensitive to joint "
          "nuisance perturbations") {
  DiscreteLevelPopulation pop = binary_two_level_population();
  PolicySpec policy = uniform_shift(0.07);
  LevelSets lv = population_levels(pop, policy);
  NuisanceSet truth = population_nuisances(pop, lv, policy, true);

  for (Side side : {Side::kLower, Side::kUpper}) {
    auto mean_score = [&](const NuisanceSet& n) {
      return population_expectation(pop, [&](const Observation& o) {
        return ivot::score_binary(o, n, lv, side, pop.y_min, pop.y_max);
      });
    };
    const double base = mean_score(truth);
    auto perturbed = [&](double t) {
      NuisanceSet n = truth;
      std::map<std::string, double> dp = {{"z0", 0.21}, {"z1", -0.17}};
      for (auto& [z, f] : n.p_z) {
        const double pv = truth.p_z.at(z)({}) + t * dp.at(z);
        f = ivot_test::cpred(pv);
        n.q_z[z] = ivot_test::cpred(policy.apply(z, pv));
        n.dphi_z[z] = ivot_test::cpred(policy.derivative(z, pv));
        n.pi_z[z] = ivot_test::cpred(truth.pi_z.at(z)({}) * (1.0 + 0.3 * t));
      }
      auto bump = [&](ivot::Predictor& f, double d) {
        const double v = f({}) + t * d;
        f = ivot_test::cpred(v);
      };
      for (std::size_t k = 0; k < n.intervals.size(); ++k) {
        auto& I = n.intervals[k];
        const std::string z_lo = k == 0 ? "" : level_name(k - 1);
        const std::string z_hi = level_name(k);
        if (!z_lo.empty()) I.p_lo = n.p_z.at(z_lo);
        I.p_hi = n.p_z.at(z_hi);
        if (!z_lo.empty()) bump(I.pi_lo, 0.09);
        bump(I.pi_hi, -0.06);
        bump(I.gamma_full, 0.13);
        for (auto& s : I.subs) bump(s.gamma, -0.11);
        if (!I.subs.empty()) I.subs[0].q = n.q_z.at("z0");
        bump(I.P1_hi, 0.19);
        if (!z_lo.empty()) bump(I.P1_lo, -0.23);
      }
      n.p_top = n.p_z.at(level_name(pop.levels.size() - 1));
      bump(n.pi_top, -0.06);
      bump(n.gamma_top, 0.05);
      return n;
    };
    std::vector<double> devs;
    for (double t : {1e-1, 1e-2, 1e-3}) {
      devs.push_back(std::abs(mean_score(perturbed(t)) - base));
    }
    REQUIRE(devs[0] > 1e-12);
    CHECK(std::log10(devs[0] / devs[1]) >= 1.8);
    CHECK(std::log10(devs[1] / devs[2]) >= 1.8);
  }
}

TEST_CASE("null policy produces exactly zero estimates") {
  DiscreteLevelPopulation pop = two_level_population(-1.0, 2.0, 3);
  std::mt19937 rng(99);
  Dataset ds = ivot_test::sample_dataset(pop, 1200, rng);
  DmlConfig cfg;
  cfg.seed = 5;
  DmlResult r = ivot::dml_estimate(ds, uniform_shift(0.0), cfg);
  CHECK(r.lower.point == 0.0);
  CHECK(r.upper.point == 0.0);
  CHECK(r.lower.se == 0.0);
  CHECK(r.upper.se == 0.0);

  DiscreteLevelPopulation bpop = binary_two_level_population();
  Dataset bds = ivot_test::sample_dataset(bpop, 1200, rng);
  DmlConfig bcfg;
  bcfg.binary_outcome = true;
  DmlResult rb = ivot::dml_estimate(bds, uniform_shift(0.0), bcfg);
  CHECK(rb.lower.point == 0.0);
  CHECK(rb.upper.point == 0.0);
}

TEST_CASE("constant outcomes give width-zero estimates at the weight mass") {
  DiscreteLevelPopulation pop = two_level_population(-1.0, 2.0, 3);
  std::mt19937 rng(17);
  Dataset ds = ivot_test::sample_dataset(pop, 4000, rng);
  const double c = 0.6;
  for (double& y : ds.y) y = c;
  ds.y_min = 0.0;
  ds.y_max = 1.0;
  // Policy values strictly inside the attained propensity range: no
  // unidentified mass, so both bounds equal c times the estimated weight
  // mass integral(omega) = E[q - p].
  PolicySpec policy;
  policy.kind = PolicySpec::Kind::kExplicitLevels;
  policy.targets["z0"] = 0.45;
  policy.targets["z1"] = 0.60;
  DmlConfig cfg;
  DmlResult r = ivot::dml_estimate(ds, policy, cfg);
  const double expected = c * (0.5 * (0.45 - 0.25) + 0.5 * (0.60 - 0.75));
  CHECK(r.upper.point - r.lower.point < 1e-9);
  CHECK(std::abs(r.lower.point - expected) < 0.02);
}

TEST_CASE("debiased estimates recover the population bounds and shrink at "
          "the root-n rate") {
  // Continuous conditional outcome laws: the fitted quantile thresholds are
  // root-n consistent only where the outcome density is positive, so the
  // rate check uses the uniform-outcome population (truth obtained from a
  // fine shared-grid discretization, error O(1/atoms)).
  ivot_test::UniformOutcomePopulation pop;
  pop.levels = {{0.25, 0.5}, {0.75, 0.5}};
  pop.slope0 = 0.5;
  pop.shift0 = -0.1;
  PolicySpec policy = uniform_shift(0.05);
  DiscreteLevelPopulation dpop =
      ivot_test::discretize_uniform_population(pop, 4000);
  BoundPair truth =
      ivot::bound_discrete_population(dpop, population_weight(dpop, policy));

  DmlConfig cfg;
  cfg.seed = 42;
  // The plug-in se is itself a noisy estimate at these sample sizes, so the
  // rate comparison averages it over independent replications.
  const int reps = 5;
  double se_lo_s = 0.0, se_up_s = 0.0, se_lo_l = 0.0, se_up_l = 0.0;
  DmlResult rs, rl;
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937 rng(123 + static_cast<unsigned>(rep));
    Dataset small = ivot_test::sample_uniform_dataset(pop, 4000, rng);
    Dataset large = ivot_test::sample_uniform_dataset(pop, 16000, rng);
    rs = ivot::dml_estimate(small, policy, cfg);
    rl = ivot::dml_estimate(large, policy, cfg);
    CHECK(std::abs(rl.lower.point - truth.lower) <=
          std::max(4.0 * rl.lower.se, 0.005));
    CHECK(std::abs(rl.upper.point - truth.upper) <=
          std::max(4.0 * rl.upper.se, 0.005));
    CHECK(rl.lower.point <= rl.upper.point);
    CHECK(rs.lower.se > 0.0);
    CHECK(rs.upper.se > 0.0);
    se_lo_s += rs.lower.se;
    se_up_s += rs.upper.se;
    se_lo_l += rl.lower.se;
    se_up_l += rl.upper.se;
  }
  // Quadrupling n halves the standard error (ratio within 20% on average).
  CHECK(se_lo_s / se_lo_l == doctest::Approx(2.0).epsilon(0.2));
  CHECK(se_up_s / se_up_l == doctest::Approx(2.0).epsilon(0.2));
  // CI arithmetic.
  CHECK(rl.lower.ci95.first ==
        doctest::Approx(rl.lower.point - 1.96 * rl.lower.se));
  CHECK(rl.lower.ci95.second ==
        doctest::Approx(rl.lower.point + 1.96 * rl.lower.se));

  // Cross-fitting averages the two orientations over the full sample.
  DmlConfig cross = cfg;
  cross.cross_fit = true;
  std::mt19937 rng(123);
  Dataset small = ivot_test::sample_uniform_dataset(pop, 4000, rng);
  DmlResult rc = ivot::dml_estimate(small, policy, cross);
  CHECK(std::abs(rc.lower.point - truth.lower) <=
        std::max(4.0 * rc.lower.se, 0.01));
}

TEST_CASE("binary estimation recovers the population bounds from samples") {
  DiscreteLevelPopulation pop = binary_two_level_population();
  PolicySpec policy = uniform_shift(0.06);
  BoundPair truth =
      ivot::bound_discrete_population(pop, population_weight(pop, policy));
  std::mt19937 rng(5);
  Dataset ds = ivot_test::sample_dataset(pop, 12000, rng);
  DmlConfig cfg;
  cfg.binary_outcome = true;
  cfg.seed = 9;
  DmlResult r = ivot::dml_estimate(ds, policy, cfg);
  CHECK(std::abs(r.lower.point - truth.lower) <=
        std::max(4.0 * r.lower.se, 0.01));
  CHECK(std::abs(r.upper.point - truth.upper) <=
        std::max(4.0 * r.upper.se, 0.01));
  CHECK(r.lower.point <= r.upper.point);
}

TEST_CASE("degenerate level cells raise an insufficient-data error") {
  DiscreteLevelPopulation pop = two_level_population(-1.0, 2.0, 3);
  pop.levels[0].prob = 0.995;
  pop.levels[1].prob = 0.005;
  std::mt19937 rng(8);
  Dataset ds = ivot_test::sample_dataset(pop, 800, rng);
  DmlConfig cfg;
  CHECK_THROWS_AS(ivot::dml_estimate(ds, uniform_shift(0.05), cfg),
                  std::invalid_argument);
}
