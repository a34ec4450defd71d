#ifndef IVOT_TESTS_RANDOM_POPULATION_HPP_
#define IVOT_TESTS_RANDOM_POPULATION_HPP_

#include <algorithm>
#include <random>
#include <vector>

#include "ivot/measures.hpp"
#include "ivot/roy_bounds.hpp"

namespace ivot_test {

// A random discrete-level population with consistent complier structure
// (outcome laws generated independently per level are not always consistent:
// complier differencing may clip, so we instead build cumulative laws from
// per-gap complier laws to guarantee exact nesting).
inline ivot::DiscreteLevelPopulation random_population(std::mt19937& rng,
                                                       int num_levels,
                                                       double y_min,
                                                       double y_max) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ivot::DiscreteLevelPopulation pop;
  pop.y_min = y_min;
  pop.y_max = y_max;
  // Ascending propensity levels in (0.05, 0.95).
  std::vector<double> ps;
  for (int k = 0; k < num_levels; ++k) ps.push_back(0.05 + 0.8 * unif(rng));
  std::sort(ps.begin(), ps.end());
  for (std::size_t k = 1; k < ps.size(); ++k) {
    if (ps[k] - ps[k - 1] < 0.02) ps[k] = ps[k - 1] + 0.02;
  }
  auto random_law = [&](int atoms) {
    std::vector<double> a, w;
    for (int i = 0; i < atoms; ++i) {
      a.push_back(y_min + (y_max - y_min) * unif(rng));
      w.push_back(0.05 + unif(rng));
    }
    return ivot::EmpiricalMeasure(a, w).normalized();
  };
  // Per-gap treated/untreated complier laws; cumulate them into the level
  // conditional laws so that differencing is exact (no clipping).
  std::vector<ivot::EmpiricalMeasure> mu1, mu0;
  for (int g = 0; g <= num_levels; ++g) {
    mu1.push_back(random_law(2 + static_cast<int>(rng() % 3)));
    mu0.push_back(random_law(2 + static_cast<int>(rng() % 3)));
  }
  double prev_p = 0.0;
  ivot::SignedAtomMeasure cum1;  // running p_k * F_{1,k}
  for (int k = 0; k < num_levels; ++k) {
    const double p = ps[static_cast<std::size_t>(k)];
    cum1 = cum1.axpy(
        p - prev_p,
        ivot::SignedAtomMeasure(mu1[static_cast<std::size_t>(k)].atoms(),
                                mu1[static_cast<std::size_t>(k)].weights()));
    // Untreated law at level k: mixture of the untreated complier laws on
    // (p_k, 1], i.e. gaps k+1..K and the tail, with lengths as weights.
    ivot::SignedAtomMeasure cum0;
    double upper_prev = p;
    for (int g = k + 1; g <= num_levels; ++g) {
      const double upper =
          g < num_levels ? ps[static_cast<std::size_t>(g)] : 1.0;
      cum0 = cum0.axpy(
          upper - upper_prev,
          ivot::SignedAtomMeasure(mu0[static_cast<std::size_t>(g)].atoms(),
                                  mu0[static_cast<std::size_t>(g)].weights()));
      upper_prev = upper;
    }
    ivot::DiscreteLevelPopulation::Level lvl;
    lvl.p = p;
    lvl.prob = 1.0 / num_levels;
    lvl.y_treated =
        ivot::EmpiricalMeasure(cum1.atoms(), cum1.weights()).normalized();
    lvl.y_untreated =
        ivot::EmpiricalMeasure(cum0.atoms(), cum0.weights()).normalized();
    pop.levels.push_back(lvl);
    prev_p = p;
  }
  return pop;
}

}  // namespace ivot_test

#endif  // IVOT_TESTS_RANDOM_POPULATION_HPP_
