#ifndef IVOT_ESTIMATION_CONT_HPP_
#define IVOT_ESTIMATION_CONT_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "ivot/estimation_dml.hpp"
#include "ivot/learners.hpp"
#include "ivot/roy_bounds.hpp"

namespace ivot {

enum class KernelKind { kEpanechnikov, kGaussian };

// Plug-in bound estimator for a continuous instrument: the bound reduces to
// an expectation over (Z, X) of three terms -- a boundary-quantile tail
// integral below the propensity support, a difference of the conditional
// mean g1(u, x) = E[Y W | p(Z,X) = u, X = x] at truncated limits, and a
// support-bound excess above the top of the propensity support.
struct ContConfig {
  // Defaults (applied when a value is <= 0, with n the full sample size):
  // bandwidth n^(-1/5), localization delta n^(-1/3), grid ceil(sqrt(n * h)).
  double bandwidth = 0.0;
  double delta = 0.0;
  int grid_m = 0;
  KernelKind kernel = KernelKind::kEpanechnikov;
  std::uint64_t seed = 1;
  std::size_t min_local = 30;  // minimum localized-subsample size
  // Propensity regression W ~ (z, x); the instrument label must parse as a
  // real number and is prepended to the covariate vector.
  LearnerSpec propensity_learner{LearnerKind::kLogistic};
  // Covariate model of the kernel-local g1 fits; the running-variable offset
  // p_hat - u_m enters as the first regressor (local-linear in u).
  LearnerSpec mean_learner{LearnerKind::kLeastSquares};
  // Per-level conditional quantile fits of the boundary complier law.
  LearnerSpec quantile_learner{LearnerKind::kPinballQuantile};
};

// Piecewise-linear-in-u conditional mean estimate: per-node covariate fits
// at u_m = m / M, evaluated by linear interpolation between adjacent nodes.
struct G1Grid {
  std::vector<double> nodes;
  std::vector<Predictor> fits;  // node value as a function of the covariates
  // Reported deterministic Lipschitz bound in u: M * max adjacent node gap
  // over the training covariate rows.
  double lipschitz = 0.0;

  double evaluate(double u, const std::vector<double>& x) const;
};

// Conditional quantile function of the boundary complier outcome law,
// estimated on a level grid and interpolated; evaluation applies a
// pool-adjacent-violators projection across levels so the interpolated
// function is monotone in the level.
struct BoundaryQuantile {
  std::vector<double> levels;   // m / M for m = 1 .. M-1
  std::vector<Predictor> fits;  // per-level conditional quantile predictors

  // Quantile at level t in [0, 1] (flat extension beyond the end levels).
  double evaluate(double t, const std::vector<double>& x) const;
  // Exact integral of the interpolated (hence piecewise linear) quantile
  // function over [t0, t1] within [0, 1].
  double integral(double t0, double t1, const std::vector<double>& x) const;
};

// In-place L2 isotonic (nondecreasing) projection by pool-adjacent-violators.
void isotonic_project(std::vector<double>& values);

// Kernel-weighted grid fit of g1 on the given fold rows; `p_hat` holds the
// estimated propensity per fold entry (same order as `fold`).  Nodes whose
// total kernel weight falls below 1e-6 inherit the nearest fitted node.
// Throws std::invalid_argument on an empty fold.
G1Grid fit_g1_grid(const Dataset& ds, const std::vector<std::size_t>& fold,
                   const std::vector<double>& p_hat, KernelKind kernel,
                   double h, int grid_m, const LearnerSpec& learner);

// Grid quantile regression of the treated outcome on the localized
// subsample { i : p_hat_i <= p_lower_hat_i + delta, w_i = 1 }; the treated
// restriction matches the boundary complier law, which conditions on
// treatment.  Throws std::invalid_argument when the localized subsample has
// fewer than `min_local` rows.
BoundaryQuantile fit_boundary_quantile(const Dataset& ds,
                                       const std::vector<std::size_t>& fold,
                                       const std::vector<double>& p_hat,
                                       const std::vector<double>& p_lower_hat,
                                       double delta, int grid_m,
                                       const LearnerSpec& learner,
                                       std::size_t min_local = 30);

// Nuisances consumed by the plug-in evaluation of one treatment arm.
struct ContNuisances {
  // Baseline propensity as a function of (z-value prepended to covariates).
  Predictor p_hat;
  // Policy value q = phi(z, x, p) of the arm's rule.
  std::function<double(const std::string&, double)> policy;
  // Conditional support boundaries of the propensity.
  std::function<double(const std::vector<double>&)> p_lower, p_upper;
  G1Grid g1;
  BoundaryQuantile quantile;
};

// Averages the three plug-in terms over the evaluation rows and returns the
// arm's [lower, upper] component bounds.  The upper side replaces the tail
// quantile level t by 1 - t and y_min by y_max.  Rows whose estimated lower
// boundary is zero contribute no tail integral and set *p_lower_zero.
BoundPair plug_in_bounds(const Dataset& ds,
                         const std::vector<std::size_t>& fold,
                         const ContNuisances& nuis, double y_min, double y_max,
                         bool* p_lower_zero = nullptr);

struct ContResult {
  BoundPair bounds;
  // True when some evaluation row had an estimated lower boundary of zero
  // (its tail integral is empty in the limit and is returned as zero).
  bool p_lower_zero = false;
  // Reported Lipschitz bounds of the two per-arm g1 fits.
  double g1_lipschitz_treated = 0.0;
  double g1_lipschitz_flipped = 0.0;
};

// Full three-fold plug-in estimator of the policy-contrast bounds for a
// continuous instrument: propensity and support boundaries on the first
// fold, g1 grid and boundary quantiles on the second, score averaging on the
// third; both treatment arms combined (the complementary arm is evaluated on
// the treatment-flipped data with the transformed rule).  Instrument labels
// must parse as real numbers.
ContResult cont_estimate(const Dataset& ds, const PolicySpec& policy,
                         const ContConfig& config);

}  // namespace ivot

#endif  // IVOT_ESTIMATION_CONT_HPP_
