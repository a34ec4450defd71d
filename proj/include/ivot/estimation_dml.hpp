#ifndef IVOT_ESTIMATION_DML_HPP_
#define IVOT_ESTIMATION_DML_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ivot/learners.hpp"
#include "ivot/roy_bounds.hpp"

namespace ivot {

// Observational sample of (outcome, treatment, instrument, covariates) with
// a declared outcome support.
struct Dataset {
  std::vector<double> y;
  std::vector<int> w;  // 0/1 treatment indicator
  std::vector<std::string> z;
  std::vector<std::vector<double>> x;  // per-row covariates (may be empty)
  double y_min = 0.0;
  double y_max = 1.0;

  std::size_t size() const { return y.size(); }
  // Throws std::invalid_argument on shape or range violations.
  void validate() const;
};

// A counterfactual assignment rule q(z, x) = phi(z, x, p(z, x)) mapping the
// baseline propensity to the alternative-policy propensity.
struct PolicySpec {
  enum class Kind {
    kUniformShift,    // q = clip(p + alpha, 0, 1)
    kProportional,    // q = clip((1 + alpha) p, 0, 1)
    kExplicitLevels,  // q = targets.at(z), independent of p
  };
  Kind kind = Kind::kUniformShift;
  double alpha = 0.0;
  std::map<std::string, double> targets;

  double apply(const std::string& z, double p) const;
  // d phi / d p at the baseline propensity (0 in clipped regions).
  double derivative(const std::string& z, double p) const;
};

// Instrument level sets: baseline clusters S_k with values p_k and the
// alternative-policy values grouped into the baseline intervals.
struct LevelSets {
  struct SubLevel {
    double q = 0.0;                     // q_{j,k}
    std::vector<std::string> members;   // T_{j,k}
  };
  struct Level {
    double p = 0.0;
    std::vector<std::string> s_members;   // S_k; empty for the zero level
    std::vector<std::string> at_level;    // T_{0,k}: q equal to p_k
    std::vector<SubLevel> subs;           // T_{j,k}, j >= 1, ascending q
  };
  // Ascending in p; levels[0] is the latent-interval origin p = 0 (it has
  // instrument members only when some baseline cluster sits at zero).
  std::vector<Level> levels;
  // Per-instrument lookup: baseline level index (>= 1 unless the baseline
  // cluster is at zero), and (interval index, sub index) of the policy value
  // where sub index 0 means the value coincides with the level itself.
  std::map<std::string, int> s_index;
  std::map<std::string, std::pair<int, int>> q_index;

  int top() const { return static_cast<int>(levels.size()) - 1; }
};

// Single-linkage clustering of the marginal baseline/policy values at radius
// c_gap / 2, joint over both value families so that coinciding baseline and
// policy levels land in the same cluster.  Throws std::invalid_argument when
// two resulting cluster centers are closer than c_gap / 2 (ambiguous
// clustering) or when a cluster mixes values further apart than c_gap.
LevelSets cluster_levels(const std::vector<std::string>& instruments,
                         const std::map<std::string, double>& p_bar,
                         const std::map<std::string, double>& q_bar,
                         double c_gap);

// Fitted nuisance functions.  Every component is an arbitrary callable on
// the covariate vector, so population oracles can be injected in tests.
using Predictor = std::function<double(const std::vector<double>&)>;

struct NuisanceSet {
  struct Sub {
    Predictor q;      // q_{j,k}(x)
    Predictor gamma;  // gamma_{j,k}(x) = P(Z in union_{l>=j} T_{l,k} | x)
  };
  struct Interval {
    Predictor p_lo, p_hi;    // p_k(x), p_{k+1}(x)
    Predictor pi_lo, pi_hi;  // P(Z in S_k | x), P(Z in S_{k+1} | x), clipped
    Predictor gamma_full;
    std::vector<Sub> subs;  // j = 1..l_k
    // Binary outcome: P_{1,k}(x) = E[YW | Z in S_k, x] (rearranged).
    Predictor P1_lo, P1_hi;
    // Continuous outcome: boundary quantiles and band expectations, both
    // conditional on treatment within the level set.
    std::vector<Predictor> nu;             // j = 0..l_k
    std::vector<Predictor> M_lo, M_hi;     // P(Y < nu_j | W=1, S_k / S_{k+1})
    std::vector<Predictor> Jband_lo, Jband_hi;  // E[Y 1(nu_j <= Y < nu_{j+1}) | W=1, .]
    Predictor Jfull_lo, Jfull_hi;          // E[Y | W=1, S_k / S_{k+1}]
  };
  std::vector<Interval> intervals;  // one per latent interval k = 0..K-1
  Predictor gamma_top;              // gamma_K(x)
  Predictor p_top, pi_top;          // p_K(x), P(Z in S_K | x)
  std::map<std::string, Predictor> p_z, pi_z, q_z, dphi_z;  // per instrument
};

struct EstimateWithCI {
  double point = 0.0;
  double se = 0.0;
  std::pair<double, double> ci95{0.0, 0.0};
};

struct DmlConfig {
  double c_gap = 0.05;
  double c_pi = 0.01;
  std::size_t min_cell = 30;
  std::uint64_t seed = 1;
  bool binary_outcome = false;
  bool cross_fit = false;
  LearnerSpec learner{};  // used for every conditional-mean nuisance
};

struct DmlResult {
  EstimateWithCI lower, upper;
  // True when a fitted level-set probability fell below the clip floor on
  // some training covariate.
  bool pi_clipped = false;
};

// Exact minimizer of the scalar check-type objective
//   (1/n) sum_i omega_i max(0, v - y_i) - target * v
// over the sample values, ties broken to the lowest value.
double quantile_nuisance_scalar(const std::vector<double>& y,
                                const std::vector<double>& omega,
                                double target);

// Sorts the values ascending: the L2 projection of a level profile onto
// monotone profiles, which never increases the distance to any monotone
// target (used for the P_{1,k} levels).
std::vector<double> monotone_rearrange(std::vector<double> values);

// One observation, as consumed by the score evaluators.
struct Observation {
  double y = 0.0;
  int w = 0;
  std::string z;
  std::vector<double> x;
};

// Neyman-orthogonal score for the treated-arm lower bound with a binary
// outcome; Side::kUpper evaluates the mirrored score (integration from the
// lower interval endpoint upward, y_max in the tail term).
double score_binary(const Observation& obs, const NuisanceSet& nuis,
                    const LevelSets& levels, Side side, double y_min,
                    double y_max);

// Neyman-orthogonal score for the treated-arm lower bound with a continuous
// outcome.  The evaluator implements the lower-side formula only: the upper
// bound of an outcome Y is obtained by scoring the sign-flipped problem
// (Y -> -Y, support negated and swapped) and negating the result, which is
// how dml_estimate composes it.
double score_continuous_outcome(const Observation& obs,
                                const NuisanceSet& nuis,
                                const LevelSets& levels, double y_min,
                                double y_max);

// Per-row score vectors of the canonical treated-arm problem on the
// evaluation rows, used by dml_estimate and exposed for the moment-condition
// and orthogonality diagnostics.
std::vector<double> evaluate_scores(const Dataset& ds,
                                    const std::vector<std::size_t>& rows,
                                    const NuisanceSet& nuis,
                                    const LevelSets& levels, Side side,
                                    bool binary_outcome);

// Fits all nuisances for the canonical treated-arm problem on the given fold
// (lower side; for the continuous-outcome upper side, fit on the sign-flipped
// dataset).  Exposed for tests that need fold-level access.
NuisanceSet fit_nuisances(const Dataset& ds,
                          const std::vector<std::size_t>& fold,
                          const LevelSets& levels, const PolicySpec& policy,
                          const DmlConfig& config, bool* pi_clipped = nullptr);

// Builds level sets from fold marginals of a fitted per-instrument
// propensity and the policy map.
LevelSets cluster_levels_from_fold(const Dataset& ds,
                                   const std::vector<std::size_t>& fold,
                                   const PolicySpec& policy,
                                   const DmlConfig& config);

// Full debiased estimator of the policy-contrast bounds: sample split,
// nuisance fitting on one half, score averaging on the other, both treatment
// arms combined, CIs at the 95% level.  Throws std::invalid_argument on
// degenerate folds (level cells below config.min_cell).
DmlResult dml_estimate(const Dataset& ds, const PolicySpec& policy,
                       const DmlConfig& config);

}  // namespace ivot

#endif  // IVOT_ESTIMATION_DML_HPP_
