#ifndef IVOT_LEARNERS_HPP_
#define IVOT_LEARNERS_HPP_

#include <functional>
#include <vector>

namespace ivot {

// Supervised learners used to fit conditional-mean / probability / quantile
// nuisance functions of (low-dimensional) covariates.
enum class LearnerKind {
  kConstant,
  kLeastSquares,
  kRidge,
  kLogistic,
  kKnn,
  kPinballQuantile,
};

struct LearnerSpec {
  LearnerKind kind = LearnerKind::kConstant;
  double ridge_lambda = 1e-3;  // kRidge penalty on non-intercept coefficients
  double quantile_tau = 0.5;   // kPinballQuantile level
  int knn_k = 10;              // kKnn neighbourhood size
};

struct FittedLearner {
  std::function<double(const std::vector<double>&)> predict;
  // True when a singular least-squares design forced the automatic ridge
  // fallback (lambda = 1e-8).
  bool ridge_fallback = false;
};

// Fits the requested learner on (features, targets) with optional
// non-negative observation weights.  Feature rows may be empty vectors, in
// which case every learner reduces to its intercept-only form (weighted
// mean, weighted quantile, ...).  The returned predictor is deterministic.
//
//   kConstant       -- (weighted) mean of the targets.
//   kLeastSquares   -- OLS with intercept; singular designs fall back to
//                      ridge with lambda = 1e-8 and set `ridge_fallback`.
//   kRidge          -- ridge with the spec's lambda (intercept unpenalized).
//   kLogistic       -- damped Newton iterations to gradient norm 1e-8 or at
//                      most 100 iterations; targets must lie in [0, 1].
//   kKnn            -- mean of the k nearest targets in Euclidean distance,
//                      ties broken by sample index.
//   kPinballQuantile-- intercept-only: exact weighted sample quantile with
//                      ties broken to the lower sample value; with features:
//                      deterministic projected subgradient descent from the
//                      least-squares start.
FittedLearner fit_learner(const LearnerSpec& spec,
                          const std::vector<std::vector<double>>& features,
                          const std::vector<double>& targets,
                          const std::vector<double>& weights = {});

}  // namespace ivot

#endif  // IVOT_LEARNERS_HPP_
