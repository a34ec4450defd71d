#include "ivot/ot1d.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "ivot/simplex_lp.hpp"

namespace ivot {

double ot_product_extreme(const EmpiricalMeasure& mu,
                          const EmpiricalMeasure& nu, CouplingMode mode) {
  if (mu.empty() || nu.empty()) {
    throw std::invalid_argument("ot_product_extreme: empty marginal");
  }
  // Normalized cumulative grids of both marginals.  For the countermonotone
  // pairing the nu grid is reflected (t -> 1 - t), so on every interval of
  // the merged grid both quantile functions are constant and the integral is
  // a finite sum evaluated at interval midpoints.
  std::vector<double> cuts;
  cuts.push_back(0.0);
  double run = 0.0;
  for (double w : mu.weights()) {
    run += w / mu.mass();
    cuts.push_back(std::min(1.0, run));
  }
  run = 0.0;
  for (double w : nu.weights()) {
    run += w / nu.mass();
    const double t = std::min(1.0, run);
    cuts.push_back(mode == CouplingMode::kCountermonotone ? 1.0 - t : t);
  }
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double len = cuts[i + 1] - cuts[i];
    if (len <= 0.0) continue;
    const double t_mid = 0.5 * (cuts[i] + cuts[i + 1]);
    const double t_nu =
        mode == CouplingMode::kCountermonotone ? 1.0 - t_mid : t_mid;
    total += len * mu.quantile(t_mid) * nu.quantile(t_nu);
  }
  return total;
}

OtBruteforceResult ot_bruteforce(const EmpiricalMeasure& mu,
                                 const EmpiricalMeasure& nu) {
  const long n = static_cast<long>(mu.size());
  const long m = static_cast<long>(nu.size());
  if (n == 0 || m == 0) {
    throw std::invalid_argument("ot_bruteforce: empty marginal");
  }
  if (n > 8 || m > 8) {
    throw std::invalid_argument("ot_bruteforce supports at most 8 atoms");
  }

  // Transportation LP: variables x_{ij} >= 0 with row sums equal to the mu
  // weights and column sums equal to the nu weights.  The final column
  // constraint is implied by the others and omitted to keep full row rank.
  const long nvar = n * m;
  const long nrow = n + (m - 1);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nrow, nvar);
  Eigen::VectorXd b(nrow);
  Eigen::VectorXd cost(nvar);
  for (long i = 0; i < n; ++i) {
    b(i) = mu.weights()[static_cast<std::size_t>(i)] / mu.mass();
    for (long j = 0; j < m; ++j) {
      const long v = i * m + j;
      A(i, v) = 1.0;
      if (j < m - 1) A(n + j, v) = 1.0;
      cost(v) = mu.atoms()[static_cast<std::size_t>(i)] *
                nu.atoms()[static_cast<std::size_t>(j)];
    }
  }
  for (long j = 0; j < m - 1; ++j) {
    b(n + j) = nu.weights()[static_cast<std::size_t>(j)] / nu.mass();
  }

  OtBruteforceResult result;
  const LpResult lo = solve_lp_equality(A, b, cost);
  const LpResult hi = solve_lp_equality(A, b, Eigen::VectorXd(-cost));
  if (lo.status != LpResult::Status::kOptimal ||
      hi.status != LpResult::Status::kOptimal) {
    throw std::runtime_error("ot_bruteforce: LP solve failed");
  }
  result.min_cost = lo.objective;
  result.max_cost = -hi.objective;
  return result;
}

}  // namespace ivot
