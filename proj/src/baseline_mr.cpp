#include "ivot/baseline_mr.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ivot/simplex_lp.hpp"

namespace ivot {

namespace {

// Gauss-Legendre nodes/weights on [-1, 1] via Newton iteration on the
// Legendre recurrence; exact (to machine precision) for polynomials of
// degree <= 2n - 1.
void gauss_legendre(int n, std::vector<double>& nodes,
                    std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (x * p1 - p0) / (x * x - 1.0);
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

}  // namespace

std::vector<double> MtrSieve::default_knots() {
  std::vector<double> k(9);
  for (int i = 0; i < 9; ++i) k[i] = 0.1 * (i + 1);
  return k;
}

MtrSieve::MtrSieve(int degree, std::vector<double> interior_knots)
    : degree_(degree) {
  if (degree < 0) throw std::invalid_argument("negative spline degree");
  double prev = 0.0;
  for (double t : interior_knots) {
    if (!(t > prev && t < 1.0))
      throw std::invalid_argument(
          "interior knots must be strictly increasing inside (0, 1)");
    prev = t;
  }
  knots_.assign(static_cast<std::size_t>(degree + 1), 0.0);
  knots_.insert(knots_.end(), interior_knots.begin(), interior_knots.end());
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree + 1), 1.0);
  spans_.push_back(0.0);
  spans_.insert(spans_.end(), interior_knots.begin(), interior_knots.end());
  spans_.push_back(1.0);
}

int MtrSieve::size() const {
  return static_cast<int>(knots_.size()) - degree_ - 1;
}

double MtrSieve::basis(int j, double u) const {
  const int n = size();
  if (j < 0 || j >= n) throw std::out_of_range("basis index");
  if (u < 0.0 || u > 1.0) return 0.0;
  // Cox-de Boor with the convention that the last basis attains 1 at u = 1.
  if (u == 1.0) return j == n - 1 ? 1.0 : 0.0;
  const int d = degree_;
  // Degree-0 seeds over the local support [knots_[j], knots_[j + d + 1]).
  std::vector<double> b(d + 1, 0.0);
  for (int r = 0; r <= d; ++r)
    b[r] = (u >= knots_[j + r] && u < knots_[j + r + 1]) ? 1.0 : 0.0;
  for (int deg = 1; deg <= d; ++deg) {
    for (int r = 0; r + deg <= d; ++r) {
      const double den1 = knots_[j + r + deg] - knots_[j + r];
      const double den2 = knots_[j + r + deg + 1] - knots_[j + r + 1];
      double v = 0.0;
      if (den1 > 0.0) v += (u - knots_[j + r]) / den1 * b[r];
      if (den2 > 0.0) v += (knots_[j + r + deg + 1] - u) / den2 * b[r + 1];
      b[r] = v;
    }
  }
  return b[0];
}

double MtrSieve::basis_integral(int j, double a, double b) const {
  if (b <= a) return 0.0;
  const int n_gl = degree_ / 2 + 1;
  std::vector<double> gx, gw;
  gauss_legendre(n_gl, gx, gw);
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < spans_.size(); ++s) {
    const double lo = std::max(a, spans_[s]);
    const double hi = std::min(b, spans_[s + 1]);
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (int g = 0; g < n_gl; ++g)
      total += half * gw[g] * basis(j, mid + half * gx[g]);
  }
  return total;
}

double MtrSieve::weighted_integral(int j, const StepWeight& weight) const {
  const auto& wb = weight.breaks();
  const auto& wv = weight.values();
  double total = 0.0;
  for (std::size_t c = 0; c + 1 < wb.size(); ++c) {
    if (wv[c] == 0.0) continue;
    total += wv[c] * basis_integral(j, wb[c], wb[c + 1]);
  }
  return total;
}

namespace {

struct LpRows {
  std::vector<std::vector<double>> a;  // coefficients on the 2B free coeffs
  std::vector<double> rhs;
  std::vector<bool> is_equality;
};

// Solves min sign * objective over the rows, with free coefficients split
// into positive/negative parts and one slack per inequality (<=) row.
LpResult solve_split(const LpRows& rows, const std::vector<double>& obj,
                     double sign) {
  const std::size_t nfree = obj.size();
  std::size_t nslack = 0;
  for (bool eq : rows.is_equality)
    if (!eq) ++nslack;
  const std::size_t m = rows.a.size();
  const std::size_t ncols = 2 * nfree + nslack;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, ncols);
  Eigen::VectorXd rhs(m);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(ncols);
  std::size_t slack = 0;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < nfree; ++j) {
      A(r, 2 * j) = rows.a[r][j];
      A(r, 2 * j + 1) = -rows.a[r][j];
    }
    if (!rows.is_equality[r]) A(r, 2 * nfree + slack++) = 1.0;
    rhs(r) = rows.rhs[r];
  }
  for (std::size_t j = 0; j < nfree; ++j) {
    c(2 * j) = sign * obj[j];
    c(2 * j + 1) = -sign * obj[j];
  }
  return solve_lp_equality(A, rhs, c);
}

}  // namespace

BoundPair solve_mr_bounds(const MrMoments& moments, const StepWeight& weight,
                          const MtrSieve& sieve, double y_min, double y_max,
                          int check_grid) {
  if (!(y_max >= y_min)) throw std::invalid_argument("empty outcome range");
  if (check_grid < 2) throw std::invalid_argument("check grid too small");
  const int nb = sieve.size();
  const std::size_t nfree = static_cast<std::size_t>(2 * nb);  // m1 then m0

  // Objective: int (m1 - m0) * weight.
  std::vector<double> obj(nfree, 0.0);
  for (int j = 0; j < nb; ++j) {
    const double wj = sieve.weighted_integral(j, weight);
    obj[j] = wj;
    obj[nb + j] = -wj;
  }

  LpRows rows;
  for (const auto& lv : moments.levels) {
    if (!(lv.p >= 0.0 && lv.p <= 1.0))
      throw std::invalid_argument("propensity level outside [0, 1]");
    if (lv.p > 0.0) {
      std::vector<double> row(nfree, 0.0);
      for (int j = 0; j < nb; ++j)
        row[j] = sieve.basis_integral(j, 0.0, lv.p) / lv.p;
      rows.a.push_back(std::move(row));
      rows.rhs.push_back(lv.mean_y1);
      rows.is_equality.push_back(true);
    }
    if (lv.p < 1.0) {
      std::vector<double> row(nfree, 0.0);
      for (int j = 0; j < nb; ++j)
        row[nb + j] = sieve.basis_integral(j, lv.p, 1.0) / (1.0 - lv.p);
      rows.a.push_back(std::move(row));
      rows.rhs.push_back(lv.mean_y0);
      rows.is_equality.push_back(true);
    }
  }

  // Pointwise outcome-range rows are generated lazily: start from a coarse
  // sub-grid dense enough to touch every basis support, then add the rows
  // violated at the current optimum and re-solve.  The final solution is
  // feasible for the full check grid, and optimal because only constraints
  // of the full problem were ever added.
  std::vector<double> grid(check_grid);
  for (int g = 0; g < check_grid; ++g)
    grid[g] = static_cast<double>(g) / (check_grid - 1);
  // Knot-span midpoints guarantee every basis support holds a check point
  // even when a span is narrower than the uniform grid spacing (otherwise a
  // coefficient could escape the outcome box entirely).
  const auto& spans = sieve.span_points();
  for (std::size_t s = 0; s + 1 < spans.size(); ++s)
    grid.push_back(0.5 * (spans[s] + spans[s + 1]));
  std::sort(grid.begin(), grid.end());
  const int n_grid = static_cast<int>(grid.size());
  std::vector<std::vector<bool>> active(
      4, std::vector<bool>(n_grid, false));  // {m1<=,m1>=,m0<=,m0>=}
  const int seed_stride = std::max(1, n_grid / nb);
  for (int g = 0; g < n_grid; g += seed_stride)
    for (int t = 0; t < 4; ++t) active[t][g] = true;
  for (int t = 0; t < 4; ++t) active[t][n_grid - 1] = true;

  const auto add_row = [&](int type, int g) {
    std::vector<double> row(nfree, 0.0);
    const int off = type < 2 ? 0 : nb;
    const double s = (type % 2 == 0) ? 1.0 : -1.0;  // <= y_max or -m <= -y_min
    for (int j = 0; j < nb; ++j) row[off + j] = s * sieve.basis(j, grid[g]);
    rows.a.push_back(std::move(row));
    rows.rhs.push_back(type % 2 == 0 ? y_max : -y_min);
    rows.is_equality.push_back(false);
  };
  for (int t = 0; t < 4; ++t)
    for (int g = 0; g < n_grid; ++g)
      if (active[t][g]) add_row(t, g);

  constexpr double kFeasTol = 1e-9;
  const auto solve_side = [&](double sign) -> double {
    for (int round = 0; round < 200; ++round) {
      const LpResult res = solve_split(rows, obj, sign);
      if (res.status == LpResult::Status::kInfeasible)
        throw std::runtime_error(
            "moment constraints are infeasible within the outcome range "
            "(model misspecification)");
      if (res.status == LpResult::Status::kUnbounded) {
        // The active subset leaves an improving ray; fall back to the full
        // pointwise row set, which is always bounded inside the outcome box.
        bool added = false;
        for (int t = 0; t < 4; ++t) {
          for (int g = 0; g < n_grid; ++g) {
            if (!active[t][g]) {
              active[t][g] = true;
              add_row(t, g);
              added = true;
            }
          }
        }
        if (!added)
          throw std::runtime_error("relaxation LP unbounded on the full grid");
        continue;
      }
      if (res.status != LpResult::Status::kOptimal)
        throw std::runtime_error("relaxation LP did not reach an optimum");
      std::vector<double> coef(nfree);
      for (std::size_t j = 0; j < nfree; ++j)
        coef[j] = res.x(2 * j) - res.x(2 * j + 1);
      bool violated = false;
      for (int g = 0; g < n_grid; ++g) {
        double m1 = 0.0, m0 = 0.0;
        for (int j = 0; j < nb; ++j) {
          const double bj = sieve.basis(j, grid[g]);
          if (bj == 0.0) continue;
          m1 += coef[j] * bj;
          m0 += coef[nb + j] * bj;
        }
        const double vals[4] = {m1 - y_max, y_min - m1, m0 - y_max,
                                y_min - m0};
        for (int t = 0; t < 4; ++t) {
          if (vals[t] > kFeasTol && !active[t][g]) {
            active[t][g] = true;
            add_row(t, g);
            violated = true;
          }
        }
      }
      if (!violated) return sign * res.objective;
    }
    throw std::runtime_error("constraint generation failed to converge");
  };

  BoundPair out;
  out.lower = solve_side(1.0);
  out.upper = solve_side(-1.0);
  if (out.lower > out.upper) std::swap(out.lower, out.upper);
  return out;
}

}  // namespace ivot
