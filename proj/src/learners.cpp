#include "ivot/learners.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ivot {

namespace {

// Design matrix with a leading intercept column.
Eigen::MatrixXd design_matrix(const std::vector<std::vector<double>>& features,
                              std::size_t dim) {
  const std::size_t n = features.size();
  Eigen::MatrixXd X(n, dim + 1);
  for (std::size_t i = 0; i < n; ++i) {
    X(static_cast<long>(i), 0) = 1.0;
    if (features[i].size() != dim) {
      throw std::invalid_argument("fit_learner: ragged feature rows");
    }
    for (std::size_t d = 0; d < dim; ++d) {
      X(static_cast<long>(i), static_cast<long>(d) + 1) = features[i][d];
    }
  }
  return X;
}

std::function<double(const std::vector<double>&)> linear_predictor(
    Eigen::VectorXd beta, std::size_t dim) {
  return [beta = std::move(beta), dim](const std::vector<double>& x) {
    if (x.size() != dim) {
      throw std::invalid_argument("predictor: feature dimension mismatch");
    }
    double v = beta(0);
    for (std::size_t d = 0; d < dim; ++d) {
      v += beta(static_cast<long>(d) + 1) * x[d];
    }
    return v;
  };
}

// Weighted quantile with the left-continuous convention: smallest sample
// value whose cumulative weight reaches tau * total.
double weighted_quantile(std::vector<double> values, std::vector<double> w,
                         double tau) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double cum = 0.0;
  for (std::size_t idx : order) {
    cum += w[idx];
    if (cum >= tau * total - 1e-12 * total) return values[idx];
  }
  return values[order.back()];
}

double pinball_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& w, const Eigen::VectorXd& beta,
                    double tau) {
  const Eigen::VectorXd r = y - X * beta;
  double loss = 0.0;
  for (long i = 0; i < r.size(); ++i) {
    loss += w(i) * (r(i) >= 0.0 ? tau * r(i) : (tau - 1.0) * (-r(i)));
  }
  return loss;
}

}  // namespace

FittedLearner fit_learner(const LearnerSpec& spec,
                          const std::vector<std::vector<double>>& features,
                          const std::vector<double>& targets,
                          const std::vector<double>& weights) {
  const std::size_t n = targets.size();
  if (features.size() != n || n == 0) {
    throw std::invalid_argument("fit_learner: empty or mismatched sample");
  }
  std::vector<double> w = weights.empty() ? std::vector<double>(n, 1.0)
                                          : weights;
  if (w.size() != n) {
    throw std::invalid_argument("fit_learner: weight length mismatch");
  }
  for (double wi : w) {
    if (wi < 0.0) throw std::invalid_argument("fit_learner: negative weight");
  }
  const std::size_t dim = features[0].size();

  FittedLearner out;
  switch (spec.kind) {
    case LearnerKind::kConstant: {
      double sw = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sw += w[i];
        sy += w[i] * targets[i];
      }
      const double mean = sw > 0.0 ? sy / sw : 0.0;
      out.predict = [mean](const std::vector<double>&) { return mean; };
      return out;
    }
    case LearnerKind::kLeastSquares:
    case LearnerKind::kRidge: {
      const Eigen::MatrixXd X = design_matrix(features, dim);
      const Eigen::VectorXd y =
          Eigen::Map<const Eigen::VectorXd>(targets.data(), n);
      const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
      Eigen::MatrixXd XtWX = X.transpose() * wv.asDiagonal() * X;
      const Eigen::VectorXd XtWy = X.transpose() * (wv.array() * y.array()).matrix();
      double lambda = spec.kind == LearnerKind::kRidge ? spec.ridge_lambda : 0.0;
      Eigen::MatrixXd penalty =
          Eigen::MatrixXd::Identity(XtWX.rows(), XtWX.cols());
      penalty(0, 0) = 0.0;  // intercept unpenalized
      Eigen::MatrixXd A = XtWX + lambda * penalty;
      Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
      if (spec.kind == LearnerKind::kLeastSquares && !lu.isInvertible()) {
        out.ridge_fallback = true;
        A = XtWX + 1e-8 * penalty;
        // Also stabilize the intercept if the whole design degenerates.
        if (XtWX(0, 0) <= 0.0) A(0, 0) += 1e-8;
        lu.compute(A);
      }
      const Eigen::VectorXd beta = lu.solve(XtWy);
      out.predict = linear_predictor(beta, dim);
      return out;
    }
    case LearnerKind::kLogistic: {
      for (double t : targets) {
        if (t < 0.0 || t > 1.0) {
          throw std::invalid_argument(
              "fit_learner: logistic targets must lie in [0, 1]");
        }
      }
      const Eigen::MatrixXd X = design_matrix(features, dim);
      const Eigen::VectorXd y =
          Eigen::Map<const Eigen::VectorXd>(targets.data(), n);
      const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
      auto loglik = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd eta = X * b;
        double ll = 0.0;
        for (long i = 0; i < eta.size(); ++i) {
          // Numerically stable log(1 + exp(eta)).
          const double lse = eta(i) > 0.0
                                 ? eta(i) + std::log1p(std::exp(-eta(i)))
                                 : std::log1p(std::exp(eta(i)));
          ll += wv(i) * (y(i) * eta(i) - lse);
        }
        return ll;
      };
      double ll = loglik(beta);
      for (int iter = 0; iter < 100; ++iter) {
        const Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd mu(n), sv(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double m = 1.0 / (1.0 + std::exp(-eta(static_cast<long>(i))));
          mu(static_cast<long>(i)) = m;
          sv(static_cast<long>(i)) =
              std::max(m * (1.0 - m), 1e-10) * wv(static_cast<long>(i));
        }
        const Eigen::VectorXd grad =
            X.transpose() * (wv.array() * (y - mu).array()).matrix();
        if (grad.norm() < 1e-8) break;
        const Eigen::MatrixXd H = X.transpose() * sv.asDiagonal() * X;
        const Eigen::VectorXd dir = H.ldlt().solve(grad);
        double step = 1.0;
        for (int halving = 0; halving < 40; ++halving) {
          const double cand = loglik(beta + step * dir);
          if (cand >= ll) {
            beta += step * dir;
            ll = cand;
            break;
          }
          step *= 0.5;
        }
      }
      auto lin = linear_predictor(beta, dim);
      out.predict = [lin](const std::vector<double>& x) {
        return 1.0 / (1.0 + std::exp(-lin(x)));
      };
      return out;
    }
    case LearnerKind::kKnn: {
      const int k = std::max(1, spec.knn_k);
      auto fx = features;
      auto ty = targets;
      out.predict = [fx = std::move(fx), ty = std::move(ty), k,
                     dim](const std::vector<double>& x) {
        if (x.size() != dim) {
          throw std::invalid_argument("predictor: feature dimension mismatch");
        }
        std::vector<std::pair<double, std::size_t>> d(fx.size());
        for (std::size_t i = 0; i < fx.size(); ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < dim; ++j) {
            const double diff = fx[i][j] - x[j];
            s += diff * diff;
          }
          d[i] = {s, i};
        }
        const std::size_t kk =
            std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
        std::partial_sort(d.begin(), d.begin() + static_cast<long>(kk),
                          d.end());
        double mean = 0.0;
        for (std::size_t i = 0; i < kk; ++i) mean += ty[d[i].second];
        return mean / static_cast<double>(kk);
      };
      return out;
    }
    case LearnerKind::kPinballQuantile: {
      const double tau = spec.quantile_tau;
      if (tau <= 0.0 || tau >= 1.0) {
        throw std::invalid_argument("fit_learner: quantile level out of (0,1)");
      }
      if (dim == 0) {
        const double q = weighted_quantile(targets, w, tau);
        out.predict = [q](const std::vector<double>&) { return q; };
        return out;
      }
      const Eigen::MatrixXd X = design_matrix(features, dim);
      const Eigen::VectorXd y =
          Eigen::Map<const Eigen::VectorXd>(targets.data(), n);
      const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
      // Deterministic subgradient descent from the least-squares start.
      LearnerSpec ls;
      ls.kind = LearnerKind::kLeastSquares;
      Eigen::MatrixXd XtWX = X.transpose() * wv.asDiagonal() * X;
      Eigen::MatrixXd reg =
          XtWX + 1e-8 * Eigen::MatrixXd::Identity(XtWX.rows(), XtWX.cols());
      Eigen::VectorXd beta =
          reg.ldlt().solve(X.transpose() * (wv.array() * y.array()).matrix());
      Eigen::VectorXd best = beta;
      double best_loss = pinball_loss(X, y, wv, beta, tau);
      const double row_scale =
          std::max(1.0, X.rowwise().squaredNorm().mean());
      double y_scale = 0.0;
      for (long i = 0; i < y.size(); ++i) {
        y_scale = std::max(y_scale, std::abs(y(i) - y.mean()));
      }
      const double step0 = (y_scale > 0.0 ? y_scale : 1.0) / row_scale;
      for (int t = 1; t <= 2000; ++t) {
        const Eigen::VectorXd r = y - X * beta;
        Eigen::VectorXd g = Eigen::VectorXd::Zero(X.cols());
        for (long i = 0; i < r.size(); ++i) {
          const double s = r(i) >= 0.0 ? tau : tau - 1.0;
          g -= wv(i) * s * X.row(i).transpose();
        }
        beta -= (step0 / std::sqrt(static_cast<double>(t))) * g /
                static_cast<double>(n);
        const double loss = pinball_loss(X, y, wv, beta, tau);
        if (loss < best_loss) {
          best_loss = loss;
          best = beta;
        }
      }
      out.predict = linear_predictor(best, dim);
      return out;
    }
  }
  throw std::logic_error("fit_learner: unknown learner kind");
}

}  // namespace ivot
