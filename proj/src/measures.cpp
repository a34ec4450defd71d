#include "ivot/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ivot {

namespace {

constexpr double kRelTol = 1e-12;

// Sorts (atom, weight) pairs by atom and merges exact duplicates.
void sort_and_merge(std::vector<double>* atoms, std::vector<double>* weights,
                    bool drop_zero_weights) {
  if (atoms->size() != weights->size()) {
    throw std::invalid_argument("atoms and weights must have equal length");
  }
  std::vector<std::size_t> order(atoms->size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (*atoms)[a] < (*atoms)[b];
  });
  std::vector<double> a_out, w_out;
  a_out.reserve(atoms->size());
  w_out.reserve(atoms->size());
  for (std::size_t idx : order) {
    const double a = (*atoms)[idx];
    const double w = (*weights)[idx];
    if (!std::isfinite(a) || !std::isfinite(w)) {
      throw std::invalid_argument("atoms and weights must be finite");
    }
    if (!a_out.empty() && a == a_out.back()) {
      w_out.back() += w;
    } else {
      a_out.push_back(a);
      w_out.push_back(w);
    }
  }
  if (drop_zero_weights) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < a_out.size(); ++i) {
      if (w_out[i] != 0.0) {
        a_out[out] = a_out[i];
        w_out[out] = w_out[i];
        ++out;
      }
    }
    a_out.resize(out);
    w_out.resize(out);
  }
  *atoms = std::move(a_out);
  *weights = std::move(w_out);
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> atoms,
                                   std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  for (double w : weights_) {
    if (w < 0.0) {
      throw std::invalid_argument("EmpiricalMeasure weights must be >= 0");
    }
  }
  sort_and_merge(&atoms_, &weights_, /*drop_zero_weights=*/true);
  cum_.resize(weights_.size());
  double run = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    run += weights_[i];
    cum_[i] = run;
  }
  mass_ = run;
}

EmpiricalMeasure EmpiricalMeasure::from_samples(
    const std::vector<double>& values) {
  if (values.empty()) return EmpiricalMeasure();
  std::vector<double> weights(values.size(), 1.0 / values.size());
  return EmpiricalMeasure(values, std::move(weights));
}

double EmpiricalMeasure::mean() const {
  if (empty() || mass_ <= 0.0) {
    throw std::logic_error("mean of an empty measure");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) s += atoms_[i] * weights_[i];
  return s / mass_;
}

double EmpiricalMeasure::min() const {
  if (empty()) throw std::logic_error("min of an empty measure");
  return atoms_.front();
}

double EmpiricalMeasure::max() const {
  if (empty()) throw std::logic_error("max of an empty measure");
  return atoms_.back();
}

double EmpiricalMeasure::quantile(double t) const {
  if (empty() || mass_ <= 0.0) {
    throw std::logic_error("quantile of an empty measure");
  }
  if (t <= 0.0) return atoms_.front();
  if (t >= 1.0) return atoms_.back();
  const double target = t * mass_;
  const double tol = kRelTol * mass_;
  // First index whose cumulative weight reaches the target (inf convention);
  // the tolerance keeps exact breakpoints on the closing atom.
  auto it = std::lower_bound(cum_.begin(), cum_.end(), target - tol);
  std::size_t idx = static_cast<std::size_t>(it - cum_.begin());
  if (idx >= atoms_.size()) idx = atoms_.size() - 1;
  return atoms_[idx];
}

double EmpiricalMeasure::quantile_integral(double a, double b) const {
  if (empty() || mass_ <= 0.0) {
    throw std::logic_error("quantile_integral of an empty measure");
  }
  if (a > b) throw std::invalid_argument("quantile_integral requires a <= b");
  a = std::max(0.0, a);
  b = std::min(1.0, b);
  if (a >= b) return 0.0;
  double total = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const double hi = (i + 1 == atoms_.size()) ? 1.0 : cum_[i] / mass_;
    const double lo_clip = std::max(a, prev);
    const double hi_clip = std::min(b, hi);
    if (hi_clip > lo_clip) total += atoms_[i] * (hi_clip - lo_clip);
    prev = hi;
    if (prev >= b) break;
  }
  return total;
}

double EmpiricalMeasure::cvar(double alpha) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("cvar level must be in (0, 1]");
  }
  return quantile_integral(0.0, alpha) / alpha;
}

EmpiricalMeasure EmpiricalMeasure::scaled(double c) const {
  if (c < 0.0) throw std::invalid_argument("scale factor must be >= 0");
  std::vector<double> w = weights_;
  for (double& wi : w) wi *= c;
  return EmpiricalMeasure(atoms_, std::move(w));
}

EmpiricalMeasure EmpiricalMeasure::normalized() const {
  if (empty() || mass_ <= 0.0) {
    throw std::logic_error("normalization of an empty measure");
  }
  return scaled(1.0 / mass_);
}

SignedAtomMeasure::SignedAtomMeasure(std::vector<double> atoms,
                                     std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  sort_and_merge(&atoms_, &weights_, /*drop_zero_weights=*/false);
}

double SignedAtomMeasure::total() const {
  double s = 0.0;
  for (double w : weights_) s += w;
  return s;
}

SignedAtomMeasure SignedAtomMeasure::axpy(double c,
                                          const SignedAtomMeasure& other) const {
  std::vector<double> a = atoms_;
  std::vector<double> w = weights_;
  a.insert(a.end(), other.atoms_.begin(), other.atoms_.end());
  for (double ow : other.weights_) w.push_back(c * ow);
  return SignedAtomMeasure(std::move(a), std::move(w));
}

SignedAtomMeasure SignedAtomMeasure::scaled(double c) const {
  std::vector<double> w = weights_;
  for (double& wi : w) wi *= c;
  return SignedAtomMeasure(atoms_, std::move(w));
}

std::pair<EmpiricalMeasure, ComplierDiagnostic> complier_measure(
    const EmpiricalMeasure& sub_hi, const EmpiricalMeasure& sub_lo,
    double p_hi, double p_lo) {
  if (!(p_hi > p_lo) || p_lo < 0.0) {
    throw std::invalid_argument("complier_measure requires p_hi > p_lo >= 0");
  }
  SignedAtomMeasure diff(sub_hi.atoms(), sub_hi.weights());
  if (!sub_lo.empty()) {
    diff = diff.axpy(-1.0, SignedAtomMeasure(sub_lo.atoms(), sub_lo.weights()));
  }
  diff = diff.scaled(1.0 / (p_hi - p_lo));

  ComplierDiagnostic diag;
  std::vector<double> atoms;
  std::vector<double> weights;
  atoms.reserve(diff.atoms().size());
  weights.reserve(diff.atoms().size());
  for (std::size_t i = 0; i < diff.atoms().size(); ++i) {
    const double w = diff.weights()[i];
    if (w < 0.0) {
      diag.negative_mass += -w;
    } else if (w > 0.0) {
      atoms.push_back(diff.atoms()[i]);
      weights.push_back(w);
    }
  }
  EmpiricalMeasure clipped(std::move(atoms), std::move(weights));
  diag.mass_before_renormalization = clipped.mass();
  if (clipped.empty() || clipped.mass() <= 0.0) {
    throw std::runtime_error(
        "complier_measure: clipped measure has no positive mass");
  }
  return {clipped.normalized(), diag};
}

}  // namespace ivot
