#include "ivot/step_weight.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ivot {

StepWeight::StepWeight(std::vector<double> breaks, std::vector<double> values)
    : breaks_(std::move(breaks)), values_(std::move(values)) {
  if (breaks_.size() < 2 || values_.size() + 1 != breaks_.size()) {
    throw std::invalid_argument("StepWeight: need n+1 breaks for n values");
  }
  if (breaks_.front() != 0.0 || breaks_.back() != 1.0) {
    throw std::invalid_argument("StepWeight: breaks must span [0, 1]");
  }
  for (std::size_t i = 0; i + 1 < breaks_.size(); ++i) {
    if (!(breaks_[i] < breaks_[i + 1])) {
      throw std::invalid_argument("StepWeight: breaks must be increasing");
    }
  }
}

StepWeight StepWeight::constant(double value) {
  return StepWeight({0.0, 1.0}, {value});
}

double StepWeight::operator()(double u) const {
  if (u <= breaks_.front()) return values_.front();
  if (u >= breaks_.back()) return values_.back();
  // Cell index of the half-open cell (breaks[i], breaks[i+1]] containing u.
  auto it = std::lower_bound(breaks_.begin(), breaks_.end(), u);
  std::size_t idx = static_cast<std::size_t>(it - breaks_.begin());
  // lower_bound yields the first break >= u; that break closes cell idx-1.
  return values_[idx - 1];
}

namespace {

template <typename Transform>
double integrate_cells(const std::vector<double>& breaks,
                       const std::vector<double>& values, double a, double b,
                       Transform&& t) {
  a = std::max(a, 0.0);
  b = std::min(b, 1.0);
  if (a >= b) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double lo = std::max(a, breaks[i]);
    const double hi = std::min(b, breaks[i + 1]);
    if (hi > lo) total += t(values[i]) * (hi - lo);
    if (breaks[i + 1] >= b) break;
  }
  return total;
}

}  // namespace

double StepWeight::integral(double a, double b) const {
  return integrate_cells(breaks_, values_, a, b, [](double v) { return v; });
}

double StepWeight::integral_positive_part(double a, double b) const {
  return integrate_cells(breaks_, values_, a, b,
                         [](double v) { return std::max(0.0, v); });
}

double StepWeight::integral_negative_part(double a, double b) const {
  return integrate_cells(breaks_, values_, a, b,
                         [](double v) { return std::min(0.0, v); });
}

EmpiricalMeasure StepWeight::restriction_law(
    const std::vector<Interval>& region) const {
  double total_len = 0.0;
  for (const Interval& iv : region) total_len += iv.length();
  if (total_len <= 0.0) {
    throw std::invalid_argument("restriction_law: region has zero length");
  }
  std::vector<double> atoms;
  std::vector<double> weights;
  for (const Interval& iv : region) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double lo = std::max(iv.lo, breaks_[i]);
      const double hi = std::min(iv.hi, breaks_[i + 1]);
      if (hi > lo) {
        atoms.push_back(values_[i]);
        weights.push_back((hi - lo) / total_len);
      }
    }
  }
  return EmpiricalMeasure(std::move(atoms), std::move(weights));
}

}  // namespace ivot
