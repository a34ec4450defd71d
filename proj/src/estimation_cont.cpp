#include "ivot/estimation_cont.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace ivot {

namespace {

constexpr double kMinKernelMass = 1e-6;

std::vector<double> covariate_row(const Dataset& ds, std::size_t i) {
  if (ds.x.empty()) return {};
  return ds.x[i];
}

double parse_instrument(const std::string& z) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(z, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != z.size() || z.empty())
    throw std::invalid_argument(
        "continuous-instrument estimation requires numeric instrument "
        "labels; got '" + z + "'");
  return v;
}

double kernel_value(KernelKind kind, double t) {
  switch (kind) {
    case KernelKind::kEpanechnikov:
      return std::abs(t) < 1.0 ? 0.75 * (1.0 - t * t) : 0.0;
    case KernelKind::kGaussian:
      return std::exp(-0.5 * t * t);
  }
  return 0.0;
}

}  // namespace

void isotonic_project(std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) return;
  // Pool-adjacent-violators with unit weights: maintain a stack of blocks
  // (mean, count) and merge while the means decrease.
  std::vector<double> mean;
  std::vector<std::size_t> count;
  for (double v : values) {
    mean.push_back(v);
    count.push_back(1);
    while (mean.size() >= 2 && mean[mean.size() - 2] > mean.back()) {
      const double m2 = mean.back();
      const std::size_t c2 = count.back();
      mean.pop_back();
      count.pop_back();
      const double m1 = mean.back();
      const std::size_t c1 = count.back();
      mean.back() = (m1 * static_cast<double>(c1) +
                     m2 * static_cast<double>(c2)) /
                    static_cast<double>(c1 + c2);
      count.back() = c1 + c2;
    }
  }
  std::size_t i = 0;
  for (std::size_t b = 0; b < mean.size(); ++b)
    for (std::size_t r = 0; r < count[b]; ++r) values[i++] = mean[b];
}

double G1Grid::evaluate(double u, const std::vector<double>& x) const {
  if (nodes.empty()) return 0.0;
  const double lo = nodes.front(), hi = nodes.back();
  u = std::min(hi, std::max(lo, u));
  const std::size_t last = nodes.size() - 1;
  // Equidistant nodes: locate the bracketing segment directly.
  const double step = last == 0 ? 1.0 : (hi - lo) / static_cast<double>(last);
  std::size_t m = last == 0
                      ? 0
                      : static_cast<std::size_t>(
                            std::min<double>(static_cast<double>(last - 1),
                                             std::max(0.0, (u - lo) / step)));
  if (last == 0) return fits[0](x);
  const double t = (u - nodes[m]) / (nodes[m + 1] - nodes[m]);
  return fits[m](x) + t * (fits[m + 1](x) - fits[m](x));
}

double BoundaryQuantile::evaluate(double t, const std::vector<double>& x) const {
  if (fits.empty()) return 0.0;
  std::vector<double> v(fits.size());
  for (std::size_t m = 0; m < fits.size(); ++m) v[m] = fits[m](x);
  isotonic_project(v);
  if (t <= levels.front()) return v.front();
  if (t >= levels.back()) return v.back();
  for (std::size_t m = 0; m + 1 < levels.size(); ++m) {
    if (t <= levels[m + 1]) {
      const double s = (t - levels[m]) / (levels[m + 1] - levels[m]);
      return v[m] + s * (v[m + 1] - v[m]);
    }
  }
  return v.back();
}

double BoundaryQuantile::integral(double t0, double t1,
                                  const std::vector<double>& x) const {
  if (fits.empty() || t1 <= t0) return 0.0;
  std::vector<double> v(fits.size());
  for (std::size_t m = 0; m < fits.size(); ++m) v[m] = fits[m](x);
  isotonic_project(v);
  // Piecewise-linear knots over [0, 1]: flat below the first and above the
  // last grid level.
  std::vector<double> kt = {0.0};
  std::vector<double> kv = {v.front()};
  for (std::size_t m = 0; m < levels.size(); ++m) {
    kt.push_back(levels[m]);
    kv.push_back(v[m]);
  }
  kt.push_back(1.0);
  kv.push_back(v.back());
  auto value_at = [&](double t) {
    for (std::size_t s = 0; s + 1 < kt.size(); ++s) {
      if (t <= kt[s + 1]) {
        const double w = kt[s + 1] - kt[s];
        if (w <= 0.0) return kv[s + 1];
        return kv[s] + (t - kt[s]) / w * (kv[s + 1] - kv[s]);
      }
    }
    return kv.back();
  };
  t0 = std::max(0.0, t0);
  t1 = std::min(1.0, t1);
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < kt.size(); ++s) {
    const double a = std::max(t0, kt[s]);
    const double b = std::min(t1, kt[s + 1]);
    if (b <= a) continue;
    total += 0.5 * (value_at(a) + value_at(b)) * (b - a);
  }
  return total;
}

G1Grid fit_g1_grid(const Dataset& ds, const std::vector<std::size_t>& fold,
                   const std::vector<double>& p_hat, KernelKind kernel,
                   double h, int grid_m, const LearnerSpec& learner) {
  if (fold.empty()) throw std::invalid_argument("empty nuisance fold");
  if (fold.size() != p_hat.size())
    throw std::invalid_argument("propensity vector does not match the fold");
  if (h <= 0.0 || grid_m < 2)
    throw std::invalid_argument("bandwidth must be positive and grid size >= 2");

  G1Grid out;
  const int nodes = grid_m + 1;
  out.nodes.resize(nodes);
  out.fits.resize(nodes);
  std::vector<bool> fitted(nodes, false);
  const auto [pmin_it, pmax_it] = std::minmax_element(p_hat.begin(),
                                                      p_hat.end());
  const double p_min = *pmin_it, p_max = *pmax_it;
  for (int m = 0; m < nodes; ++m) {
    const double um = static_cast<double>(m) / static_cast<double>(grid_m);
    out.nodes[m] = um;
    // Nodes outside the observed propensity range would be pure kernel-tail
    // extrapolations; they inherit the nearest interior node instead, which
    // also keeps the curve flat beyond the support as the averaging step
    // requires.
    if (um < p_min || um > p_max) continue;
    std::vector<std::vector<double>> features;
    std::vector<double> targets, weights;
    double mass = 0.0;
    for (std::size_t r = 0; r < fold.size(); ++r) {
      const double w = kernel_value(kernel, (um - p_hat[r]) / h);
      if (w <= 0.0) continue;
      const std::size_t i = fold[r];
      std::vector<double> f = {p_hat[r] - um};
      const std::vector<double> xr = covariate_row(ds, i);
      f.insert(f.end(), xr.begin(), xr.end());
      features.push_back(std::move(f));
      targets.push_back(ds.y[i] * static_cast<double>(ds.w[i]));
      weights.push_back(w);
      mass += w;
    }
    if (mass < kMinKernelMass) continue;
    // Effective sample size (Σw)²/Σw²: a handful of straggler rows at the
    // edge of the propensity support cannot pin down a local-linear fit, and
    // a degenerate node would blow up the interpolation Lipschitz constant.
    double sq = 0.0;
    for (double w : weights) sq += w * w;
    if (mass * mass / sq < 5.0) continue;
    FittedLearner fl = fit_learner(learner, features, targets, weights);
    out.fits[m] = [pred = fl.predict](const std::vector<double>& x) {
      std::vector<double> f = {0.0};
      f.insert(f.end(), x.begin(), x.end());
      return pred(f);
    };
    fitted[m] = true;
  }
  if (std::none_of(fitted.begin(), fitted.end(), [](bool b) { return b; }))
    throw std::invalid_argument("no grid node received kernel mass");
  // Nodes without kernel mass inherit the nearest fitted node.
  for (int m = 0; m < nodes; ++m) {
    if (fitted[m]) continue;
    int best = -1;
    for (int d = 1; d < nodes && best < 0; ++d) {
      if (m - d >= 0 && fitted[m - d]) best = m - d;
      if (best < 0 && m + d < nodes && fitted[m + d]) best = m + d;
    }
    out.fits[m] = out.fits[best];
  }
  // Deterministic Lipschitz bound: grid size times the largest adjacent node
  // gap over the training covariates.
  std::vector<std::vector<double>> probe;
  if (ds.x.empty()) {
    probe.push_back({});
  } else {
    for (std::size_t i : fold) probe.push_back(ds.x[i]);
  }
  double gap = 0.0;
  for (int m = 0; m + 1 < nodes; ++m)
    for (const auto& x : probe)
      gap = std::max(gap, std::abs(out.fits[m + 1](x) - out.fits[m](x)));
  out.lipschitz = static_cast<double>(grid_m) * gap;
  return out;
}

BoundaryQuantile fit_boundary_quantile(const Dataset& ds,
                                       const std::vector<std::size_t>& fold,
                                       const std::vector<double>& p_hat,
                                       const std::vector<double>& p_lower_hat,
                                       double delta, int grid_m,
                                       const LearnerSpec& learner,
                                       std::size_t min_local) {
  if (fold.size() != p_hat.size() || fold.size() != p_lower_hat.size())
    throw std::invalid_argument("propensity vectors do not match the fold");
  if (delta <= 0.0 || grid_m < 2)
    throw std::invalid_argument("delta must be positive and grid size >= 2");
  std::vector<std::vector<double>> features;
  std::vector<double> targets;
  for (std::size_t r = 0; r < fold.size(); ++r) {
    const std::size_t i = fold[r];
    if (p_hat[r] <= p_lower_hat[r] + delta && ds.w[i] == 1) {
      features.push_back(covariate_row(ds, i));
      targets.push_back(ds.y[i]);
    }
  }
  if (targets.size() < min_local)
    throw std::invalid_argument(
        "localized boundary subsample too small: " +
        std::to_string(targets.size()) + " rows");
  BoundaryQuantile out;
  for (int m = 1; m < grid_m; ++m) {
    LearnerSpec spec = learner;
    spec.kind = LearnerKind::kPinballQuantile;
    spec.quantile_tau = static_cast<double>(m) / static_cast<double>(grid_m);
    out.levels.push_back(spec.quantile_tau);
    FittedLearner fl = fit_learner(spec, features, targets);
    out.fits.push_back(fl.predict);
  }
  return out;
}

BoundPair plug_in_bounds(const Dataset& ds,
                         const std::vector<std::size_t>& fold,
                         const ContNuisances& nuis, double y_min, double y_max,
                         bool* p_lower_zero) {
  if (fold.empty()) throw std::invalid_argument("empty evaluation fold");
  double lower = 0.0, upper = 0.0;
  for (std::size_t i : fold) {
    const std::vector<double> x = covariate_row(ds, i);
    std::vector<double> feat = {parse_instrument(ds.z[i])};
    feat.insert(feat.end(), x.begin(), x.end());
    const double pl = std::max(0.0, nuis.p_lower(x));
    const double pu = std::min(1.0, nuis.p_upper(x));
    // The conditional mean is identified only on the propensity support, so
    // the baseline evaluation point is clamped into [p_lower, p_upper]; this
    // also makes the null policy produce exact zeros.
    const double p =
        std::min(pu, std::max(pl, nuis.p_hat(feat)));
    const double q =
        std::min(1.0, std::max(0.0, nuis.policy(ds.z[i], p)));

    const double psi2 = nuis.g1.evaluate(std::min(pu, q), x) -
                        nuis.g1.evaluate(p, x);
    double psi1_lo = 0.0, psi1_up = 0.0;
    if (pl > 0.0) {
      const double t0 = std::min(pl, q) / pl;
      psi1_lo = -pl * nuis.quantile.integral(t0, 1.0, x);
      psi1_up = -pl * nuis.quantile.integral(0.0, 1.0 - t0, x);
    } else if (p_lower_zero != nullptr) {
      // A zero estimated boundary leaves no tail range; flag it so callers
      // can tell the term was suppressed rather than computed.
      *p_lower_zero = true;
    }
    const double excess = std::max(0.0, q - pu);
    lower += psi1_lo + psi2 + y_min * excess;
    upper += psi1_up + psi2 + y_max * excess;
  }
  const double n = static_cast<double>(fold.size());
  return BoundPair{lower / n, upper / n};
}

ContResult cont_estimate(const Dataset& ds, const PolicySpec& policy,
                         const ContConfig& config) {
  ds.validate();
  const std::size_t n = ds.size();
  if (n < 6) throw std::invalid_argument("too few observations to split");
  for (const std::string& z : ds.z) parse_instrument(z);

  const double nd = static_cast<double>(n);
  const double h =
      config.bandwidth > 0.0 ? config.bandwidth : std::pow(nd, -0.2);
  const double delta =
      config.delta > 0.0 ? config.delta : std::pow(nd, -1.0 / 3.0);
  const int grid_m =
      config.grid_m > 0 ? config.grid_m
                        : std::max(2, static_cast<int>(std::ceil(
                                          std::sqrt(nd * h))));

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(config.seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t third = n / 3;
  const std::vector<std::size_t> i0(perm.begin(), perm.begin() + third);
  const std::vector<std::size_t> i1(perm.begin() + third,
                                    perm.begin() + 2 * third);
  const std::vector<std::size_t> i2(perm.begin() + 2 * third, perm.end());

  // The complementary arm re-expresses the problem with flipped treatment:
  // the latent threshold u maps to 1 - u, the propensity to 1 - p, and the
  // rule to phi'(z, p') = 1 - phi(z, 1 - p').
  Dataset flipped = ds;
  for (int& w : flipped.w) w = 1 - w;
  const auto policy_treated = [&policy](const std::string& z, double p) {
    return policy.apply(z, p);
  };
  const auto policy_flipped = [&policy](const std::string& z, double p) {
    const double a = 1.0 - p;
    const double q = policy.apply(z, a);
    // An identity rule must stay the identity after the flip; round-tripping
    // through 1 - (1 - p) would introduce floating-point residue.
    if (q == a) return p;
    return 1.0 - q;
  };

  ContResult result;
  double lower = 0.0, upper = 0.0;
  for (int arm = 0; arm < 2; ++arm) {
    const Dataset& ads = arm == 0 ? ds : flipped;
    // Propensity fit on the first fold.
    std::vector<std::vector<double>> pf;
    std::vector<double> pt;
    for (std::size_t i : i0) {
      std::vector<double> f = {parse_instrument(ads.z[i])};
      const std::vector<double> xr = covariate_row(ads, i);
      f.insert(f.end(), xr.begin(), xr.end());
      pf.push_back(std::move(f));
      pt.push_back(static_cast<double>(ads.w[i]));
    }
    FittedLearner pfit = fit_learner(config.propensity_learner, pf, pt);
    Predictor p_hat = [pred = pfit.predict](const std::vector<double>& f) {
      return std::min(1.0, std::max(0.0, pred(f)));
    };

    // Support boundaries: per covariate stratum (exact match) over the first
    // fold, with the pooled boundaries as the fallback for unseen strata.
    std::map<std::vector<double>, std::pair<double, double>> strata;
    double glo = 1.0, ghi = 0.0;
    for (std::size_t r = 0; r < i0.size(); ++r) {
      const double p = p_hat(pf[r]);
      const std::vector<double> x = covariate_row(ads, i0[r]);
      auto [it, fresh] = strata.try_emplace(x, std::make_pair(p, p));
      if (!fresh) {
        it->second.first = std::min(it->second.first, p);
        it->second.second = std::max(it->second.second, p);
      }
      glo = std::min(glo, p);
      ghi = std::max(ghi, p);
    }
    auto p_lower = [strata, glo](const std::vector<double>& x) {
      auto it = strata.find(x);
      return it == strata.end() ? glo : it->second.first;
    };
    auto p_upper = [strata, ghi](const std::vector<double>& x) {
      auto it = strata.find(x);
      return it == strata.end() ? ghi : it->second.second;
    };

    // Nuisance fits on the second fold.
    std::vector<double> p1, pl1;
    for (std::size_t i : i1) {
      std::vector<double> f = {parse_instrument(ads.z[i])};
      const std::vector<double> xr = covariate_row(ads, i);
      f.insert(f.end(), xr.begin(), xr.end());
      p1.push_back(p_hat(f));
      pl1.push_back(p_lower(covariate_row(ads, i)));
    }
    ContNuisances nuis;
    nuis.p_hat = p_hat;
    nuis.policy = arm == 0
                      ? std::function<double(const std::string&, double)>(
                            policy_treated)
                      : std::function<double(const std::string&, double)>(
                            policy_flipped);
    nuis.p_lower = p_lower;
    nuis.p_upper = p_upper;
    nuis.g1 = fit_g1_grid(ads, i1, p1, config.kernel, h, grid_m,
                          config.mean_learner);
    nuis.quantile =
        fit_boundary_quantile(ads, i1, p1, pl1, delta, grid_m,
                              config.quantile_learner, config.min_local);
    (arm == 0 ? result.g1_lipschitz_treated : result.g1_lipschitz_flipped) =
        nuis.g1.lipschitz;

    BoundPair arm_bounds = plug_in_bounds(ads, i2, nuis, ads.y_min, ads.y_max,
                                          &result.p_lower_zero);
    lower += arm_bounds.lower;
    upper += arm_bounds.upper;
  }
  if (lower > upper) std::swap(lower, upper);
  result.bounds = BoundPair{lower, upper};
  return result;
}

}  // namespace ivot
