#include "ivot/estimation_dml.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace ivot {

namespace {

constexpr double kLevelZeroTol = 1e-9;
// Interior quantile level at which the first complier-outcome threshold is
// anchored; see the comment at its use in fit_impl.
constexpr double kNuZeroQuantile = 1e-2;

const std::vector<double>& covariate_row(const Dataset& ds, std::size_t i) {
  static const std::vector<double> kEmpty;
  return ds.x.empty() ? kEmpty : ds.x[i];
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

Predictor constant_predictor(double c) {
  return [c](const std::vector<double>&) { return c; };
}

// Counterfactual-assignment rule as plain callables of (instrument, baseline
// propensity); closes over arbitrary transformations of a PolicySpec.
struct PolicyFn {
  std::function<double(const std::string&, double)> apply;
  std::function<double(const std::string&, double)> derivative;
};

PolicyFn make_policy_fn(const PolicySpec& spec) {
  PolicyFn fn;
  fn.apply = [spec](const std::string& z, double p) { return spec.apply(z, p); };
  fn.derivative = [spec](const std::string& z, double p) {
    return spec.derivative(z, p);
  };
  return fn;
}

// Rule seen from the complementary treatment arm: flipping the treatment
// indicator maps the latent threshold u to 1 - u, the propensity p to 1 - p
// and the policy value q to 1 - q.
PolicyFn transform_policy(const PolicyFn& base) {
  PolicyFn fn;
  fn.apply = [base](const std::string& z, double p) {
    return 1.0 - base.apply(z, 1.0 - p);
  };
  fn.derivative = [base](const std::string& z, double p) {
    return base.derivative(z, 1.0 - p);
  };
  return fn;
}

std::vector<std::string> instrument_universe(const Dataset& ds) {
  std::set<std::string> s(ds.z.begin(), ds.z.end());
  return std::vector<std::string>(s.begin(), s.end());
}

// Fits config.learner on the given rows; empty row sets yield the zero
// function.
Predictor fit_on_rows(const Dataset& ds, const std::vector<std::size_t>& rows,
                      const std::function<double(std::size_t)>& target,
                      const LearnerSpec& spec) {
  if (rows.empty()) return constant_predictor(0.0);
  std::vector<std::vector<double>> features;
  std::vector<double> targets;
  features.reserve(rows.size());
  targets.reserve(rows.size());
  for (std::size_t i : rows) {
    features.push_back(covariate_row(ds, i));
    targets.push_back(target(i));
  }
  FittedLearner fl = fit_learner(spec, features, targets);
  return fl.predict;
}

// Clips a fitted probability to [floor, 1]; reports whether the raw fit went
// below the floor anywhere on the training covariates.
Predictor clip_probability(const Dataset& ds, const std::vector<std::size_t>& fold,
                           Predictor raw, double floor, bool* clipped) {
  if (clipped != nullptr) {
    if (ds.x.empty()) {
      if (raw({}) < floor) *clipped = true;
    } else {
      for (std::size_t i : fold) {
        if (raw(covariate_row(ds, i)) < floor) {
          *clipped = true;
          break;
        }
      }
    }
  }
  return [raw, floor](const std::vector<double>& x) {
    return std::min(1.0, std::max(floor, raw(x)));
  };
}

struct InstrumentFits {
  std::map<std::string, Predictor> p_z, pi_z, q_z, dphi_z;
};

InstrumentFits fit_instrument_nuisances(const Dataset& ds,
                                        const std::vector<std::size_t>& fold,
                                        const PolicyFn& policy,
                                        const DmlConfig& config,
                                        bool* clipped) {
  InstrumentFits out;
  for (const std::string& z : instrument_universe(ds)) {
    std::vector<std::size_t> rows_z;
    for (std::size_t i : fold)
      if (ds.z[i] == z) rows_z.push_back(i);
    if (rows_z.empty())
      throw std::invalid_argument(
          "instrument value absent from the training fold: " + z);
    Predictor p_raw = fit_on_rows(
        ds, rows_z, [&](std::size_t i) { return static_cast<double>(ds.w[i]); },
        config.learner);
    Predictor p = [p_raw](const std::vector<double>& x) {
      return clamp01(p_raw(x));
    };
    out.p_z[z] = p;
    Predictor pi_raw = fit_on_rows(
        ds, fold, [&](std::size_t i) { return ds.z[i] == z ? 1.0 : 0.0; },
        config.learner);
    out.pi_z[z] = clip_probability(ds, fold, pi_raw, config.c_pi, clipped);
    const auto apply = policy.apply;
    const auto deriv = policy.derivative;
    out.q_z[z] = [apply, p, z](const std::vector<double>& x) {
      return apply(z, p(x));
    };
    out.dphi_z[z] = [deriv, p, z](const std::vector<double>& x) {
      return deriv(z, p(x));
    };
  }
  return out;
}

LevelSets cluster_levels_impl(const std::vector<std::string>& instruments,
                              const std::map<std::string, double>& p_bar,
                              const std::map<std::string, double>& q_bar,
                              double c_gap) {
  struct Item {
    double value;
    bool is_p;
    std::string z;
  };
  std::vector<Item> items;
  for (const std::string& z : instruments) {
    items.push_back({p_bar.at(z), true, z});
    items.push_back({q_bar.at(z), false, z});
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.value < b.value; });

  // Single-linkage chaining at radius c_gap / 2.
  std::vector<std::vector<Item>> clusters;
  for (const Item& it : items) {
    if (clusters.empty() || it.value - clusters.back().back().value > c_gap / 2.0)
      clusters.emplace_back();
    clusters.back().push_back(it);
  }
  struct ClusterInfo {
    double center = 0.0;
    bool has_p = false;
    std::vector<Item> items;
  };
  std::vector<ClusterInfo> infos;
  for (auto& cl : clusters) {
    ClusterInfo info;
    info.items = cl;
    double sum = 0.0;
    for (const Item& it : cl) {
      sum += it.value;
      info.has_p = info.has_p || it.is_p;
    }
    info.center = sum / static_cast<double>(cl.size());
    if (cl.back().value - cl.front().value > c_gap)
      throw std::invalid_argument(
          "level clustering is ambiguous: a chained cluster spans more than "
          "the separation constant");
    infos.push_back(std::move(info));
  }
  for (std::size_t i = 1; i < infos.size(); ++i) {
    if (infos[i].center - infos[i - 1].center < c_gap / 2.0)
      throw std::invalid_argument(
          "level clustering is ambiguous: adjacent cluster centers are closer "
          "than half the separation constant");
  }

  LevelSets out;
  // Baseline levels, with a latent-interval origin at zero when the lowest
  // baseline cluster is away from it.
  std::vector<int> cluster_level(infos.size(), -1);
  bool first_baseline_at_zero = false;
  for (const ClusterInfo& info : infos) {
    if (info.has_p) {
      first_baseline_at_zero = info.center <= kLevelZeroTol;
      break;
    }
  }
  if (!first_baseline_at_zero) {
    LevelSets::Level origin;
    origin.p = 0.0;
    out.levels.push_back(origin);
  }
  for (std::size_t c = 0; c < infos.size(); ++c) {
    if (!infos[c].has_p) continue;
    cluster_level[c] = static_cast<int>(out.levels.size());
    LevelSets::Level lvl;
    lvl.p = infos[c].center;
    for (const Item& it : infos[c].items) {
      if (it.is_p) {
        lvl.s_members.push_back(it.z);
        out.s_index[it.z] = cluster_level[c];
      } else {
        lvl.at_level.push_back(it.z);
        out.q_index[it.z] = {cluster_level[c], 0};
      }
    }
    out.levels.push_back(lvl);
  }
  // Policy-only clusters become sub-levels of the latent interval they fall
  // in.
  for (std::size_t c = 0; c < infos.size(); ++c) {
    if (infos[c].has_p) continue;
    int k = 0;
    for (std::size_t l = 0; l < out.levels.size(); ++l)
      if (out.levels[l].p <= infos[c].center) k = static_cast<int>(l);
    LevelSets::SubLevel sub;
    sub.q = infos[c].center;
    for (const Item& it : infos[c].items) sub.members.push_back(it.z);
    out.levels[k].subs.push_back(sub);
    int j = static_cast<int>(out.levels[k].subs.size());
    for (const Item& it : infos[c].items) out.q_index[it.z] = {k, j};
  }
  return out;
}

LevelSets levels_from_fold_impl(const Dataset& ds,
                                const std::vector<std::size_t>& fold,
                                const PolicyFn& policy,
                                const DmlConfig& config) {
  InstrumentFits fits =
      fit_instrument_nuisances(ds, fold, policy, config, nullptr);
  std::map<std::string, double> p_bar, q_bar;
  for (const auto& [z, p] : fits.p_z) {
    double sp = 0.0, sq = 0.0;
    for (std::size_t i : fold) {
      double pv = p(covariate_row(ds, i));
      sp += pv;
      sq += policy.apply(z, pv);
    }
    p_bar[z] = sp / static_cast<double>(fold.size());
    q_bar[z] = sq / static_cast<double>(fold.size());
  }
  std::vector<std::string> zs;
  for (const auto& [z, p] : p_bar) {
    (void)p;
    zs.push_back(z);
  }
  return cluster_levels_impl(zs, p_bar, q_bar, config.c_gap);
}

NuisanceSet fit_impl(const Dataset& ds, const std::vector<std::size_t>& fold,
                     const LevelSets& levels, const PolicyFn& policy,
                     const DmlConfig& config, bool* clipped) {
  NuisanceSet out;
  const int K = levels.top();
  InstrumentFits fits =
      fit_instrument_nuisances(ds, fold, policy, config, clipped);
  out.p_z = fits.p_z;
  out.pi_z = fits.pi_z;
  out.q_z = fits.q_z;
  out.dphi_z = fits.dphi_z;

  // Per-row level membership and policy placement (O(1) lookups below).
  std::vector<int> row_level(ds.size(), -1), row_qk(ds.size(), -1),
      row_qj(ds.size(), -1);
  for (std::size_t i : fold) {
    row_level[i] = levels.s_index.at(ds.z[i]);
    auto qi = levels.q_index.at(ds.z[i]);
    row_qk[i] = qi.first;
    row_qj[i] = qi.second;
  }

  // Level-set probabilities, propensity levels and per-level row groups.
  std::vector<Predictor> pi_level(K + 1), p_level(K + 1);
  std::vector<std::vector<std::size_t>> level_rows(K + 1),
      level_rows_treated(K + 1);
  for (std::size_t i : fold) {
    int k = row_level[i];
    level_rows[k].push_back(i);
    if (ds.w[i] == 1) level_rows_treated[k].push_back(i);
  }
  for (int k = 0; k <= K; ++k) {
    const LevelSets::Level& lvl = levels.levels[k];
    if (lvl.s_members.empty()) {
      pi_level[k] = constant_predictor(1.0);
      p_level[k] = constant_predictor(lvl.p);
      continue;
    }
    if (level_rows[k].size() < config.min_cell)
      throw std::invalid_argument(
          "insufficient data: an instrument level set has fewer rows than the "
          "minimum cell size");
    Predictor pi_raw = fit_on_rows(
        ds, fold, [&](std::size_t i) { return row_level[i] == k ? 1.0 : 0.0; },
        config.learner);
    pi_level[k] = clip_probability(ds, fold, pi_raw, config.c_pi, clipped);
    std::vector<Predictor> members;
    for (const std::string& z : lvl.s_members) members.push_back(fits.p_z.at(z));
    p_level[k] = [members](const std::vector<double>& x) {
      double s = 0.0;
      for (const Predictor& f : members) s += f(x);
      return clamp01(s / static_cast<double>(members.size()));
    };
  }
  out.p_top = p_level[K];
  out.pi_top = pi_level[K];

  // Average of the per-instrument policy values over a group of instruments.
  auto group_q = [&](const std::vector<std::string>& members) -> Predictor {
    std::vector<Predictor> fns;
    for (const std::string& z : members) fns.push_back(fits.q_z.at(z));
    return [fns](const std::vector<double>& x) {
      double s = 0.0;
      for (const Predictor& f : fns) s += f(x);
      return s / static_cast<double>(fns.size());
    };
  };

  // Tail beyond the highest baseline level.
  out.gamma_top = fit_on_rows(
      ds, fold,
      [&](std::size_t i) {
        return (row_qk[i] == K && row_qj[i] >= 1) ? 1.0 : 0.0;
      },
      config.learner);

  // Rearranged within-level outcome-times-treatment means for the binary
  // evaluator (sorted across levels pointwise in x, a monotone projection).
  std::vector<Predictor> p1_sorted;
  if (config.binary_outcome) {
    std::vector<Predictor> p1_raw(K + 1);
    for (int k = 0; k <= K; ++k) {
      if (levels.levels[k].s_members.empty()) {
        p1_raw[k] = constant_predictor(0.0);
        continue;
      }
      p1_raw[k] = fit_on_rows(
          ds, level_rows[k],
          [&](std::size_t i) { return ds.y[i] * static_cast<double>(ds.w[i]); },
          config.learner);
    }
    p1_sorted.resize(K + 1);
    for (int k = 0; k <= K; ++k) {
      p1_sorted[k] = [p1_raw, k](const std::vector<double>& x) {
        std::vector<double> vals;
        vals.reserve(p1_raw.size());
        for (const Predictor& f : p1_raw) vals.push_back(f(x));
        std::sort(vals.begin(), vals.end());
        return vals[k];
      };
    }
  }

  out.intervals.resize(K);
  for (int k = 0; k < K; ++k) {
    NuisanceSet::Interval& I = out.intervals[k];
    const LevelSets::Level& lvl = levels.levels[k];
    I.p_lo = p_level[k];
    I.p_hi = p_level[k + 1];
    I.pi_lo = pi_level[k];
    I.pi_hi = pi_level[k + 1];
    I.gamma_full = fit_on_rows(
        ds, fold,
        [&](std::size_t i) {
          double a = row_qk[i] >= k + 1 ? 1.0 : 0.0;
          double b = row_level[i] >= k + 1 ? 1.0 : 0.0;
          return a - b;
        },
        config.learner);
    const int lk = static_cast<int>(lvl.subs.size());
    for (int j = 1; j <= lk; ++j) {
      NuisanceSet::Sub sub;
      sub.q = group_q(lvl.subs[j - 1].members);
      sub.gamma = fit_on_rows(
          ds, fold,
          [&](std::size_t i) {
            return (row_qk[i] == k && row_qj[i] >= j) ? 1.0 : 0.0;
          },
          config.learner);
      I.subs.push_back(sub);
    }

    if (config.binary_outcome) {
      I.P1_lo = p1_sorted[k];
      I.P1_hi = p1_sorted[k + 1];
      continue;
    }

    // Continuous outcome: within-arm means and boundary quantiles of the
    // latent-interval complier law.
    const bool lo_empty = lvl.s_members.empty();
    I.Jfull_lo = lo_empty ? constant_predictor(0.0)
                          : fit_on_rows(ds, level_rows_treated[k],
                                        [&](std::size_t i) { return ds.y[i]; },
                                        config.learner);
    I.Jfull_hi = fit_on_rows(ds, level_rows_treated[k + 1],
                             [&](std::size_t i) { return ds.y[i]; },
                             config.learner);

    // Reweighting that isolates the complier law between the two levels.
    std::vector<double> omega(fold.size()), yfold(fold.size());
    for (std::size_t r = 0; r < fold.size(); ++r) {
      std::size_t i = fold[r];
      yfold[r] = ds.y[i];
      double o = 0.0;
      if (ds.w[i] == 1) {
        const std::vector<double>& x = covariate_row(ds, i);
        if (row_level[i] == k + 1)
          o += 1.0 / pi_level[k + 1](x);
        else if (row_level[i] == k && !lo_empty)
          o -= 1.0 / pi_level[k](x);
      }
      omega[r] = o;
    }
    // The zero-quantile (left endpoint of the complier support) is not a
    // stable argmin of the pinball objective: the objective is flat below
    // the support and sampling noise drags the minimizer toward the global
    // outcome minimum, which leaves the mean score unchanged but makes the
    // variance estimate inconsistent.  Anchoring the first threshold at a
    // small fixed interior quantile keeps it consistent for a point with
    // positive density; the induced bound bias is O(delta^2).
    const double dp_hat =
        std::max(levels.levels[k + 1].p - levels.levels[k].p, 0.0);
    for (int m = 0; m <= lk; ++m) {
      double target =
          m == 0 ? kNuZeroQuantile * dp_hat
                 : levels.levels[k].subs[m - 1].q - levels.levels[k].p;
      double nu = quantile_nuisance_scalar(yfold, omega, target);
      I.nu.push_back(constant_predictor(nu));
      // Strict inequality: with the half-open outcome bands [nu_j, nu_{j+1})
      // the quantile-integral telescoping is exact even on atomic laws only
      // when the threshold probability is P(Y < nu).
      auto below = [&, nu](std::size_t i) { return ds.y[i] < nu ? 1.0 : 0.0; };
      I.M_lo.push_back(lo_empty ? constant_predictor(0.0)
                                : fit_on_rows(ds, level_rows_treated[k], below,
                                              config.learner));
      I.M_hi.push_back(
          fit_on_rows(ds, level_rows_treated[k + 1], below, config.learner));
    }
    for (int m = 0; m + 1 <= lk; ++m) {
      double a = I.nu[m]({});
      double b = I.nu[m + 1]({});
      auto band = [&, a, b](std::size_t i) {
        return (ds.y[i] >= a && ds.y[i] < b) ? ds.y[i] : 0.0;
      };
      I.Jband_lo.push_back(lo_empty ? constant_predictor(0.0)
                                    : fit_on_rows(ds, level_rows_treated[k],
                                                  band, config.learner));
      I.Jband_hi.push_back(
          fit_on_rows(ds, level_rows_treated[k + 1], band, config.learner));
    }
  }
  return out;
}

Observation make_observation(const Dataset& ds, std::size_t i) {
  Observation o;
  o.y = ds.y[i];
  o.w = ds.w[i];
  o.z = ds.z[i];
  o.x = covariate_row(ds, i);
  return o;
}

Dataset flip_treatment(const Dataset& ds) {
  Dataset out = ds;
  for (int& w : out.w) w = 1 - w;
  return out;
}

Dataset negate_outcome(const Dataset& ds) {
  Dataset out = ds;
  for (double& y : out.y) y = -y;
  out.y_min = -ds.y_max;
  out.y_max = -ds.y_min;
  return out;
}

struct SideStats {
  double point = 0.0;
  double variance = 0.0;
  std::size_t m = 0;
};

SideStats summarize(const std::vector<double>& scores) {
  SideStats s;
  s.m = scores.size();
  double mean = std::accumulate(scores.begin(), scores.end(), 0.0) /
                static_cast<double>(s.m);
  double ss = 0.0;
  for (double v : scores) ss += (v - mean) * (v - mean);
  s.point = mean;
  s.variance = ss / static_cast<double>(s.m);
  return s;
}

}  // namespace

void Dataset::validate() const {
  const std::size_t n = y.size();
  if (n == 0) throw std::invalid_argument("empty dataset");
  if (w.size() != n || z.size() != n)
    throw std::invalid_argument("dataset columns have mismatched lengths");
  if (!x.empty() && x.size() != n)
    throw std::invalid_argument("covariate column has mismatched length");
  if (!(y_min <= y_max))
    throw std::invalid_argument("invalid outcome support bounds");
  std::size_t dim = x.empty() ? 0 : x[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] != 0 && w[i] != 1)
      throw std::invalid_argument("treatment indicator must be 0 or 1");
    if (y[i] < y_min - 1e-12 || y[i] > y_max + 1e-12)
      throw std::invalid_argument("outcome outside the declared support");
    if (!x.empty() && x[i].size() != dim)
      throw std::invalid_argument("covariate rows have mismatched dimensions");
  }
}

double PolicySpec::apply(const std::string& z, double p) const {
  switch (kind) {
    case Kind::kUniformShift:
      return clamp01(p + alpha);
    case Kind::kProportional:
      return clamp01((1.0 + alpha) * p);
    case Kind::kExplicitLevels:
      return clamp01(targets.at(z));
  }
  return p;
}

double PolicySpec::derivative(const std::string& z, double p) const {
  switch (kind) {
    case Kind::kUniformShift:
      return (p + alpha > 0.0 && p + alpha < 1.0) ? 1.0 : 0.0;
    case Kind::kProportional:
      return ((1.0 + alpha) * p > 0.0 && (1.0 + alpha) * p < 1.0)
                 ? 1.0 + alpha
                 : 0.0;
    case Kind::kExplicitLevels:
      (void)z;
      return 0.0;
  }
  return 0.0;
}

LevelSets cluster_levels(const std::vector<std::string>& instruments,
                         const std::map<std::string, double>& p_bar,
                         const std::map<std::string, double>& q_bar,
                         double c_gap) {
  return cluster_levels_impl(instruments, p_bar, q_bar, c_gap);
}

double quantile_nuisance_scalar(const std::vector<double>& y,
                                const std::vector<double>& omega,
                                double target) {
  if (y.size() != omega.size())
    throw std::invalid_argument("mismatched lengths in quantile solve");
  const double n = static_cast<double>(y.size());
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (omega[i] != 0.0) pts.emplace_back(y[i], omega[i]);
  if (pts.empty()) return 0.0;
  std::sort(pts.begin(), pts.end());
  double best_value = 0.0;
  double best_obj = std::numeric_limits<double>::infinity();
  double cum_w = 0.0, cum_wy = 0.0;
  std::size_t i = 0;
  while (i < pts.size()) {
    const double v = pts[i].first;
    double obj = (v * cum_w - cum_wy) / n - target * v;
    if (obj < best_obj) {
      best_obj = obj;
      best_value = v;
    }
    while (i < pts.size() && pts[i].first == v) {
      cum_w += pts[i].second;
      cum_wy += pts[i].second * pts[i].first;
      ++i;
    }
  }
  return best_value;
}

std::vector<double> monotone_rearrange(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return values;
}

double score_binary(const Observation& obs, const NuisanceSet& nuis,
                    const LevelSets& levels, Side side, double y_min,
                    double y_max) {
  const std::vector<double>& x = obs.x;
  const int K = levels.top();
  const int kz = levels.s_index.at(obs.z);
  const auto [qk, qj] = levels.q_index.at(obs.z);
  const double w = static_cast<double>(obs.w);
  const double y = obs.y;

  const double p_own = nuis.p_z.at(obs.z)(x);
  const double pi_own = nuis.pi_z.at(obs.z)(x);
  const double dphi_own = nuis.dphi_z.at(obs.z)(x);
  // Value of the instrument-set correction sum when the row's own
  // instrument belongs to the set; all other summands vanish on this row.
  const double t_own = dphi_own * (w - p_own) / pi_own;

  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    const NuisanceSet::Interval& I = nuis.intervals[k];
    const double pk = I.p_lo(x), pk1 = I.p_hi(x);
    const double pik = I.pi_lo(x), pik1 = I.pi_hi(x);
    const bool in_lo = kz == k, in_hi = kz == k + 1;
    const double P1m = I.P1_lo(x), P1p = I.P1_hi(x);
    const double dp = std::max(pk1 - pk, 0.0);
    const double Jfull = std::min(dp, std::max(0.0, P1p - P1m));
    const double RPk = in_lo ? (y * w - P1m) / pik : 0.0;
    const double RPk1 = in_hi ? (y * w - P1p) / pik1 : 0.0;
    const double Rpk = in_lo ? (w - pk) / pik : 0.0;
    const double Rpk1 = in_hi ? (w - pk1) / pik1 : 0.0;

    const double gfull = I.gamma_full(x);
    const double A = qk >= k + 1 ? 1.0 : 0.0;
    const double B = kz >= k + 1 ? 1.0 : 0.0;
    const double psi_full = Jfull + RPk1 - RPk;
    total += gfull * psi_full + Jfull * (A - B - gfull);

    const int lk = static_cast<int>(I.subs.size());
    double q_prev = pk;
    for (int j = 1; j <= lk; ++j) {
      const double qv = I.subs[j - 1].q(x);
      const double gam = I.subs[j - 1].gamma(x);
      const double tsum_j = (qk == k && qj == j) ? t_own : 0.0;
      const double tsum_prev = (qk == k && qj == j - 1) ? t_own : 0.0;
      double h = 0.0, psih = 0.0;
      if (side == Side::kLower) {
        const double thr = pk1 - Jfull;
        h = std::max(0.0, qv - std::max(q_prev, thr));
        const bool Ii = h > 0.0;
        const bool D = q_prev < thr && thr < qv;
        const bool E = q_prev > thr;
        const double a_hi = D ? -1.0 : 0.0;
        const double a_lo = (j == 1 && E && Ii) ? -1.0 : 0.0;
        psih = h + (D ? 1.0 : 0.0) * (RPk1 - RPk) + a_hi * Rpk1 + a_lo * Rpk +
               (Ii ? 1.0 : 0.0) * tsum_j -
               ((j >= 2 && E && Ii) ? 1.0 : 0.0) * tsum_prev;
      } else {
        const double thr = pk + Jfull;
        h = std::min(qv - q_prev, std::max(0.0, thr - q_prev));
        const bool Ii = qv < thr;
        const bool Bj = q_prev < thr;
        const bool D = Bj && !Ii;
        const double a_lo =
            j >= 2 ? (D ? 1.0 : 0.0)
                   : -((Ii ? 1.0 : 0.0) * (Jfull > 0.0 ? 1.0 : 0.0));
        psih = h + (D ? 1.0 : 0.0) * (RPk1 - RPk) + a_lo * Rpk +
               (Ii ? 1.0 : 0.0) * tsum_j -
               ((j >= 2 && Bj) ? 1.0 : 0.0) * tsum_prev;
      }
      const double ind = (qk == k && qj >= j) ? 1.0 : 0.0;
      total += gam * psih + h * (ind - gam);
      q_prev = qv;
    }
  }

  // Policy mass pushed beyond the highest baseline level.
  const double y_tail = side == Side::kLower ? y_min : y_max;
  const double pK = nuis.p_top(x), piK = nuis.pi_top(x);
  const double gK = nuis.gamma_top(x);
  const bool in_tail = qk == K && qj >= 1;
  const double q_own = nuis.q_z.at(obs.z)(x);
  total += y_tail * ((in_tail ? 1.0 : 0.0) * (q_own - pK) +
                     (in_tail ? 1.0 : 0.0) * dphi_own * (w - p_own) -
                     gK * (kz == K ? (w - pK) / piK : 0.0));
  return total;
}

double score_continuous_outcome(const Observation& obs,
                                const NuisanceSet& nuis,
                                const LevelSets& levels, double y_min,
                                double y_max) {
  const std::vector<double>& x = obs.x;
  const int K = levels.top();
  const int kz = levels.s_index.at(obs.z);
  const auto [qk, qj] = levels.q_index.at(obs.z);
  const double w = static_cast<double>(obs.w);
  const double y = obs.y;

  const double p_own = nuis.p_z.at(obs.z)(x);
  const double pi_own = nuis.pi_z.at(obs.z)(x);
  const double dphi_own = nuis.dphi_z.at(obs.z)(x);
  const double t_own = dphi_own * (w - p_own) / pi_own;

  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    const NuisanceSet::Interval& I = nuis.intervals[k];
    const double pk = I.p_lo(x), pk1 = I.p_hi(x);
    const double pik = I.pi_lo(x), pik1 = I.pi_hi(x);
    const bool in_lo = kz == k, in_hi = kz == k + 1;
    const double Jfp = I.Jfull_hi(x), Jfm = I.Jfull_lo(x);
    const double dp = std::max(pk1 - pk, 0.0);
    const double Jfull = std::min(dp * y_max,
                                  std::max(dp * y_min, pk1 * Jfp - pk * Jfm));

    const double gfull = I.gamma_full(x);
    const double A = qk >= k + 1 ? 1.0 : 0.0;
    const double B = kz >= k + 1 ? 1.0 : 0.0;
    const double psi_full =
        Jfull + (in_hi ? w * (y - Jfp) / pik1 : 0.0) -
        (in_lo ? w * (y - Jfm) / pik : 0.0) +
        Jfp * (in_hi ? (w - pk1) / pik1 : 0.0) -
        Jfm * (in_lo ? (w - pk) / pik : 0.0);
    total += gfull * psi_full + Jfull * (A - B - gfull);

    const int lk = static_cast<int>(I.subs.size());
    if (lk == 0) continue;
    std::vector<double> nu(lk + 1), Mp(lk + 1), Mm(lk + 1), qv(lk + 1),
        IFMp(lk + 1), IFMm(lk + 1);
    for (int m = 0; m <= lk; ++m) {
      nu[m] = I.nu[m](x);
      Mp[m] = I.M_hi[m](x);
      Mm[m] = I.M_lo[m](x);
      qv[m] = m == 0 ? pk : I.subs[m - 1].q(x);
      const double below = y < nu[m] ? 1.0 : 0.0;
      IFMp[m] = in_hi ? w * (below - Mp[m]) / pik1 : 0.0;
      IFMm[m] = in_lo ? w * (below - Mm[m]) / pik : 0.0;
    }
    for (int j = 1; j <= lk; ++j) {
      const int a = j - 1, b = j;
      const double Jpa = I.Jband_hi[a](x), Jma = I.Jband_lo[a](x);
      const double Ja = pk1 * Jpa - pk * Jma;
      const double band = (y >= nu[a] && y < nu[b]) ? y : 0.0;
      const double IFJ = (in_hi ? w * (band - Jpa) / pik1 : 0.0) -
                         (in_lo ? w * (band - Jma) / pik : 0.0);
      const double bra_a =
          pk1 * Mp[a] - pk * Mm[a] - (qv[a] - pk) + IFMp[a] - IFMm[a];
      const double bra_b =
          pk1 * Mp[b] - pk * Mm[b] - (qv[b] - pk) + IFMp[b] - IFMm[b];
      // The left band endpoint of the first sub-interval is p_k itself, so
      // -(q_0 - p_k) vanishes identically and contributes no p_k
      // sensitivity; for later sub-intervals q_{j-1} is a free nuisance and
      // the +nu_a offset is required.
      const double alpha_lo = -Jma - nu[a] * Mm[a] + nu[b] * Mm[b] +
                              (j == 1 ? 0.0 : nu[a]) - nu[b];
      const double alpha_hi = Jpa + nu[a] * Mp[a] - nu[b] * Mp[b];
      const double tsum_a = (qk == k && qj == a) ? t_own : 0.0;
      const double tsum_b = (qk == k && qj == b) ? t_own : 0.0;
      const double psiJ = Ja + IFJ + nu[a] * bra_a - nu[b] * bra_b +
                          alpha_lo * (in_lo ? (w - pk) / pik : 0.0) +
                          alpha_hi * (in_hi ? (w - pk1) / pik1 : 0.0) -
                          nu[a] * tsum_a + nu[b] * tsum_b;
      const double gam = I.subs[j - 1].gamma(x);
      const double ind = (qk == k && qj >= j) ? 1.0 : 0.0;
      total += gam * psiJ + Ja * (ind - gam);
    }
  }

  const double pK = nuis.p_top(x), piK = nuis.pi_top(x);
  const double gK = nuis.gamma_top(x);
  const bool in_tail = qk == K && qj >= 1;
  const double q_own = nuis.q_z.at(obs.z)(x);
  total += y_min * ((in_tail ? 1.0 : 0.0) * (q_own - pK) +
                    (in_tail ? 1.0 : 0.0) * dphi_own * (w - p_own) -
                    gK * (kz == K ? (w - pK) / piK : 0.0));
  return total;
}

std::vector<double> evaluate_scores(const Dataset& ds,
                                    const std::vector<std::size_t>& rows,
                                    const NuisanceSet& nuis,
                                    const LevelSets& levels, Side side,
                                    bool binary_outcome) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) {
    Observation obs = make_observation(ds, i);
    if (binary_outcome) {
      out.push_back(score_binary(obs, nuis, levels, side, ds.y_min, ds.y_max));
    } else if (side == Side::kLower) {
      out.push_back(
          score_continuous_outcome(obs, nuis, levels, ds.y_min, ds.y_max));
    } else {
      // Upper bound via the sign-flipped problem; the nuisances must have
      // been fitted on the outcome-negated dataset.
      obs.y = -obs.y;
      out.push_back(
          -score_continuous_outcome(obs, nuis, levels, -ds.y_max, -ds.y_min));
    }
  }
  return out;
}

NuisanceSet fit_nuisances(const Dataset& ds,
                          const std::vector<std::size_t>& fold,
                          const LevelSets& levels, const PolicySpec& policy,
                          const DmlConfig& config, bool* pi_clipped) {
  return fit_impl(ds, fold, levels, make_policy_fn(policy), config, pi_clipped);
}

LevelSets cluster_levels_from_fold(const Dataset& ds,
                                   const std::vector<std::size_t>& fold,
                                   const PolicySpec& policy,
                                   const DmlConfig& config) {
  return levels_from_fold_impl(ds, fold, make_policy_fn(policy), config);
}

DmlResult dml_estimate(const Dataset& ds, const PolicySpec& policy,
                       const DmlConfig& config) {
  ds.validate();
  if (config.binary_outcome) {
    for (double v : ds.y)
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument(
            "binary-outcome estimation requires outcomes in {0, 1}");
  }
  const std::size_t n = ds.size();
  if (n < 4) throw std::invalid_argument("too few observations to split");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(config.seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t half = n / 2;
  std::vector<std::size_t> i1(perm.begin(), perm.begin() + half);
  std::vector<std::size_t> i2(perm.begin() + half, perm.end());

  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
      folds;
  folds.emplace_back(i1, i2);
  if (config.cross_fit) folds.emplace_back(i2, i1);

  const PolicyFn policy_treated = make_policy_fn(policy);
  const PolicyFn policy_untreated = transform_policy(policy_treated);
  const Dataset ds_untreated = flip_treatment(ds);

  DmlResult result;
  std::vector<SideStats> lower_stats, upper_stats;
  for (const auto& [train, eval] : folds) {
    std::vector<double> lower(eval.size(), 0.0), upper(eval.size(), 0.0);
    const std::array<std::pair<const Dataset*, const PolicyFn*>, 2> arms = {
        {{&ds, &policy_treated}, {&ds_untreated, &policy_untreated}}};
    for (const auto& [arm_ds, arm_policy] : arms) {
      LevelSets lv = levels_from_fold_impl(*arm_ds, train, *arm_policy, config);
      if (config.binary_outcome) {
        NuisanceSet nuis = fit_impl(*arm_ds, train, lv, *arm_policy, config,
                                    &result.pi_clipped);
        for (std::size_t r = 0; r < eval.size(); ++r) {
          Observation obs = make_observation(*arm_ds, eval[r]);
          lower[r] += score_binary(obs, nuis, lv, Side::kLower, arm_ds->y_min,
                                   arm_ds->y_max);
          upper[r] += score_binary(obs, nuis, lv, Side::kUpper, arm_ds->y_min,
                                   arm_ds->y_max);
        }
      } else {
        NuisanceSet nuis_lower = fit_impl(*arm_ds, train, lv, *arm_policy,
                                          config, &result.pi_clipped);
        const Dataset arm_neg = negate_outcome(*arm_ds);
        NuisanceSet nuis_upper = fit_impl(arm_neg, train, lv, *arm_policy,
                                          config, &result.pi_clipped);
        for (std::size_t r = 0; r < eval.size(); ++r) {
          Observation obs = make_observation(*arm_ds, eval[r]);
          lower[r] += score_continuous_outcome(obs, nuis_lower, lv,
                                               arm_ds->y_min, arm_ds->y_max);
          Observation neg = make_observation(arm_neg, eval[r]);
          upper[r] -= score_continuous_outcome(neg, nuis_upper, lv,
                                               arm_neg.y_min, arm_neg.y_max);
        }
      }
    }
    lower_stats.push_back(summarize(lower));
    upper_stats.push_back(summarize(upper));
  }

  auto aggregate = [&](const std::vector<SideStats>& st) {
    EstimateWithCI e;
    double point = 0.0, var = 0.0;
    for (const SideStats& s : st) {
      point += s.point;
      var += s.variance;
    }
    point /= static_cast<double>(st.size());
    var /= static_cast<double>(st.size());
    const double m = config.cross_fit ? static_cast<double>(n)
                                      : static_cast<double>(st[0].m);
    e.point = point;
    e.se = std::sqrt(var / m);
    return e;
  };
  result.lower = aggregate(lower_stats);
  result.upper = aggregate(upper_stats);
  if (result.lower.point > result.upper.point)
    std::swap(result.lower, result.upper);
  result.lower.ci95 = {result.lower.point - 1.96 * result.lower.se,
                       result.lower.point + 1.96 * result.lower.se};
  result.upper.ci95 = {result.upper.point - 1.96 * result.upper.se,
                       result.upper.point + 1.96 * result.upper.se};
  return result;
}

}  // namespace ivot
