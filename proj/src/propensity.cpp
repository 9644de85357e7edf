#include "loal/propensity.hpp"

#include <cmath>

#include "loal/errors.hpp"
#include "loal/glm.hpp"

namespace loal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Contiguous column range [lo, hi) of each model time in a sorted column list.
std::vector<std::pair<int, int>> time_ranges(const std::vector<CoefIndex>& columns) {
  std::vector<std::pair<int, int>> ranges;
  int max_tau = -1;
  for (const auto& c : columns) max_tau = std::max(max_tau, c.tau);
  ranges.assign(max_tau + 1, {0, 0});
  int j = 0;
  for (int tau = 0; tau <= max_tau; ++tau) {
    const int lo = j;
    while (j < static_cast<int>(columns.size()) && columns[j].tau == tau) ++j;
    ranges[tau] = {lo, j};
  }
  return ranges;
}

double linear_predictor(const LongitudinalDataset& data,
                        const std::vector<CoefIndex>& columns,
                        const Eigen::VectorXd& coefs,
                        const std::pair<int, int>& range, int i) {
  double eta = 0.0;
  for (int j = range.first; j < range.second; ++j) {
    const double c = coefs(j);
    if (c == 0.0) continue;
    const CoefIndex& idx = columns[j];
    double x;
    if (idx.is_intercept())
      x = 1.0;
    else if (idx.is_treatment())
      x = data.treatments(i, idx.k);
    else
      x = data.covariates[idx.block](i, idx.k);
    eta += c * x;
  }
  return eta;
}

}  // namespace

int PropensityFit::n_selected_a() const {
  int c = 0;
  for (bool s : support_a) c += s;
  return c;
}

int PropensityFit::n_selected_c() const {
  int c = 0;
  for (bool s : support_c) c += s;
  return c;
}

namespace {

Stabilizer fit_stabilizer_impl(const LongitudinalDataset& data, int modifier);

}  // namespace

Stabilizer fit_stabilizer(const LongitudinalDataset& data) {
  return fit_stabilizer_impl(data, data.baseline_modifier);
}

Stabilizer fit_marginal_stabilizer(const LongitudinalDataset& data) {
  return fit_stabilizer_impl(data, -1);
}

namespace {

Stabilizer fit_stabilizer_impl(const LongitudinalDataset& data, int modifier) {
  Stabilizer stab;
  stab.modifier = modifier;
  stab.intercept_only = modifier < 0;
  stab.per_time.resize(data.T + 1);
  for (int t = 0; t <= data.T; ++t) {
    std::vector<int> rows;
    for (int i = 0; i < data.n; ++i)
      if (data.in_treatment_risk_set(i, t)) rows.push_back(i);
    const int m = static_cast<int>(rows.size());
    if (m == 0) throw NumericError("empty risk set for stabilizer at time " +
                                   std::to_string(t));
    double treated = 0.0;
    for (int i : rows) treated += data.treatments(i, t);
    // Intercept-only closed form; Laplace smoothing only at degenerate means.
    double p_hat = treated / m;
    if (treated == 0.0 || treated == m) p_hat = (treated + 0.5) / (m + 1.0);
    stab.per_time[t] << std::log(p_hat / (1.0 - p_hat)), 0.0;
    if (stab.intercept_only) continue;
    Eigen::MatrixXd X(m, 2);
    Eigen::VectorXd y(m);
    for (int r = 0; r < m; ++r) {
      X(r, 0) = 1.0;
      X(r, 1) = data.covariates[0](rows[r], stab.modifier);
      y(r) = data.treatments(rows[r], t);
    }
    try {
      const GlmFit fit = fit_logistic(X, y, Eigen::VectorXd::Ones(m));
      if (fit.converged) stab.per_time[t] << fit.coefficients(0), fit.coefficients(1);
    } catch (const NumericError&) {
      // keep the smoothed intercept-only fallback
    }
  }
  return stab;
}

}  // namespace

WeightTable compute_weight_table(const LongitudinalDataset& data,
                                 const PropensityFit& fit, bool stabilized,
                                 const Stabilizer* stab) {
  Stabilizer local;
  if (stabilized && !stab) {
    local = fit_stabilizer(data);
    stab = &local;
  }
  if (data.has_censoring() && !fit.has_censoring)
    throw ValidationError("dataset has censoring but the fit has no censoring model");

  const auto ranges_a = time_ranges(fit.columns_a);
  const int n = data.n;
  const int T = data.T;
  WeightTable table;
  table.treat_w.resize(n, T + 1);
  table.treat_prob.resize(n, T + 1);

  for (int i = 0; i < n; ++i) {
    double w = 1.0, prob = 1.0;
    for (int t = 0; t <= T; ++t) {
      if (data.censored_by(i, t)) {
        for (int s = t; s <= T; ++s) {
          table.treat_w(i, s) = kNaN;
          table.treat_prob(i, s) = kNaN;
        }
        break;
      }
      const int a = data.treatments(i, t);
      double den, num;
      if (data.monotone_treatment && t > 0 && data.treatments(i, t - 1) == 1) {
        den = 1.0;  // already initiated: treatment is deterministic
        num = 1.0;
      } else {
        const double m =
            expit(linear_predictor(data, fit.columns_a, fit.alpha, ranges_a[t], i));
        den = a ? m : 1.0 - m;
        num = 1.0;
        if (stabilized) {
          const double s = stab->prob_treated(data, i, t);
          num = a ? s : 1.0 - s;
        }
      }
      if (den <= 0.0)
        throw NumericError("positivity violation: probability 0 for subject " +
                           std::to_string(i) + " at time " + std::to_string(t));
      w *= num / den;
      prob *= den;
      table.treat_w(i, t) = w;
      table.treat_prob(i, t) = prob;
    }
  }

  const int nc = data.censoring_times();
  table.cens_w = Eigen::MatrixXd::Ones(n, nc + 1);
  table.cens_prob = Eigen::MatrixXd::Ones(n, nc + 1);
  if (data.has_censoring()) {
    const auto ranges_c = time_ranges(fit.columns_c);
    for (int i = 0; i < n; ++i) {
      double w = 1.0, prob = 1.0;
      for (int t = 1; t <= nc; ++t) {
        if (data.censored_by(i, t)) {
          for (int s = t; s <= nc; ++s) {
            table.cens_w(i, s) = kNaN;
            table.cens_prob(i, s) = kNaN;
          }
          break;
        }
        const double p_cens =
            expit(linear_predictor(data, fit.columns_c, fit.theta, ranges_c[t], i));
        const double h = 1.0 - p_cens;
        if (h <= 0.0)
          throw NumericError("positivity violation: censoring probability 1 for "
                             "subject " +
                             std::to_string(i) + " at time " + std::to_string(t));
        w /= h;
        prob *= h;
        table.cens_w(i, t) = w;
        table.cens_prob(i, t) = prob;
      }
    }
  }
  return table;
}

CumulativeWeights compute_cumulative_weights(const LongitudinalDataset& data,
                                             const PropensityFit& fit,
                                             bool stabilized,
                                             const Stabilizer* stab) {
  const WeightTable table = compute_weight_table(data, fit, stabilized, stab);
  const int n = data.n;
  const int nc = data.censoring_times();
  CumulativeWeights out;
  out.weights.resize(n);
  out.treat_prob.resize(n);
  out.cens_prob.resize(n);
  out.usable.assign(n, false);
  for (int i = 0; i < n; ++i) {
    if (data.censored_by(i, data.n_blocks() - 1)) {
      out.weights(i) = kNaN;
      out.treat_prob(i) = kNaN;
      out.cens_prob(i) = kNaN;
      continue;
    }
    out.usable[i] = true;
    out.weights(i) = table.treat_w(i, data.T) * table.cens_w(i, nc);
    out.treat_prob(i) = table.treat_prob(i, data.T);
    out.cens_prob(i) = table.cens_prob(i, nc);
  }
  return out;
}

PropensityFit full_propensity_fit(const LongitudinalDataset& data) {
  PropensityFit out;
  out.provenance = PropensityFit::Provenance::full;
  const PooledDesign design = build_pooled_treatment_design(data);
  const GlmFit fit =
      fit_logistic(design.X, design.y, Eigen::VectorXd::Ones(design.rows()));
  out.columns_a = design.columns;
  out.alpha = fit.coefficients;
  out.support_a.assign(design.cols(), true);
  out.fuse_group_a.assign(design.cols(), -1);
  out.converged = fit.converged;
  if (data.has_censoring()) {
    const PooledDesign cdesign = build_pooled_censoring_design(data);
    const GlmFit cfit =
        fit_logistic(cdesign.X, cdesign.y, Eigen::VectorXd::Ones(cdesign.rows()));
    out.has_censoring = true;
    out.columns_c = cdesign.columns;
    out.theta = cfit.coefficients;
    out.support_c.assign(cdesign.cols(), true);
    out.fuse_group_c.assign(cdesign.cols(), -1);
    out.converged = out.converged && cfit.converged;
  }
  return out;
}

}  // namespace loal
