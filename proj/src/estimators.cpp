#include "loal/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "loal/errors.hpp"
#include "loal/glm.hpp"

namespace loal {

MsmSpec MsmSpec::basic(bool with_modifier, bool with_interaction) {
  MsmSpec spec;
  spec.terms.push_back(MsmTerm::intercept);
  if (with_modifier) spec.terms.push_back(MsmTerm::baseline_modifier);
  spec.terms.push_back(MsmTerm::cum);
  if (with_interaction) spec.terms.push_back(MsmTerm::modifier_cum);
  return spec;
}

void MsmSpec::validate(const LongitudinalDataset& data) const {
  if (std::find(terms.begin(), terms.end(), MsmTerm::intercept) == terms.end())
    throw ValidationError("MSM spec must contain an intercept");
  for (MsmTerm t : terms)
    if ((t == MsmTerm::baseline_modifier || t == MsmTerm::modifier_cum) &&
        data.baseline_modifier < 0)
      throw ValidationError("MSM spec uses the baseline modifier but none is declared");
}

WeightDiagnostics WeightDiagnostics::from(std::vector<double> v) {
  WeightDiagnostics d;
  if (v.empty()) return d;
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * (v.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
  };
  d.minv = v.front();
  d.q10 = q(0.10);
  d.q25 = q(0.25);
  d.q50 = q(0.50);
  d.q75 = q(0.75);
  d.q90 = q(0.90);
  d.maxv = v.back();
  return d;
}

namespace {

double msm_regressor(const LongitudinalDataset& data, MsmTerm term, int i,
                     double cum) {
  switch (term) {
    case MsmTerm::intercept:
      return 1.0;
    case MsmTerm::baseline_modifier:
      return data.covariates[0](i, data.baseline_modifier);
    case MsmTerm::cum:
      return cum;
    case MsmTerm::modifier_cum:
      return data.covariates[0](i, data.baseline_modifier) * cum;
  }
  return 0.0;
}

}  // namespace

MsmEstimate fit_msm_iptw(const LongitudinalDataset& data,
                         const CumulativeWeights& weights, const MsmSpec& spec) {
  spec.validate(data);
  std::vector<int> rows;
  for (int i = 0; i < data.n; ++i)
    if (weights.usable[i]) rows.push_back(i);
  const int m = static_cast<int>(rows.size());
  if (m <= spec.size())
    throw NumericError("fit_msm_iptw: too few fully-observed subjects");

  Eigen::MatrixXd X(m, spec.size());
  Eigen::VectorXd y(m), w(m);
  for (int r = 0; r < m; ++r) {
    const int i = rows[r];
    double cum = 0.0;
    for (int t = 0; t <= data.T; ++t) cum += data.treatments(i, t);
    for (int j = 0; j < spec.size(); ++j)
      X(r, j) = msm_regressor(data, spec.terms[j], i, cum);
    y(r) = data.outcome(i);
    const double wi = weights.weights(i);
    if (!(wi >= 0.0) || !std::isfinite(wi))
      throw ValidationError("fit_msm_iptw: weights must be finite and nonnegative");
    w(r) = wi;
  }

  const GlmFit fit = fit_linear_wls(X, y, w);
  MsmEstimate est;
  est.mu = fit.coefficients;
  est.se = sandwich_se(X, y, w, fit);
  est.estimator = "iptw";
  std::vector<double> wv(w.data(), w.data() + m);
  est.weight_diag = WeightDiagnostics::from(wv);
  std::vector<double> pv;
  for (int i : rows) pv.push_back(weights.treat_prob(i));
  est.treat_prob_diag = WeightDiagnostics::from(pv);
  est.has_weight_diag = true;
  return est;
}

MsmEstimate g_computation(const LongitudinalDataset& data, const QSequence& qseq,
                          const MsmSpec& spec) {
  spec.validate(data);
  const std::vector<int>& rows = qseq.risk[0];
  const int P = qseq.patterns.size();
  const long n_rows = static_cast<long>(rows.size()) * P;
  if (n_rows <= spec.size())
    throw NumericError("g_computation: too few stacked rows");

  Eigen::MatrixXd X(n_rows, spec.size());
  Eigen::VectorXd y(n_rows);
  std::vector<int> cluster(n_rows);
  long r = 0;
  for (int i : rows) {
    for (int pat = 0; pat < P; ++pat) {
      double cum = 0.0;
      for (int t = 0; t <= data.T; ++t) cum += qseq.patterns.patterns[pat][t];
      for (int j = 0; j < spec.size(); ++j)
        X(r, j) = msm_regressor(data, spec.terms[j], i, cum);
      y(r) = qseq.qhat[0](i, pat);
      cluster[r] = i;
      ++r;
    }
  }
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(n_rows);
  const GlmFit fit = fit_linear_wls(X, y, w);
  MsmEstimate est;
  est.mu = fit.coefficients;
  est.se = sandwich_se(X, y, w, fit, cluster);
  est.estimator = "gcomp";
  return est;
}

PropensityFit oracle_fit(const LongitudinalDataset& data, const OracleSpec& spec,
                         bool apply_fusion) {
  PropensityFit out;
  out.provenance = apply_fusion ? PropensityFit::Provenance::oracle_select_fuse
                                : PropensityFit::Provenance::oracle_select;

  auto fit_one = [&](const PooledDesign& design,
                     const std::vector<CoefIndex>& support,
                     const std::vector<std::vector<CoefIndex>>& fuse_groups,
                     Eigen::VectorXd& coefs, std::vector<bool>& support_mask,
                     std::vector<int>& groups) {
    const int p = design.cols();
    support_mask.assign(p, false);
    for (int j = 0; j < p; ++j)
      if (design.unpenalized[j]) support_mask[j] = true;
    for (const auto& idx : support) {
      const int j = design.col_of(idx);
      if (j < 0)
        throw ValidationError("oracle support names a column not in the design");
      support_mask[j] = true;
    }
    groups.assign(p, -1);
    int next_group = 0;
    std::vector<int> merged_to(p, -1);  // representative column per fused group
    if (apply_fusion) {
      for (const auto& grp : fuse_groups) {
        if (grp.size() < 2) continue;
        int rep = -1;
        for (const auto& idx : grp) {
          const int j = design.col_of(idx);
          if (j < 0 || !support_mask[j])
            throw ValidationError("oracle fuse group member is not in the support");
          if (rep < 0) rep = j;
          merged_to[j] = rep;
          groups[j] = next_group;
        }
        ++next_group;
      }
    }

    // Columns of the constrained fit: free supported columns plus one summed
    // column per fused group.
    std::vector<int> rep_of(p, -1);
    std::vector<std::vector<int>> members;
    std::vector<int> col_ids;
    for (int j = 0; j < p; ++j) {
      if (!support_mask[j]) continue;
      const int rep = merged_to[j] >= 0 ? merged_to[j] : j;
      if (rep_of[rep] == -1) {
        rep_of[rep] = static_cast<int>(members.size());
        members.push_back({});
        col_ids.push_back(rep);
      }
      members[rep_of[rep]].push_back(j);
    }
    const int pf = static_cast<int>(members.size());
    Eigen::MatrixXd Xf = Eigen::MatrixXd::Zero(design.rows(), pf);
    for (int g = 0; g < pf; ++g)
      for (int j : members[g]) Xf.col(g) += design.X.col(j);
    const GlmFit fit =
        fit_logistic(Xf, design.y, Eigen::VectorXd::Ones(design.rows()));
    coefs = Eigen::VectorXd::Zero(p);
    for (int g = 0; g < pf; ++g)
      for (int j : members[g]) coefs(j) = fit.coefficients(g);
    // Label the remaining supported singletons.
    for (int j = 0; j < p; ++j)
      if (support_mask[j] && groups[j] == -1 && !design.unpenalized[j])
        groups[j] = next_group++;
    out.converged = out.converged && fit.converged;
  };

  const PooledDesign design = build_pooled_treatment_design(data);
  out.columns_a = design.columns;
  fit_one(design, spec.support_a, spec.fuse_groups_a, out.alpha, out.support_a,
          out.fuse_group_a);
  if (data.has_censoring()) {
    const PooledDesign cdesign = build_pooled_censoring_design(data);
    out.has_censoring = true;
    out.columns_c = cdesign.columns;
    fit_one(cdesign, spec.support_c, spec.fuse_groups_c, out.theta, out.support_c,
            out.fuse_group_c);
  }
  return out;
}

}  // namespace loal
