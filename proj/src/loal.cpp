#include "loal/loal.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "loal/errors.hpp"
#include "loal/glm.hpp"

namespace loal {

Eigen::VectorXd adaptive_weights(const PooledDesign& design, const WorkingBeta& beta,
                                 double gamma) {
  if (!(gamma > 0)) throw ValidationError("adaptive_weights: gamma must be > 0");
  const int p = design.cols();
  Eigen::VectorXd omega =
      Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  for (int j = 0; j < p; ++j) {
    if (design.unpenalized[j]) continue;
    const WorkingBetaEntry* e = beta.find(design.columns[j]);
    if (!e)
      throw NumericError("adaptive_weights: no working coefficient for column " +
                         design.column_names[j]);
    const double b = std::abs(e->beta);
    omega(j) = b == 0.0 ? kInf : std::pow(b, -gamma);
  }
  return omega;
}

namespace {

struct ArmAccumulator {
  // Weighted sums per covariate for the two groups at one model time.
  double w1 = 0.0, w0 = 0.0;
  std::vector<double> x1, x0;
};

// Terms for one model time: groups defined by `group_of(i)` in {0,1},
// weights w(i), covariates in blocks 0..tau.
template <typename GroupFn, typename WeightFn>
void accumulate_terms(const LongitudinalDataset& data, int tau,
                      const std::vector<int>& rows, GroupFn group_of, WeightFn weight,
                      const WorkingBeta& beta, std::vector<BalanceTermValue>& out,
                      double& total, bool& disqualified) {
  int n_cov = 0;
  for (int b = 0; b <= tau; ++b) n_cov += data.block_size(b);
  ArmAccumulator acc;
  acc.x1.assign(n_cov, 0.0);
  acc.x0.assign(n_cov, 0.0);
  for (int i : rows) {
    const double w = weight(i);
    const int g = group_of(i);
    int c = 0;
    if (g == 1) {
      acc.w1 += w;
      for (int b = 0; b <= tau; ++b)
        for (int k = 0; k < data.block_size(b); ++k, ++c)
          acc.x1[c] += w * data.covariates[b](i, k);
    } else {
      acc.w0 += w;
      for (int b = 0; b <= tau; ++b)
        for (int k = 0; k < data.block_size(b); ++k, ++c)
          acc.x0[c] += w * data.covariates[b](i, k);
    }
  }
  const bool empty_arm = !(acc.w1 > 0.0) || !(acc.w0 > 0.0);
  int c = 0;
  for (int b = 0; b <= tau; ++b) {
    for (int k = 0; k < data.block_size(b); ++k, ++c) {
      const WorkingBetaEntry* e = beta.find({tau, b, k});
      if (!e) continue;
      const double ratio = std::abs(e->beta) / std::max(e->se, 1e-300);
      BalanceTermValue term;
      term.idx = {tau, b, k};
      if (empty_arm) {
        term.value = ratio > 0.0 ? kInf : 0.0;
        if (ratio > 0.0) disqualified = true;
      } else {
        term.value = ratio * std::abs(acc.x1[c] / acc.w1 - acc.x0[c] / acc.w0);
      }
      out.push_back(term);
      total += term.value;
    }
  }
}

}  // namespace

BalanceReport balance_metric(const LongitudinalDataset& data,
                             const PropensityFit& refit, const WorkingBeta& beta,
                             const Stabilizer& stab) {
  BalanceReport report;
  report.refit_converged = refit.converged;
  const WeightTable wt = compute_weight_table(data, refit, true, &stab);
  const bool cens = data.has_censoring() && refit.has_censoring;

  for (int tau = 0; tau <= data.T; ++tau) {
    std::vector<int> rows;
    for (int i = 0; i < data.n; ++i)
      if (data.in_treatment_risk_set(i, tau)) rows.push_back(i);
    accumulate_terms(
        data, tau, rows, [&](int i) { return data.treatments(i, tau); },
        [&](int i) {
          double w = wt.treat_w(i, tau);
          if (cens) w *= wt.cens_w(i, tau);
          return w;
        },
        beta, report.treatment_terms, report.M, report.disqualified);
  }

  if (cens) {
    for (int tau = 1; tau <= data.censoring_times(); ++tau) {
      std::vector<int> rows;
      for (int i = 0; i < data.n; ++i)
        if (data.in_censoring_risk_set(i, tau)) rows.push_back(i);
      // Risk-set weights: inverse probabilities through tau - 1 (factors at
      // tau itself are undefined for the censored arm).
      const int tprev = std::min(tau - 1, data.T);
      accumulate_terms(
          data, tau, rows, [&](int i) { return data.censored_by(i, tau); },
          [&](int i) { return wt.cens_w(i, tau - 1) * wt.treat_w(i, tprev); },
          beta, report.censoring_terms, report.N, report.disqualified);
    }
  }
  if (!refit.converged) report.disqualified = true;
  return report;
}

namespace {

struct PathPoint {
  AdaptiveLassoFit lasso;
  GlmFit refit;
  bool refit_ok = true;
};

// Lasso path with warm starts plus unpenalized refits on each support.
std::vector<PathPoint> selection_path(const PooledDesign& design,
                                      const StandardizedDesign& sd,
                                      const Eigen::VectorXd& omega,
                                      const Eigen::VectorXd& grid) {
  std::vector<PathPoint> path(grid.size());
  std::map<std::vector<bool>, std::pair<GlmFit, bool>> refit_cache;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(design.rows());
  const AdaptiveLassoFit* warm = nullptr;
  for (int g = 0; g < grid.size(); ++g) {
    path[g].lasso = adaptive_lasso_logistic(sd, omega, grid(g), warm);
    warm = &path[g].lasso;
    std::vector<bool> fixed(design.cols());
    for (int j = 0; j < design.cols(); ++j) fixed[j] = !path[g].lasso.support[j];
    auto it = refit_cache.find(fixed);
    if (it == refit_cache.end()) {
      std::pair<GlmFit, bool> entry;
      try {
        entry.first = fit_logistic(design.X, design.y, ones, fixed);
        entry.second = entry.first.converged;
      } catch (const NumericError&) {
        entry.second = false;
        entry.first.coefficients = path[g].lasso.coefficients;
        entry.first.converged = false;
      }
      it = refit_cache.emplace(std::move(fixed), std::move(entry)).first;
    }
    path[g].refit = it->second.first;
    path[g].refit_ok = it->second.second;
  }
  return path;
}

PropensityFit make_loal_fit(const PooledDesign& design_a, const PathPoint& pa,
                            const PooledDesign* design_c, const PathPoint* pc,
                            double lambda_a, double lambda_c, double gamma) {
  PropensityFit fit;
  fit.provenance = PropensityFit::Provenance::loal;
  fit.columns_a = design_a.columns;
  fit.alpha = pa.refit.coefficients;
  fit.support_a = pa.lasso.support;
  fit.fuse_group_a.assign(design_a.cols(), -1);
  fit.lambda_a = lambda_a;
  fit.gamma = gamma;
  fit.converged = pa.refit_ok && pa.lasso.converged;
  if (design_c && pc) {
    fit.has_censoring = true;
    fit.columns_c = design_c->columns;
    fit.theta = pc->refit.coefficients;
    fit.support_c = pc->lasso.support;
    fit.fuse_group_c.assign(design_c->cols(), -1);
    fit.lambda_c = lambda_c;
    fit.converged = fit.converged && pc->refit_ok && pc->lasso.converged;
  }
  return fit;
}

}  // namespace

SelectionResult select_lambda(const LongitudinalDataset& data, const WorkingBeta& beta,
                              const LoalConfig& config) {
  const PooledDesign design_a = build_pooled_treatment_design(data);
  const StandardizedDesign sd_a = StandardizedDesign::make(design_a);
  Eigen::VectorXd omega_a = adaptive_weights(design_a, beta, config.gamma);
  if (config.protect_baseline_modifier && data.baseline_modifier >= 0)
    for (int j = 0; j < design_a.cols(); ++j)
      if (design_a.columns[j].is_covariate() && design_a.columns[j].block == 0 &&
          design_a.columns[j].k == data.baseline_modifier)
        omega_a(j) = 0.0;

  const Eigen::VectorXd grid_a =
      lambda_grid(sd_a, omega_a, config.n_lambda, config.lambda_min_ratio);
  // Balance is evaluated with a marginal numerator: within each arm it
  // cancels, so the metric vanishes exactly when the weighted arms agree.
  const Stabilizer stab = fit_marginal_stabilizer(data);
  const auto path_a = selection_path(design_a, sd_a, omega_a, grid_a);

  SelectionResult result;
  result.grid_a.assign(grid_a.data(), grid_a.data() + grid_a.size());

  const bool joint = config.use_censoring && data.has_censoring();
  if (!joint) {
    double best = kInf;
    int best_g = -1;
    for (int g = 0; g < grid_a.size(); ++g) {
      PropensityFit trial = make_loal_fit(design_a, path_a[g], nullptr, nullptr,
                                          grid_a(g), 0.0, config.gamma);
      if (data.has_censoring()) {
        // Censoring handled outside selection: weight with the full model.
        const PropensityFit full = full_propensity_fit(data);
        trial.has_censoring = true;
        trial.columns_c = full.columns_c;
        trial.theta = full.theta;
        trial.support_c = full.support_c;
        trial.fuse_group_c = full.fuse_group_c;
      }
      BalanceReport rep = balance_metric(data, trial, beta, stab);
      rep.lambda_a = grid_a(g);
      if (!path_a[g].refit_ok) rep.disqualified = true;
      result.reports.push_back(rep);
      if (!rep.disqualified && rep.M < best - 1e-10) {
        best = rep.M;
        best_g = g;
      }
    }
    if (best_g < 0) throw NumericError("select_lambda: every lambda was disqualified");
    result.lambda_a = grid_a(best_g);
    result.refit = make_loal_fit(design_a, path_a[best_g], nullptr, nullptr,
                                 grid_a(best_g), 0.0, config.gamma);
    return result;
  }

  const PooledDesign design_c = build_pooled_censoring_design(data);
  const StandardizedDesign sd_c = StandardizedDesign::make(design_c);
  const Eigen::VectorXd omega_c = adaptive_weights(design_c, beta, config.gamma);
  const Eigen::VectorXd grid_c =
      lambda_grid(sd_c, omega_c, config.n_lambda, config.lambda_min_ratio);
  result.grid_c.assign(grid_c.data(), grid_c.data() + grid_c.size());
  const auto path_c = selection_path(design_c, sd_c, omega_c, grid_c);

  auto evaluate = [&](int ga, int gc) {
    PropensityFit trial = make_loal_fit(design_a, path_a[ga], &design_c, &path_c[gc],
                                        grid_a(ga), grid_c(gc), config.gamma);
    BalanceReport rep = balance_metric(data, trial, beta, stab);
    rep.lambda_a = grid_a(ga);
    rep.lambda_c = grid_c(gc);
    if (!path_a[ga].refit_ok || !path_c[gc].refit_ok) rep.disqualified = true;
    result.reports.push_back(rep);
    return rep;
  };

  double best = kInf;
  int best_a = -1, best_c = -1;
  if (config.joint_grid_full) {
    for (int ga = 0; ga < grid_a.size(); ++ga)
      for (int gc = 0; gc < grid_c.size(); ++gc) {
        const BalanceReport rep = evaluate(ga, gc);
        if (!rep.disqualified && rep.total() < best - 1e-10) {
          best = rep.total();
          best_a = ga;
          best_c = gc;
        }
      }
  } else {
    int cur_a = 0, cur_c = 0;
    for (int round = 0; round < 10; ++round) {
      int next_a = -1;
      double best_a_val = kInf;
      for (int ga = 0; ga < grid_a.size(); ++ga) {
        const BalanceReport rep = evaluate(ga, cur_c);
        if (!rep.disqualified && rep.total() < best_a_val - 1e-10) {
          best_a_val = rep.total();
          next_a = ga;
        }
      }
      if (next_a >= 0) cur_a = next_a;
      int next_c = -1;
      double best_c_val = kInf;
      for (int gc = 0; gc < grid_c.size(); ++gc) {
        const BalanceReport rep = evaluate(cur_a, gc);
        if (!rep.disqualified && rep.total() < best_c_val - 1e-10) {
          best_c_val = rep.total();
          next_c = gc;
        }
      }
      if (next_c >= 0 && (next_a == cur_a || next_a == -1) && next_c == cur_c) {
        best_a = cur_a;
        best_c = cur_c;
        best = best_c_val;
        break;
      }
      if (next_c >= 0) cur_c = next_c;
      best_a = cur_a;
      best_c = cur_c;
      best = best_c_val;
    }
  }
  if (best_a < 0 || !std::isfinite(best))
    throw NumericError("select_lambda: every (lambda_a, lambda_c) was disqualified");
  result.lambda_a = grid_a(best_a);
  result.lambda_c = grid_c(best_c);
  result.refit = make_loal_fit(design_a, path_a[best_a], &design_c, &path_c[best_c],
                               grid_a(best_a), grid_c(best_c), config.gamma);
  return result;
}

namespace {

struct FusedModel {
  Eigen::VectorXd coefficients;
  std::vector<int> groups;
  double lambda1 = 0.0;
  double gamma1 = 0.0;
  bool fused_any = false;
  bool converged = true;
};

FusedModel fuse_model(const PooledDesign& design, const Eigen::VectorXd& refit_coefs,
                      const std::vector<bool>& support, const LoalConfig& config) {
  FusedModel out;
  out.coefficients = refit_coefs;
  out.groups.assign(design.cols(), -1);
  int next_id = 0;
  for (int j = 0; j < design.cols(); ++j)
    if (support[j] && !design.unpenalized[j]) out.groups[j] = next_id++;

  const PenaltyGraph full_graph = make_fusion_graph(design, config.graph_kind);
  PenaltyGraph graph;
  for (const auto& [u, v] : full_graph.edges)
    if (support[u] && support[v]) graph.edges.emplace_back(u, v);
  if (graph.edges.empty()) return out;  // nothing to fuse

  std::vector<bool> zero_mask(design.cols());
  for (int j = 0; j < design.cols(); ++j) zero_mask[j] = !support[j];

  std::vector<double> gammas = config.gamma1_grid;
  if (gammas.empty()) gammas.push_back(config.gamma1);

  // Expected group count under complete fusion.
  int n_components = 0;
  {
    std::vector<int> parent(design.cols());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& [u, v] : graph.edges) parent[find(u)] = find(v);
    std::vector<bool> seen(design.cols(), false);
    for (int j = 0; j < design.cols(); ++j)
      if (support[j] && !design.unpenalized[j] && !seen[find(j)]) {
        seen[find(j)] = true;
        ++n_components;
      }
  }

  double best_bic = kInf;
  bool have_best = false;
  FusedFit best_fit;
  double best_gamma1 = gammas.front();
  for (double g1 : gammas) {
    std::vector<double> weights(graph.edges.size());
    for (size_t e = 0; e < graph.edges.size(); ++e) {
      const double d =
          std::abs(refit_coefs(graph.edges[e].first) - refit_coefs(graph.edges[e].second));
      weights[e] = d < 1e-12 ? kInf : std::pow(d, -g1);
    }

    // Bracket complete fusion, then scan an ascending grid by BIC.
    double hi = 1.0;
    FusedFit probe;
    for (int it = 0; it < 14; ++it) {
      probe = graph_fused_lasso_logistic(design, zero_mask, graph, weights, hi);
      if (probe.n_groups <= n_components) break;
      hi *= 8.0;
    }
    const double lo = hi * 1e-5;
    const FusedFit* warm = nullptr;
    FusedFit prev;
    for (int i = 0; i < config.n_lambda1; ++i) {
      const double l1 =
          lo * std::pow(hi / lo, static_cast<double>(i) / (config.n_lambda1 - 1));
      FusedFit fit = graph_fused_lasso_logistic(design, zero_mask, graph, weights, l1, warm);
      fit.gamma1 = g1;
      if (fit.bic <= best_bic) {  // ties resolve to the stronger penalty
        best_bic = fit.bic;
        best_fit = fit;
        best_gamma1 = g1;
        have_best = true;
      }
      prev = std::move(fit);
      warm = &prev;
    }
  }

  if (have_best) {
    out.coefficients = best_fit.coefficients;
    out.groups = best_fit.group_of;
    out.lambda1 = best_fit.lambda1;
    out.gamma1 = best_gamma1;
    out.fused_any = true;
    out.converged = best_fit.converged;
  }
  return out;
}

}  // namespace

PropensityFit fuse_step(const LongitudinalDataset& data, const PropensityFit& refit,
                        const LoalConfig& config) {
  PropensityFit fused = refit;
  const PooledDesign design_a = build_pooled_treatment_design(data);
  const FusedModel ma = fuse_model(design_a, refit.alpha, refit.support_a, config);
  fused.alpha = ma.coefficients;
  fused.fuse_group_a = ma.groups;
  fused.lambda1_a = ma.lambda1;
  fused.gamma1 = ma.gamma1;
  bool fused_any = ma.fused_any;
  bool converged = ma.converged;

  if (refit.has_censoring) {
    const PooledDesign design_c = build_pooled_censoring_design(data);
    const FusedModel mc = fuse_model(design_c, refit.theta, refit.support_c, config);
    fused.theta = mc.coefficients;
    fused.fuse_group_c = mc.groups;
    fused.lambda1_c = mc.lambda1;
    fused_any = fused_any || mc.fused_any;
    converged = converged && mc.converged;
  }
  if (!fused_any) {
    fused.note = "fusion step skipped: no eligible edges between selected columns";
    return fused;
  }
  fused.provenance = refit.provenance == PropensityFit::Provenance::oracle_select
                         ? PropensityFit::Provenance::oracle_select_fuse
                         : PropensityFit::Provenance::fused_loal;
  fused.converged = refit.converged && converged;
  return fused;
}

PipelineResult run_loal_pipeline(const LongitudinalDataset& data,
                                 const LoalConfig& config) {
  data.validate();
  LoalConfig cfg = config;
  if (cfg.qspec.stages.empty()) {
    const QSpec::Family family = cfg.qspec.family;
    const double lo = cfg.qspec.y_lo, hi = cfg.qspec.y_hi;
    cfg.qspec = default_main_terms_spec(data);
    cfg.qspec.family = family;
    cfg.qspec.y_lo = lo;
    cfg.qspec.y_hi = hi;
  }
  const PatternSpace patterns = enumerate_patterns(
      data.T, data.monotone_treatment ? PatternSpace::Kind::monotone_initiation
                                      : PatternSpace::Kind::full);
  const QSequence qseq = estimate_q_sequence(data, patterns, cfg.qspec);
  PipelineResult result;
  result.beta = fit_working_structural_all(data, qseq, cfg.working_se);
  SelectionResult sel = select_lambda(data, result.beta, cfg);
  result.lambda_a = sel.lambda_a;
  result.lambda_c = sel.lambda_c;
  result.reports = std::move(sel.reports);
  result.loal = sel.refit;
  if (cfg.fuse)
    result.fit = fuse_step(data, result.loal, cfg);
  else
    result.fit = result.loal;
  if (result.fit.provenance == PropensityFit::Provenance::loal) {
    // Singleton groups when fusion did not run.
    int next_id = 0;
    for (size_t j = 0; j < result.fit.support_a.size(); ++j)
      result.fit.fuse_group_a[j] =
          result.fit.support_a[j] && result.fit.columns_a[j].is_covariate()
              ? next_id++
              : -1;
    next_id = 0;
    for (size_t j = 0; j < result.fit.support_c.size(); ++j)
      result.fit.fuse_group_c[j] =
          result.fit.support_c[j] && result.fit.columns_c[j].is_covariate()
              ? next_id++
              : -1;
  }
  return result;
}

}  // namespace loal
