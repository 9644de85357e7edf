#include "loal/penalized.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "loal/errors.hpp"
#include "loal/glm.hpp"

namespace loal {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double soft_threshold(double rho, double t) {
  if (rho > t) return rho - t;
  if (rho < -t) return rho + t;
  return 0.0;
}

double mean_nll(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double s = 0.0;
  const int n = static_cast<int>(eta.size());
  for (int i = 0; i < n; ++i) s += softplus(eta(i)) - y(i) * eta(i);
  return s / n;
}

double sum_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (int i = 0; i < eta.size(); ++i) s += y(i) * eta(i) - softplus(eta(i));
  return s;
}

// IRLS working weights and response at the current linear predictor.
void irls_quantities(const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                     Eigen::VectorXd& w, Eigen::VectorXd& z) {
  const int n = static_cast<int>(eta.size());
  for (int i = 0; i < n; ++i) {
    double p = expit(eta(i));
    p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
    const double v = p * (1.0 - p);
    w(i) = v / n;
    z(i) = eta(i) + (y(i) - p) / v;
  }
}

}  // namespace

StandardizedDesign StandardizedDesign::make(const PooledDesign& design,
                                            const PenaltyGraph* shared_scale_graph) {
  StandardizedDesign sd;
  sd.design = &design;
  const int n = design.rows();
  const int p = design.cols();
  sd.X = design.X;
  sd.center = Eigen::VectorXd::Zero(p);
  sd.scale = Eigen::VectorXd::Ones(p);
  sd.degenerate.assign(p, false);

  std::vector<std::vector<int>> rows_of_time;
  {
    int max_tau = 0;
    for (int t : design.model_times) max_tau = std::max(max_tau, t);
    rows_of_time.resize(max_tau + 1);
    for (int r = 0; r < n; ++r) rows_of_time[design.row_time[r]].push_back(r);
  }

  for (int j = 0; j < p; ++j) {
    const CoefIndex& idx = design.columns[j];
    if (!idx.is_covariate()) continue;
    const auto& rows = rows_of_time[idx.tau];
    const double m = static_cast<double>(rows.size());
    double mu = 0.0;
    for (int r : rows) mu += design.X(r, j);
    mu /= m;
    // Centering is a reparameterization only when the per-time intercept is
    // there to absorb it.
    if (design.col_of({idx.tau, -1, 0}) < 0) mu = 0.0;
    double var = 0.0;
    for (int r : rows) var += (design.X(r, j) - mu) * (design.X(r, j) - mu);
    const double s = std::sqrt(var / m);
    sd.center(j) = mu;
    if (s < 1e-12) {
      sd.degenerate[j] = true;
      sd.scale(j) = 1.0;
      for (int r : rows) sd.X(r, j) = 0.0;
    } else {
      sd.scale(j) = s;
      for (int r : rows) sd.X(r, j) = (design.X(r, j) - mu) / s;
    }
  }

  if (shared_scale_graph) {
    // Union scale over graph components so that coefficient equality is
    // preserved on the solver scale.
    std::vector<int> parent(p);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& [u, v] : shared_scale_graph->edges) parent[find(u)] = find(v);
    std::vector<double> sum(p, 0.0);
    std::vector<int> cnt(p, 0);
    for (int j = 0; j < p; ++j) {
      if (!design.columns[j].is_covariate() || sd.degenerate[j]) continue;
      const int r = find(j);
      sum[r] += sd.scale(j);
      cnt[r] += 1;
    }
    for (int j = 0; j < p; ++j) {
      if (!design.columns[j].is_covariate() || sd.degenerate[j]) continue;
      const int r = find(j);
      if (cnt[r] <= 1) continue;
      const double shared = sum[r] / cnt[r];
      // Re-scale the column from its own sd to the shared one.
      const double ratio = sd.scale(j) / shared;
      for (int row = 0; row < n; ++row) sd.X(row, j) *= ratio;
      sd.scale(j) = shared;
    }
  }
  return sd;
}

Eigen::VectorXd StandardizedDesign::to_original(const Eigen::VectorXd& std_coefs) const {
  const int p = static_cast<int>(std_coefs.size());
  Eigen::VectorXd out(p);
  std::vector<double> intercept_shift;
  for (int j = 0; j < p; ++j) out(j) = std_coefs(j) / scale(j);
  // Per-time intercepts absorb the centering.
  for (int j = 0; j < p; ++j) {
    const CoefIndex& idx = design->columns[j];
    if (!idx.is_covariate() || center(j) == 0.0) continue;
    const int icol = design->col_of({idx.tau, -1, 0});
    if (icol >= 0) out(icol) -= std_coefs(j) * center(j) / scale(j);
  }
  return out;
}

Eigen::VectorXd StandardizedDesign::to_standardized(const Eigen::VectorXd& orig) const {
  const int p = static_cast<int>(orig.size());
  Eigen::VectorXd out(p);
  for (int j = 0; j < p; ++j) out(j) = orig(j) * scale(j);
  for (int j = 0; j < p; ++j) {
    const CoefIndex& idx = design->columns[j];
    if (!idx.is_covariate() || center(j) == 0.0) continue;
    const int icol = design->col_of({idx.tau, -1, 0});
    if (icol >= 0) out(icol) += orig(j) * center(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive LASSO
// ---------------------------------------------------------------------------

AdaptiveLassoFit adaptive_lasso_logistic(const StandardizedDesign& sd,
                                         const Eigen::VectorXd& omega, double lambda,
                                         const AdaptiveLassoFit* warm) {
  const PooledDesign& design = *sd.design;
  const int n = design.rows();
  const int p = design.cols();
  if (omega.size() != p)
    throw ValidationError("adaptive_lasso_logistic: omega size mismatch");
  if (lambda < 0) throw ValidationError("adaptive_lasso_logistic: lambda < 0");

  std::vector<bool> excluded(p, false), penal(p, false);
  for (int j = 0; j < p; ++j) {
    if (design.unpenalized[j]) continue;
    if (sd.degenerate[j] || std::isinf(omega(j))) {
      excluded[j] = true;
      continue;
    }
    if (!(omega(j) >= 0.0))
      throw ValidationError("adaptive_lasso_logistic: invalid omega at column " +
                            std::to_string(j));
    penal[j] = true;
  }

  std::vector<int> act;
  for (int j = 0; j < p; ++j)
    if (!excluded[j]) act.push_back(j);
  const int pa = static_cast<int>(act.size());
  Eigen::MatrixXd Xa(n, pa);
  for (int j = 0; j < pa; ++j) Xa.col(j) = sd.X.col(act[j]);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(pa);
  if (warm && warm->std_coefficients.size() == p)
    for (int j = 0; j < pa; ++j) beta(j) = warm->std_coefficients(act[j]);

  Eigen::VectorXd pen_w(pa);
  for (int j = 0; j < pa; ++j)
    pen_w(j) = design.unpenalized[act[j]] ? 0.0 : lambda * omega(act[j]);

  Eigen::VectorXd eta = Xa * beta;
  auto objective = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& e) {
    return mean_nll(e, design.y) + pen_w.dot(b.cwiseAbs());
  };
  double obj = objective(beta, eta);

  AdaptiveLassoFit fit;
  fit.lambda = lambda;
  fit.penalty_weights = omega;
  fit.converged = false;

  Eigen::VectorXd w(n), z(n);
  const double outer_tol = 1e-9;
  const double inner_tol = 1e-11;
  for (int outer = 0; outer < 200; ++outer) {
    irls_quantities(eta, design.y, w, z);
    const Eigen::MatrixXd Xw = w.asDiagonal() * Xa;
    const Eigen::MatrixXd G = Xa.transpose() * Xw;
    const Eigen::VectorXd b = Xw.transpose() * z;

    Eigen::VectorXd beta_new = beta;
    Eigen::VectorXd s = G * beta_new;
    for (int sweep = 0; sweep < 1000; ++sweep) {
      double max_delta = 0.0;
      for (int j = 0; j < pa; ++j) {
        const double gjj = G(j, j);
        if (gjj < 1e-14) continue;
        const double rho = b(j) - s(j) + gjj * beta_new(j);
        const double nj = pen_w(j) > 0.0 ? soft_threshold(rho, pen_w(j)) / gjj
                                         : rho / gjj;
        const double delta = nj - beta_new(j);
        if (delta != 0.0) {
          beta_new(j) = nj;
          s += delta * G.col(j);
          max_delta = std::max(max_delta, std::abs(delta) * std::sqrt(gjj));
        }
      }
      if (max_delta < inner_tol) break;
    }

    Eigen::VectorXd eta_new = Xa * beta_new;
    double obj_new = objective(beta_new, eta_new);
    if (obj_new > obj + 1e-12) {
      // Quadratic overshoot; damp toward the previous iterate.
      double t = 0.5;
      for (int h = 0; h < 20 && obj_new > obj + 1e-12; ++h, t *= 0.5) {
        Eigen::VectorXd bt = beta + t * (beta_new - beta);
        Eigen::VectorXd et = Xa * bt;
        const double ot = objective(bt, et);
        if (ot <= obj + 1e-12) {
          beta_new = bt;
          eta_new = et;
          obj_new = ot;
          break;
        }
      }
      if (obj_new > obj + 1e-12) break;  // stuck; report unconverged point
    }
    const double change = obj - obj_new;
    beta = beta_new;
    eta = eta_new;
    obj = obj_new;
    if (change < outer_tol * (std::abs(obj) + 1.0)) {
      fit.converged = true;
      break;
    }
  }

  fit.std_coefficients = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < pa; ++j) fit.std_coefficients(act[j]) = beta(j);
  fit.coefficients = sd.to_original(fit.std_coefficients);
  // Exact zeros on the solver scale are exact zeros on the original scale.
  fit.support.assign(p, false);
  for (int j = 0; j < p; ++j) {
    if (design.unpenalized[j])
      fit.support[j] = true;
    else
      fit.support[j] = fit.std_coefficients(j) != 0.0;
    if (excluded[j]) fit.support[j] = design.unpenalized[j];
  }
  fit.objective = obj;
  fit.log_likelihood = sum_loglik(eta, design.y);
  return fit;
}

AdaptiveLassoFit adaptive_lasso_logistic(const PooledDesign& design,
                                         const Eigen::VectorXd& omega, double lambda,
                                         const AdaptiveLassoFit* warm) {
  return adaptive_lasso_logistic(StandardizedDesign::make(design), omega, lambda, warm);
}

Eigen::VectorXd lambda_grid(const StandardizedDesign& sd, const Eigen::VectorXd& omega,
                            int n_points, double min_ratio) {
  const PooledDesign& design = *sd.design;
  if (n_points < 2) throw ValidationError("lambda_grid: n_points must be >= 2");
  const int n = design.rows();
  const int p = design.cols();

  std::vector<bool> fixed(p, false);
  bool any_selectable = false;
  for (int j = 0; j < p; ++j) {
    if (!design.unpenalized[j]) {
      fixed[j] = true;
      if (!sd.degenerate[j] && std::isfinite(omega(j)) && omega(j) > 0.0)
        any_selectable = true;
    }
  }
  if (!any_selectable)
    throw ValidationError("lambda_grid: no selectable column (all weights infinite)");

  const GlmFit null_fit = fit_logistic(design.X, design.y, Eigen::VectorXd::Ones(n), fixed);
  const Eigen::VectorXd p0 = null_fit.predict_response(design.X);
  double lambda_max = 0.0;
  for (int j = 0; j < p; ++j) {
    if (design.unpenalized[j] || sd.degenerate[j]) continue;
    if (!std::isfinite(omega(j)) || omega(j) <= 0.0) continue;
    const double score = std::abs(sd.X.col(j).dot(design.y - p0)) / n;
    lambda_max = std::max(lambda_max, score / omega(j));
  }
  if (!(lambda_max > 0.0))
    throw NumericError("lambda_grid: degenerate null score (lambda_max = 0)");
  // The bound is only as accurate as the null fit; land strictly above it so
  // the first grid point provably zeroes everything.
  lambda_max *= 1.0 + 1e-8;

  Eigen::VectorXd grid(n_points);
  for (int i = 0; i < n_points; ++i)
    grid(i) = lambda_max * std::pow(min_ratio, static_cast<double>(i) / (n_points - 1));
  return grid;
}

Eigen::VectorXd lambda_grid(const PooledDesign& design, const Eigen::VectorXd& omega,
                            int n_points, double min_ratio) {
  return lambda_grid(StandardizedDesign::make(design), omega, n_points, min_ratio);
}

Eigen::VectorXd kkt_residuals(const PooledDesign& design, const Eigen::VectorXd& omega,
                              double lambda, const AdaptiveLassoFit& fit) {
  const StandardizedDesign sd = StandardizedDesign::make(design);
  const int n = design.rows();
  const int p = design.cols();
  Eigen::VectorXd eta = design.X * fit.coefficients;
  Eigen::VectorXd resid = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd score(n);
  for (int i = 0; i < n; ++i) score(i) = design.y(i) - expit(eta(i));
  for (int j = 0; j < p; ++j) {
    if (design.unpenalized[j] || sd.degenerate[j] || std::isinf(omega(j))) continue;
    const double sj = sd.X.col(j).dot(score) / n;
    const double a = fit.std_coefficients.size() == p ? fit.std_coefficients(j)
                                                      : fit.coefficients(j);
    if (a == 0.0)
      resid(j) = std::max(0.0, std::abs(sj) - lambda * omega(j));
    else
      resid(j) = std::abs(sj - lambda * omega(j) * (a > 0 ? 1.0 : -1.0));
  }
  return resid;
}

// ---------------------------------------------------------------------------
// Graph-fused LASSO
// ---------------------------------------------------------------------------

namespace {

struct FusedGroups {
  // Column-level data (over active columns 0..pa-1).
  std::vector<std::vector<std::pair<int, double>>> incident;  // (other col, weight)
  std::vector<int> group_of;
  std::vector<std::vector<int>> members;
  std::vector<double> theta;
  std::vector<bool> penalized;  // per active column

  int n_active() const { return static_cast<int>(group_of.size()); }
};

// Exact minimizer of 0.5*a*t^2 + lin*t + lambda * sum_k W_k |t - v_k|.
// Returns the optimum; *at_kink is the index of the kink it lands on, or -1.
double piecewise_min(double a, double lin, double lambda,
                     std::vector<std::pair<double, double>>& kinks, int* at_kink) {
  *at_kink = -1;
  std::sort(kinks.begin(), kinks.end());
  const int m = static_cast<int>(kinks.size());
  double total = 0.0;
  for (const auto& [v, w] : kinks) total += w;
  // Derivative below all kinks.
  double cum = 0.0;  // weight at or below the current position
  {
    const double root = (-lin + lambda * total) / a;
    if (m == 0 || root < kinks[0].first) return root;
  }
  for (int i = 0; i < m; ++i) {
    const double v = kinks[i].first;
    double w_here = kinks[i].second;
    // Collapse duplicates.
    int j = i;
    while (j + 1 < m && kinks[j + 1].first == v) {
      ++j;
      w_here += kinks[j].second;
    }
    const double d_minus = a * v + lin + lambda * (cum - (total - cum));
    const double cum_after = cum + w_here;
    const double d_plus = a * v + lin + lambda * (cum_after - (total - cum_after));
    if (d_minus <= 0.0 && d_plus >= 0.0) {
      *at_kink = i;
      return v;
    }
    cum = cum_after;
    const double upper = (j + 1 < m) ? kinks[j + 1].first : kInf;
    const double root = (-lin - lambda * (cum - (total - cum))) / a;
    if (d_plus < 0.0 && root > v && root < upper) return root;
    i = j;
  }
  return (-lin + lambda * (total - 2.0 * total)) / a;  // above all kinks
}

}  // namespace

FusedFit graph_fused_lasso_logistic(const PooledDesign& design,
                                    const std::vector<bool>& zero_mask,
                                    const PenaltyGraph& graph,
                                    const std::vector<double>& fusion_weights,
                                    double lambda1, const FusedFit* warm) {
  const int n = design.rows();
  const int p = design.cols();
  if (static_cast<int>(zero_mask.size()) != p)
    throw ValidationError("graph_fused_lasso_logistic: zero_mask size mismatch");
  if (fusion_weights.size() != graph.edges.size())
    throw ValidationError("graph_fused_lasso_logistic: weight per edge required");
  if (lambda1 < 0) throw ValidationError("graph_fused_lasso_logistic: lambda1 < 0");
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& [u, v] = graph.edges[e];
    if (u < 0 || v < 0 || u >= p || v >= p || u == v)
      throw ValidationError("graph_fused_lasso_logistic: bad edge");
    if (design.unpenalized[u] || design.unpenalized[v] || zero_mask[u] || zero_mask[v])
      throw ValidationError(
          "graph_fused_lasso_logistic: edge touches an excluded or unpenalized column");
    if (!(fusion_weights[e] > 0.0))
      throw ValidationError("graph_fused_lasso_logistic: edge weights must be > 0");
  }

  const StandardizedDesign sd = StandardizedDesign::make(design, &graph);

  std::vector<int> act;            // active design columns
  std::vector<int> act_index(p, -1);
  for (int j = 0; j < p; ++j) {
    if (zero_mask[j] || sd.degenerate[j]) continue;
    act_index[j] = static_cast<int>(act.size());
    act.push_back(j);
  }
  const int pa = static_cast<int>(act.size());
  Eigen::MatrixXd Xa(n, pa);
  for (int j = 0; j < pa; ++j) Xa.col(j) = sd.X.col(act[j]);

  FusedGroups fg;
  fg.incident.resize(pa);
  fg.penalized.resize(pa);
  for (int j = 0; j < pa; ++j) fg.penalized[j] = !design.unpenalized[act[j]];

  // Pre-fuse infinite-weight edges via union-find.
  std::vector<int> parent(pa);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (size_t e = 0; e < graph.edges.size(); ++e) {
    const int u = act_index[graph.edges[e].first];
    const int v = act_index[graph.edges[e].second];
    if (u < 0 || v < 0) continue;
    if (std::isinf(fusion_weights[e])) {
      parent[find(u)] = find(v);
    } else {
      // Solver-scale weight: |a_u - a_v| = |std_u - std_v| / shared_scale.
      const double w = fusion_weights[e] / sd.scale(graph.edges[e].first);
      fg.incident[u].emplace_back(v, w);
      fg.incident[v].emplace_back(u, w);
    }
  }

  // Pre-fused atoms: columns joined by an infinite-weight edge always move
  // together and are never split apart.
  std::vector<int> atom_of(pa, -1);
  {
    int next_atom = 0;
    std::vector<int> atom_of_root(pa, -1);
    for (int j = 0; j < pa; ++j) {
      const int r = find(j);
      if (atom_of_root[r] == -1) atom_of_root[r] = next_atom++;
      atom_of[j] = atom_of_root[r];
    }
  }

  fg.group_of.assign(pa, -1);
  for (int j = 0; j < pa; ++j) {
    const int r = find(j);
    if (fg.group_of[r] == -1) {
      fg.group_of[r] = static_cast<int>(fg.members.size());
      fg.members.push_back({});
      fg.theta.push_back(0.0);
    }
    fg.group_of[j] = fg.group_of[r];
  }
  for (int j = 0; j < pa; ++j) fg.members[fg.group_of[j]].push_back(j);

  // Warm start: average the previous solver-scale values within each group.
  if (warm && warm->coefficients.size() == p) {
    const Eigen::VectorXd ws = sd.to_standardized(warm->coefficients);
    for (size_t g = 0; g < fg.members.size(); ++g) {
      double s = 0.0;
      for (int j : fg.members[g]) s += ws(act[j]);
      fg.theta[g] = s / fg.members[g].size();
    }
  }

  auto assemble_beta = [&]() {
    Eigen::VectorXd beta(pa);
    for (int j = 0; j < pa; ++j) beta(j) = fg.theta[fg.group_of[j]];
    return beta;
  };
  auto penalty_value = [&](const Eigen::VectorXd& beta) {
    double s = 0.0;
    for (int j = 0; j < pa; ++j)
      for (const auto& [o, w] : fg.incident[j])
        if (o > j) s += w * std::abs(beta(j) - beta(o));
    return lambda1 * s;
  };

  Eigen::VectorXd beta = assemble_beta();
  Eigen::VectorXd eta = Xa * beta;
  double obj = mean_nll(eta, design.y) + penalty_value(beta);

  Eigen::VectorXd w(n), z(n);
  bool converged = false;
  for (int outer = 0; outer < 100; ++outer) {
    irls_quantities(eta, design.y, w, z);
    const Eigen::MatrixXd Xw = w.asDiagonal() * Xa;
    const Eigen::MatrixXd G = Xa.transpose() * Xw;
    const Eigen::VectorXd b = Xw.transpose() * z;

    // Group-summed columns of G and the running gradient vector G*beta.
    const int start_groups = static_cast<int>(fg.members.size());
    std::vector<Eigen::VectorXd> colsum(start_groups);
    for (int g = 0; g < start_groups; ++g) {
      colsum[g] = Eigen::VectorXd::Zero(pa);
      for (int j : fg.members[g]) colsum[g] += G.col(j);
    }
    Eigen::VectorXd bnew = assemble_beta();
    Eigen::VectorXd gvec = G * bnew;

    auto apply_theta = [&](int g, double t) {
      const double delta = t - fg.theta[g];
      if (delta == 0.0) return;
      fg.theta[g] = t;
      gvec += delta * colsum[g];
    };
    auto merge_groups = [&](int g, int h) {
      // Keep g, absorb h.
      for (int j : fg.members[h]) fg.group_of[j] = g;
      fg.members[g].insert(fg.members[g].end(), fg.members[h].begin(),
                           fg.members[h].end());
      colsum[g] += colsum[h];
      fg.members[h].clear();
      colsum[h].setZero();
    };

    for (int round = 0; round < 200; ++round) {
      // Coordinate sweeps with merge-on-kink.
      bool moved = true;
      int sweeps = 0;
      while (moved && sweeps < 500) {
        moved = false;
        ++sweeps;
        for (size_t g = 0; g < fg.members.size(); ++g) {
          if (fg.members[g].empty()) continue;
          double a = 0.0, smooth = 0.0, bsum = 0.0;
          for (int j : fg.members[g]) {
            a += colsum[g](j);
            smooth += gvec(j);
            bsum += b(j);
          }
          if (a < 1e-14) continue;
          const double lin = smooth - bsum - a * fg.theta[g];
          std::vector<std::pair<double, double>> kinks;  // (neighbor theta, weight)
          for (int j : fg.members[g])
            for (const auto& [o, wgt] : fg.incident[j]) {
              const int h = fg.group_of[o];
              if (h == static_cast<int>(g)) continue;
              kinks.emplace_back(fg.theta[h], wgt);
            }
          int at_kink = -1;
          const double t = piecewise_min(a, lin, lambda1, kinks, &at_kink);
          if (std::abs(t - fg.theta[g]) > 1e-12 * (1.0 + std::abs(fg.theta[g]))) {
            apply_theta(static_cast<int>(g), t);
            moved = true;
          } else {
            apply_theta(static_cast<int>(g), t);
          }
          if (at_kink >= 0 && lambda1 > 0.0) {
            // Merge with one adjacent group sitting exactly at t.
            for (int j : fg.members[g]) {
              bool merged = false;
              for (const auto& [o, wgt] : fg.incident[j]) {
                const int h = fg.group_of[o];
                if (h != static_cast<int>(g) && fg.theta[h] == t) {
                  merge_groups(static_cast<int>(g), h);
                  moved = true;
                  merged = true;
                  break;
                }
              }
              if (merged) break;
            }
          }
        }
      }

      // Split checks: exact over all 2-cuts of the group's pre-fused atoms.
      bool split_done = false;
      for (size_t g = 0; g < fg.members.size() && !split_done; ++g) {
        const auto& mem = fg.members[g];
        if (mem.size() < 2) continue;
        std::vector<int> atoms;  // distinct atoms in this group
        for (int j : mem)
          if (std::find(atoms.begin(), atoms.end(), atom_of[j]) == atoms.end())
            atoms.push_back(atom_of[j]);
        const int m = static_cast<int>(atoms.size());
        if (m < 2 || m > 16) continue;
        auto in_subset = [&](std::uint32_t mask, int j) {
          for (int bit = 0; bit < m; ++bit)
            if (atoms[bit] == atom_of[j]) return ((mask >> bit) & 1u) != 0;
          return false;
        };
        for (std::uint32_t mask = 1; mask + 1 < (1u << m) && !split_done; ++mask) {
          double grad = 0.0, ext = 0.0, cut = 0.0;
          for (int j : mem) {
            if (!in_subset(mask, j)) continue;
            grad += gvec(j) - b(j);
            for (const auto& [o, wgt] : fg.incident[j]) {
              const int h = fg.group_of[o];
              if (h == static_cast<int>(g)) {
                if (!in_subset(mask, o)) cut += wgt;
              } else {
                const double diff = fg.theta[g] - fg.theta[h];
                ext += wgt * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0));
              }
            }
          }
          if (std::abs(grad + lambda1 * ext) > lambda1 * cut + 1e-9) {
            // Split S off at the same value; subsequent sweeps separate them.
            const int new_id = static_cast<int>(fg.members.size());
            fg.members.push_back({});
            fg.theta.push_back(fg.theta[g]);
            colsum.push_back(Eigen::VectorXd::Zero(pa));
            std::vector<int> keep;
            for (int j : mem) {
              if (in_subset(mask, j)) {
                fg.group_of[j] = new_id;
                fg.members[new_id].push_back(j);
                colsum[new_id] += G.col(j);
              } else {
                keep.push_back(j);
              }
            }
            fg.members[g] = keep;
            colsum[g] -= colsum[new_id];
            split_done = true;
          }
        }
      }
      if (!split_done) break;
    }

    Eigen::VectorXd beta_new = assemble_beta();
    Eigen::VectorXd eta_new = Xa * beta_new;
    double obj_new = mean_nll(eta_new, design.y) + penalty_value(beta_new);
    if (obj_new > obj + 1e-12) {
      // Damp toward the previous point; regroup by exact value equality.
      double t = 0.5;
      bool ok = false;
      for (int h = 0; h < 20; ++h, t *= 0.5) {
        Eigen::VectorXd bt = beta + t * (beta_new - beta);
        Eigen::VectorXd et = Xa * bt;
        const double ot = mean_nll(et, design.y) + penalty_value(bt);
        if (ot <= obj + 1e-12) {
          beta_new = bt;
          eta_new = et;
          obj_new = ot;
          ok = true;
          break;
        }
      }
      if (!ok) break;
      // Rebuild groups from the damped values (merges only survive if both
      // endpoints already agreed).
      std::iota(parent.begin(), parent.end(), 0);
      for (int j = 0; j < pa; ++j)
        for (const auto& [o, wgt] : fg.incident[j])
          if (o > j && beta_new(j) == beta_new(o)) parent[find(j)] = find(o);
      for (size_t e = 0; e < graph.edges.size(); ++e)
        if (std::isinf(fusion_weights[e]))
          parent[find(act_index[graph.edges[e].first])] =
              find(act_index[graph.edges[e].second]);
      fg.members.clear();
      fg.theta.clear();
      std::vector<int> root_group(pa, -1);
      for (int j = 0; j < pa; ++j) {
        const int r = find(j);
        if (root_group[r] == -1) {
          root_group[r] = static_cast<int>(fg.members.size());
          fg.members.push_back({});
          fg.theta.push_back(beta_new(j));
        }
        fg.group_of[j] = root_group[r];
        fg.members[fg.group_of[j]].push_back(j);
      }
    }
    const double change = obj - obj_new;
    beta = beta_new;
    eta = eta_new;
    obj = obj_new;
    if (change >= 0 && change < 1e-7 * (std::abs(obj) + 1.0) && outer > 0) {
      converged = true;
      break;
    }
  }

  // Assemble the result on the original scale.
  FusedFit fit;
  fit.lambda1 = lambda1;
  fit.converged = converged;
  Eigen::VectorXd std_full = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < pa; ++j) std_full(act[j]) = beta(j);
  fit.coefficients = sd.to_original(std_full);
  fit.group_of.assign(p, -1);
  int next_id = 0;
  std::vector<int> remap(fg.members.size(), -1);
  int groups_penalized = 0, df_groups = 0, unpen_count = 0;
  for (int j = 0; j < pa; ++j) {
    const int g = fg.group_of[j];
    if (remap[g] == -1) remap[g] = next_id++;
    fit.group_of[act[j]] = remap[g];
  }
  std::vector<bool> counted(fg.members.size(), false);
  for (int j = 0; j < pa; ++j) {
    const int g = fg.group_of[j];
    if (!fg.penalized[j]) {
      ++unpen_count;
      continue;
    }
    if (counted[g]) continue;
    counted[g] = true;
    ++groups_penalized;
    if (fg.theta[g] != 0.0) ++df_groups;
  }
  fit.n_groups = groups_penalized;
  fit.df = df_groups + unpen_count;
  fit.objective = obj;
  fit.log_likelihood = sum_loglik(eta, design.y);
  fit.bic = bic_score(fit.log_likelihood, fit.df, n);
  return fit;
}

double bic_score(double log_likelihood, int df, int n_obs) {
  return -2.0 * log_likelihood + df * std::log(static_cast<double>(n_obs));
}

double bic(const FusedFit& fit, int n_obs) {
  return bic_score(fit.log_likelihood, fit.df, n_obs);
}

double bic(const AdaptiveLassoFit& fit, int n_obs) {
  int df = 0;
  for (bool s : fit.support)
    if (s) ++df;
  return bic_score(fit.log_likelihood, df, n_obs);
}

}  // namespace loal
