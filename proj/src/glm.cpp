#include "loal/glm.hpp"

#include <cmath>
#include <map>
#include <string>

#include "loal/errors.hpp"

namespace loal {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Solve H b = g. Rank deficiency is an error (the caller names the columns);
// a borderline-conditioned but full-rank system gets one round of ridge
// jitter. Returns false when the system is rank deficient or unsolvable.
bool solve_spd(Eigen::MatrixXd H, const Eigen::VectorXd& g, Eigen::VectorXd& out) {
  const int p = static_cast<int>(H.rows());
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) return false;
  for (int attempt = 0; attempt < 2; ++attempt) {
    out = qr.compute(H).solve(g);
    const double resid = (H * out - g).cwiseAbs().maxCoeff();
    const double scale = g.cwiseAbs().maxCoeff() + 1.0;
    if (out.allFinite() && std::isfinite(resid) && resid <= 1e-6 * scale) return true;
    if (attempt == 0) {
      const double jitter = 1e-10 * H.trace() / std::max(p, 1);
      H.diagonal().array() += std::max(jitter, 1e-300);
    }
  }
  return false;
}

std::string offending_columns(const Eigen::MatrixXd& H) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H);
  qr.setThreshold(1e-10);
  const int rank = static_cast<int>(qr.rank());
  std::string msg;
  const auto& perm = qr.colsPermutation().indices();
  for (int j = rank; j < H.cols(); ++j) {
    if (!msg.empty()) msg += ", ";
    msg += std::to_string(perm(j));
  }
  return msg.empty() ? "(unknown)" : msg;
}

}  // namespace

Eigen::VectorXd GlmFit::predict_response(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd eta = X * coefficients;
  if (family == Family::bernoulli)
    for (int i = 0; i < eta.size(); ++i) eta(i) = expit(eta(i));
  return eta;
}

GlmFit fit_linear_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (y.size() != n || w.size() != n)
    throw ValidationError("fit_linear_wls: dimension mismatch");
  if (w.minCoeff() < 0.0) throw ValidationError("fit_linear_wls: negative weight");
  if (w.sum() <= 0.0) throw ValidationError("fit_linear_wls: total weight is zero");

  const Eigen::MatrixXd Xw = w.asDiagonal() * X;
  const Eigen::MatrixXd H = X.transpose() * Xw;
  const Eigen::VectorXd g = Xw.transpose() * y;

  GlmFit fit;
  fit.family = GlmFit::Family::gaussian;
  fit.fixed_zero.assign(p, false);
  if (!solve_spd(H, g, fit.coefficients))
    throw NumericError("singular design in fit_linear_wls; dependent columns: " +
                       offending_columns(H));
  const Eigen::VectorXd r = y - X * fit.coefficients;
  fit.log_likelihood = -0.5 * (w.array() * r.array().square()).sum();
  fit.converged = true;
  fit.iterations = 1;
  return fit;
}

GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& w, const std::vector<bool>& fixed_zero,
                    double tol, int max_iter) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (y.size() != n || w.size() != n)
    throw ValidationError("fit_logistic: dimension mismatch");
  if (w.minCoeff() < 0.0) throw ValidationError("fit_logistic: negative weight");
  if (w.sum() <= 0.0) throw ValidationError("fit_logistic: total weight is zero");
  if (!fixed_zero.empty() && static_cast<int>(fixed_zero.size()) != p)
    throw ValidationError("fit_logistic: fixed_zero size mismatch");

  std::vector<int> free_cols;
  for (int j = 0; j < p; ++j)
    if (fixed_zero.empty() || !fixed_zero[j]) free_cols.push_back(j);
  const int pf = static_cast<int>(free_cols.size());
  if (pf == 0) {
    GlmFit fit;
    fit.family = GlmFit::Family::bernoulli;
    fit.fixed_zero = fixed_zero;
    fit.coefficients = Eigen::VectorXd::Zero(p);
    fit.converged = true;
    double ll = 0.0;
    for (int i = 0; i < n; ++i) ll += w(i) * (y(i) * 0.0 - softplus(0.0));
    fit.log_likelihood = ll;
    return fit;
  }
  Eigen::MatrixXd Xf(n, pf);
  for (int j = 0; j < pf; ++j) Xf.col(j) = X.col(free_cols[j]);

  // Column scales for the separation guard.
  Eigen::VectorXd sd(pf);
  for (int j = 0; j < pf; ++j) {
    const double m = Xf.col(j).mean();
    sd(j) = std::sqrt((Xf.col(j).array() - m).square().sum() / n);
    if (sd(j) <= 0.0) sd(j) = std::abs(m) > 0 ? std::abs(m) : 1.0;
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(pf);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  auto loglik = [&](const Eigen::VectorXd& e) {
    double ll = 0.0;
    for (int i = 0; i < n; ++i) ll += w(i) * (y(i) * e(i) - softplus(e(i)));
    return ll;
  };
  double ll = loglik(eta);

  GlmFit fit;
  fit.family = GlmFit::Family::bernoulli;
  fit.fixed_zero = fixed_zero.empty() ? std::vector<bool>(p, false) : fixed_zero;
  fit.coefficients = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd prob(n), irls_w(n), score(n);
  for (int iter = 1; iter <= max_iter; ++iter) {
    for (int i = 0; i < n; ++i) {
      prob(i) = expit(eta(i));
      irls_w(i) = std::max(w(i) * prob(i) * (1.0 - prob(i)), 0.0);
      score(i) = w(i) * (y(i) - prob(i));
    }
    const Eigen::VectorXd grad = Xf.transpose() * score;
    const Eigen::MatrixXd H = Xf.transpose() * irls_w.asDiagonal() * Xf;
    Eigen::VectorXd dir;
    if (!solve_spd(H, grad, dir))
      throw NumericError("singular design in fit_logistic; dependent columns: " +
                         offending_columns(H));

    // Step halving keeps the log-likelihood nondecreasing.
    double step = 1.0;
    double ll_new = ll;
    Eigen::VectorXd beta_new = beta, eta_new = eta;
    for (int h = 0; h < 30; ++h) {
      beta_new = beta + step * dir;
      eta_new = eta + step * (Xf * dir);
      ll_new = loglik(eta_new);
      if (ll_new >= ll) break;
      step *= 0.5;
    }
    if (ll_new < ll) {
      fit.iterations = iter;
      break;  // no ascent direction left; report current point unconverged
    }
    const double improved = ll_new - ll;
    beta = beta_new;
    eta = eta_new;
    ll = ll_new;
    fit.iterations = iter;

    for (int j = 0; j < pf; ++j) {
      if (std::abs(beta(j)) * sd(j) > 30.0 && improved > tol * (std::abs(ll) + 1.0))
        throw NumericError("separation detected in fit_logistic (column " +
                           std::to_string(free_cols[j]) + ")");
    }
    if (improved < tol * (std::abs(ll) + 1.0)) {
      fit.converged = true;
      break;
    }
  }

  for (int j = 0; j < pf; ++j) fit.coefficients(free_cols[j]) = beta(j);
  fit.log_likelihood = ll;
  return fit;
}

Eigen::VectorXd sandwich_se(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w, const GlmFit& fit,
                            const std::vector<int>& cluster_ids) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  std::vector<int> free_cols;
  for (int j = 0; j < p; ++j)
    if (fit.fixed_zero.empty() || !fit.fixed_zero[j]) free_cols.push_back(j);
  const int pf = static_cast<int>(free_cols.size());
  Eigen::MatrixXd Xf(n, pf);
  for (int j = 0; j < pf; ++j) Xf.col(j) = X.col(free_cols[j]);

  const Eigen::VectorXd eta = X * fit.coefficients;
  Eigen::VectorXd hess_w(n), resid(n);
  for (int i = 0; i < n; ++i) {
    if (fit.family == GlmFit::Family::bernoulli) {
      const double pi = expit(eta(i));
      hess_w(i) = w(i) * pi * (1.0 - pi);
      resid(i) = y(i) - pi;
    } else {
      hess_w(i) = w(i);
      resid(i) = y(i) - eta(i);
    }
  }
  const Eigen::MatrixXd A = Xf.transpose() * hess_w.asDiagonal() * Xf;

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(pf, pf);
  if (cluster_ids.empty()) {
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd s = w(i) * resid(i) * Xf.row(i).transpose();
      B += s * s.transpose();
    }
  } else {
    if (static_cast<int>(cluster_ids.size()) != n)
      throw ValidationError("sandwich_se: cluster id size mismatch");
    std::map<int, Eigen::VectorXd> sums;
    for (int i = 0; i < n; ++i) {
      auto [it, inserted] = sums.try_emplace(cluster_ids[i], Eigen::VectorXd::Zero(pf));
      it->second += w(i) * resid(i) * Xf.row(i).transpose();
    }
    for (const auto& [id, s] : sums) B += s * s.transpose();
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("singular bread matrix in sandwich_se");
  const Eigen::MatrixXd Ainv_B = ldlt.solve(B);
  const Eigen::MatrixXd V = ldlt.solve(Ainv_B.transpose());

  Eigen::VectorXd se = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < pf; ++j) se(free_cols[j]) = std::sqrt(std::max(V(j, j), 0.0));
  return se;
}

}  // namespace loal
