#pragma once

#include <Eigen/Dense>
#include <vector>

namespace loal {

struct GlmFit {
  enum class Family { gaussian, bernoulli };

  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;  // Gaussian: -0.5 * weighted RSS
  std::vector<bool> fixed_zero;
  Family family = Family::gaussian;

  Eigen::VectorXd predict_linear(const Eigen::MatrixXd& X) const {
    return X * coefficients;
  }
  Eigen::VectorXd predict_response(const Eigen::MatrixXd& X) const;
};

// Weighted least squares. Ridge jitter 1e-10 * trace/P is added once if the
// normal equations are singular; if that still fails the offending columns
// are named in the error.
GlmFit fit_linear_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& w);

// Weighted Bernoulli IRLS with step halving. Accepts quasi-binomial
// responses in [0,1]. Columns flagged in fixed_zero are held at zero.
// Throws NumericError on separation (a coefficient escaping on the
// standardized scale while the likelihood still improves).
GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& w,
                    const std::vector<bool>& fixed_zero = {},
                    double tol = 1e-8, int max_iter = 100);

// HC0 sandwich standard errors, clustered when cluster ids are given.
// Entries for fixed-zero columns are 0.
Eigen::VectorXd sandwich_se(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w, const GlmFit& fit,
                            const std::vector<int>& cluster_ids = {});

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace loal
