#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "loal/design.hpp"

namespace loal {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Internal standardization of a pooled design: covariate columns are
// centered and scaled within their own time block (rows of other times stay
// exactly zero), which is equivalent to plain centering because the per-time
// intercepts are unpenalized. Coefficients map back to the original scale.
struct StandardizedDesign {
  const PooledDesign* design = nullptr;
  Eigen::MatrixXd X;
  Eigen::VectorXd center;          // 0 for intercept/treatment columns
  Eigen::VectorXd scale;           // 1 for intercept/treatment columns
  std::vector<bool> degenerate;    // constant-within-block covariate columns

  // When `shared_scale_graph` is given, columns connected by the graph share
  // a common scale so that coefficient equality survives standardization.
  static StandardizedDesign make(const PooledDesign& design,
                                 const PenaltyGraph* shared_scale_graph = nullptr);

  Eigen::VectorXd to_original(const Eigen::VectorXd& std_coefs) const;
  Eigen::VectorXd to_standardized(const Eigen::VectorXd& orig_coefs) const;
};

struct AdaptiveLassoFit {
  Eigen::VectorXd coefficients;    // original scale
  std::vector<bool> support;       // unpenalized columns always true
  double lambda = 0.0;
  Eigen::VectorXd penalty_weights; // omega per column (NaN for unpenalized)
  double objective = 0.0;          // mean NLL + penalty, standardized scale
  double log_likelihood = 0.0;     // summed Bernoulli log-likelihood
  bool converged = false;
  Eigen::VectorXd std_coefficients;  // solver-scale coefficients
};

// Penalized logistic regression with per-column adaptive weights, solved by
// coordinate descent inside an IRLS quadratic approximation (per-observation
// mean loss convention). omega entries: >= 0 for penalized columns, +inf
// excludes the column entirely; ignored for unpenalized columns.
AdaptiveLassoFit adaptive_lasso_logistic(const PooledDesign& design,
                                         const Eigen::VectorXd& omega,
                                         double lambda,
                                         const AdaptiveLassoFit* warm = nullptr);

// Same solver on a pre-standardized design (used for warm-started paths).
AdaptiveLassoFit adaptive_lasso_logistic(const StandardizedDesign& sd,
                                         const Eigen::VectorXd& omega,
                                         double lambda,
                                         const AdaptiveLassoFit* warm = nullptr);

// Log-spaced grid from lambda_max (the null-model KKT bound, at which every
// penalized coefficient is zero) down to lambda_max * 1e-4, decreasing.
Eigen::VectorXd lambda_grid(const PooledDesign& design, const Eigen::VectorXd& omega,
                            int n_points, double min_ratio = 1e-4);
Eigen::VectorXd lambda_grid(const StandardizedDesign& sd, const Eigen::VectorXd& omega,
                            int n_points, double min_ratio = 1e-4);

// KKT residuals of a returned fit on the solver scale; all entries should be
// ~0 at an exact solution. Unpenalized and excluded columns report 0.
Eigen::VectorXd kkt_residuals(const PooledDesign& design, const Eigen::VectorXd& omega,
                              double lambda, const AdaptiveLassoFit& fit);

struct FusedFit {
  Eigen::VectorXd coefficients;  // original scale; zero at excluded columns
  std::vector<int> group_of;     // fused-group id per column, -1 if excluded
  int n_groups = 0;              // distinct groups over penalized columns
  double lambda1 = 0.0;
  double gamma1 = 0.0;
  double objective = 0.0;        // mean NLL + fusion penalty, solver scale
  double log_likelihood = 0.0;
  int df = 0;                    // nonzero fused groups + unpenalized columns
  double bic = 0.0;
  bool converged = false;
};

// Generalized fused LASSO for the pooled logistic model: negative mean
// log-likelihood plus lambda1 * sum over graph edges of w_e |a_u - a_v|,
// subject to zero_mask exclusions. No sparsity penalty. Solved by outer IRLS
// with an inner fuse/split coordinate solver over groups. Edges with
// infinite weight are pre-fused.
FusedFit graph_fused_lasso_logistic(const PooledDesign& design,
                                    const std::vector<bool>& zero_mask,
                                    const PenaltyGraph& graph,
                                    const std::vector<double>& fusion_weights,
                                    double lambda1, const FusedFit* warm = nullptr);

double bic_score(double log_likelihood, int df, int n_obs);
double bic(const FusedFit& fit, int n_obs);
double bic(const AdaptiveLassoFit& fit, int n_obs);

}  // namespace loal
