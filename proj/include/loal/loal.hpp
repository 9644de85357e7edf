#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "loal/outcome_models.hpp"
#include "loal/penalized.hpp"
#include "loal/propensity.hpp"

namespace loal {

struct LoalConfig {
  double gamma = 2.5;             // selection adaptive exponent
  double gamma1 = 2.5;            // fusion adaptive exponent
  std::vector<double> gamma1_grid;  // optional BIC sweep; empty -> {gamma1}
  int n_lambda = 20;
  // Grid floor relative to the null bound. Instruments acquire enormous
  // adaptive weights, so a floor that chases them (1e-4 and below) lets them
  // re-enter at the bottom of the path; 1e-3 reproduces the reported
  // selection behavior at every sample size.
  double lambda_min_ratio = 1e-3;
  int n_lambda1 = 20;
  GraphKind graph_kind = GraphKind::clique;
  bool fuse = true;
  bool use_censoring = true;      // joint selection when the data are censored
  bool joint_grid_full = true;    // full (lambda_a, lambda_c) product vs
                                  // coordinate-descent search
  QSpec qspec;                    // empty stages -> main terms
  WorkingSe working_se = WorkingSe::model_based;
  bool protect_baseline_modifier = false;  // leave L0^1 unpenalized
};

// omega_j = |beta_j|^-gamma per design column; +inf when beta_j = 0
// (the column is excluded downstream); NaN for unpenalized columns.
Eigen::VectorXd adaptive_weights(const PooledDesign& design, const WorkingBeta& beta,
                                 double gamma);

struct BalanceTermValue {
  CoefIndex idx;  // (model time, source block, column)
  double value = 0.0;
};

struct BalanceReport {
  double lambda_a = 0.0, lambda_c = 0.0;
  std::vector<BalanceTermValue> treatment_terms;
  std::vector<BalanceTermValue> censoring_terms;
  double M = 0.0;  // treatment balance total
  double N = 0.0;  // censoring balance total
  bool disqualified = false;  // empty arm or failed refit
  bool refit_converged = true;
  double total() const { return M + N; }
};

// Weighted absolute mean differences of each in-scope covariate between
// current-treatment (and censoring) groups, scaled by |beta|/se and summed.
BalanceReport balance_metric(const LongitudinalDataset& data,
                             const PropensityFit& refit, const WorkingBeta& beta,
                             const Stabilizer& stab);

struct SelectionResult {
  double lambda_a = 0.0, lambda_c = 0.0;
  std::vector<BalanceReport> reports;  // every grid point evaluated
  PropensityFit refit;                 // refit at the selected penalty
  std::vector<double> grid_a, grid_c;
};

SelectionResult select_lambda(const LongitudinalDataset& data, const WorkingBeta& beta,
                              const LoalConfig& config);

// Adaptive fusion of the refit coefficients over the penalty graph,
// tuning lambda_1 (and optionally gamma_1) by BIC.
PropensityFit fuse_step(const LongitudinalDataset& data, const PropensityFit& refit,
                        const LoalConfig& config);

struct PipelineResult {
  PropensityFit fit;    // final model
  PropensityFit loal;   // pre-fusion refit
  WorkingBeta beta;
  std::vector<BalanceReport> reports;
  double lambda_a = 0.0, lambda_c = 0.0;
};

PipelineResult run_loal_pipeline(const LongitudinalDataset& data,
                                 const LoalConfig& config);

}  // namespace loal
