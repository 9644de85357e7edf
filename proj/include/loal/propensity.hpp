#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "loal/dataset.hpp"
#include "loal/design.hpp"

namespace loal {

// A fitted pooled treatment model (and optional censoring model), together
// with selection/fusion metadata.
struct PropensityFit {
  enum class Provenance { full, loal, fused_loal, oracle_select, oracle_select_fuse };

  Provenance provenance = Provenance::full;
  // Treatment model: one coefficient per treatment-design column (zeros at
  // unselected columns).
  std::vector<CoefIndex> columns_a;
  Eigen::VectorXd alpha;
  std::vector<bool> support_a;
  std::vector<int> fuse_group_a;  // -1 when not part of the fitted model

  // Censoring model (empty when the dataset has no censoring).
  bool has_censoring = false;
  std::vector<CoefIndex> columns_c;
  Eigen::VectorXd theta;
  std::vector<bool> support_c;
  std::vector<int> fuse_group_c;

  double lambda_a = 0.0, lambda_c = 0.0;
  double lambda1_a = 0.0, lambda1_c = 0.0;
  double gamma = 0.0, gamma1 = 0.0;
  bool converged = true;
  std::string note;

  int n_selected_a() const;
  int n_selected_c() const;
};

// Stabilizing numerator models: per-time logistic regressions of A_t on the
// declared baseline modifier (intercept-only when none is declared).
struct Stabilizer {
  bool intercept_only = true;
  int modifier = -1;
  std::vector<Eigen::Vector2d> per_time;  // (intercept, slope) per time

  double prob_treated(const LongitudinalDataset& data, int i, int t) const {
    const double x = modifier >= 0 ? data.covariates[0](i, modifier) : 0.0;
    const double eta = per_time[t](0) + per_time[t](1) * x;
    return 1.0 / (1.0 + std::exp(-eta));
  }
};

Stabilizer fit_stabilizer(const LongitudinalDataset& data);

// Intercept-only variant (marginal treatment frequencies). Used inside the
// balance metric, where a covariate-dependent numerator would keep the
// weighted arms imbalanced even under a correctly specified model.
Stabilizer fit_marginal_stabilizer(const LongitudinalDataset& data);

// Per-time cumulative inverse-probability products evaluated at the observed
// history. Entries are NaN once a subject is censored.
struct WeightTable {
  Eigen::MatrixXd treat_w;        // n x (T+1), cumulative through column time
  Eigen::MatrixXd treat_prob;     // n x (T+1), cumulative P(observed path)
  Eigen::MatrixXd cens_w;         // n x (nc+1); column tau = prod_{k<=tau} 1/h_k
  Eigen::MatrixXd cens_prob;      // n x (nc+1)
};

WeightTable compute_weight_table(const LongitudinalDataset& data,
                                 const PropensityFit& fit, bool stabilized,
                                 const Stabilizer* stab = nullptr);

// Horizon-T weights used by the IPTW regression (treatment product times the
// full censoring product). `usable` marks subjects observed to the end.
struct CumulativeWeights {
  Eigen::VectorXd weights;
  Eigen::VectorXd treat_prob;
  Eigen::VectorXd cens_prob;
  std::vector<bool> usable;
};

// When `stab` is null the numerator conditions on the declared baseline
// modifier (the main-text definition); pass fit_marginal_stabilizer for
// intercept-only numerators.
CumulativeWeights compute_cumulative_weights(const LongitudinalDataset& data,
                                             const PropensityFit& fit,
                                             bool stabilized,
                                             const Stabilizer* stab = nullptr);

// Unpenalized pooled fits of the saturated treatment (and censoring) models.
PropensityFit full_propensity_fit(const LongitudinalDataset& data);

}  // namespace loal
