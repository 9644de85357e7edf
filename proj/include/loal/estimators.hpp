#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "loal/dataset.hpp"
#include "loal/outcome_models.hpp"
#include "loal/propensity.hpp"

namespace loal {

enum class MsmTerm { intercept, baseline_modifier, cum, modifier_cum };

struct MsmSpec {
  std::vector<MsmTerm> terms;

  // intercept + [modifier] + cum [+ modifier x cum]
  static MsmSpec basic(bool with_modifier, bool with_interaction = false);
  void validate(const LongitudinalDataset& data) const;
  int size() const { return static_cast<int>(terms.size()); }
};

struct WeightDiagnostics {
  double minv = 0, q10 = 0, q25 = 0, q50 = 0, q75 = 0, q90 = 0, maxv = 0;
  static WeightDiagnostics from(std::vector<double> values);
};

struct MsmEstimate {
  Eigen::VectorXd mu;
  Eigen::VectorXd se;
  std::string estimator;
  WeightDiagnostics weight_diag;      // of the fitting weights
  WeightDiagnostics treat_prob_diag;  // of cumulative treatment probabilities
  bool has_weight_diag = false;
  bool ok = true;
  std::string note;
};

// Weighted regression of the observed outcome on the MSM terms among
// fully-observed subjects; sandwich standard errors.
MsmEstimate fit_msm_iptw(const LongitudinalDataset& data,
                         const CumulativeWeights& weights, const MsmSpec& spec);

// OLS of the stacked stage-0 predictions on the MSM terms across
// (pattern, subject) rows; sandwich standard errors clustered by subject.
MsmEstimate g_computation(const LongitudinalDataset& data, const QSequence& qseq,
                          const MsmSpec& spec);

// Externally supplied truth for oracle comparators.
struct OracleSpec {
  std::vector<CoefIndex> support_a;                  // penalized columns kept
  std::vector<std::vector<CoefIndex>> fuse_groups_a; // equal-coefficient groups
  std::vector<CoefIndex> support_c;
  std::vector<std::vector<CoefIndex>> fuse_groups_c;
};

// Unpenalized logistic fit on the oracle support; fused groups are imposed
// exactly by summing member columns.
PropensityFit oracle_fit(const LongitudinalDataset& data, const OracleSpec& spec,
                         bool apply_fusion);

}  // namespace loal
