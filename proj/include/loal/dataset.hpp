#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "loal/errors.hpp"

namespace loal {

// Longitudinal data O = (L_0, A_0, L_1, A_1, ..., A_T, Y) with optional
// monotone censoring indicators. Covariate blocks may extend one step past
// the last treatment time (block T+1) so that a final censoring/outcome
// cycle without a treatment is representable; in that case the censoring
// matrix has T+1 columns instead of T.
//
// Immutable after construction; safe to share across threads.
struct LongitudinalDataset {
  int n = 0;
  int T = 0;  // last treatment index, times t = 0..T

  std::vector<Eigen::MatrixXd> covariates;           // per time block, n x p_t
  std::vector<std::vector<std::string>> block_names;  // column names per block
  Eigen::MatrixXi treatments;                        // n x (T+1), entries 0/1
  // Censoring: column t-1 holds C_t for t = 1..censoring_times(); C_t = 1
  // means lost by time t, monotone per subject. Zero columns = no censoring.
  Eigen::MatrixXi censoring;
  Eigen::VectorXd outcome;      // NaN where missing (censored subjects)
  int baseline_modifier = -1;   // column of covariates[0] holding L0^1, -1 if none
  bool monotone_treatment = false;

  bool has_censoring() const { return censoring.cols() > 0; }
  int censoring_times() const { return static_cast<int>(censoring.cols()); }
  int n_blocks() const { return static_cast<int>(covariates.size()); }
  int block_size(int t) const { return static_cast<int>(covariates[t].cols()); }

  // C_t for subject i, 0 when t is out of range (t = 0 is never censored).
  int censored_by(int i, int t) const {
    if (t <= 0 || t > censoring_times()) return 0;
    return censoring(i, t - 1);
  }

  // Risk set for the treatment model at time tau: uncensored at tau and,
  // under monotone treatment, not yet treated.
  bool in_treatment_risk_set(int i, int tau) const {
    if (censored_by(i, tau)) return false;
    if (monotone_treatment && tau > 0 && treatments(i, tau - 1) == 1) return false;
    return true;
  }

  // Risk set for the censoring model at time tau (tau >= 1): uncensored at
  // tau - 1.
  bool in_censoring_risk_set(int i, int tau) const {
    return censored_by(i, tau - 1) == 0;
  }

  LongitudinalDataset subset(const std::vector<int>& rows) const;

  void validate() const;  // throws ValidationError
};

// Long-format CSV: one row per subject-time with columns
// id,time,<covariates...>,A,C,Y (Y populated on the subject's last row).
// The JSON sidecar declares block membership, the baseline modifier and
// the monotone-treatment flag.
LongitudinalDataset read_long_csv(const std::string& csv_path,
                                  const std::string& schema_path);
void write_long_csv(const LongitudinalDataset& data, const std::string& csv_path,
                    const std::string& schema_path);

}  // namespace loal
