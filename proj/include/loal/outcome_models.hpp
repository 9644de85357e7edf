#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "loal/dataset.hpp"
#include "loal/design.hpp"

namespace loal {

// A regression term is a product of covariate/treatment factors, each with
// an integer power. The intercept is implicit in every stage regression.
struct TermFactor {
  enum class Kind { covariate, treatment };
  Kind kind = Kind::covariate;
  int block = 0;  // covariate block (ignored for treatments)
  int k = 0;      // column within the block, or treatment time
  int power = 1;
};

struct Term {
  std::vector<TermFactor> factors;
  std::string label(const LongitudinalDataset& data) const;
};

struct StageSpec {
  std::vector<Term> terms;
};

// Per-stage regression specs for the nested outcome models. Stage s uses
// information through covariate block s and treatments A_0..min(s, T).
struct QSpec {
  enum class Family { linear, logistic };
  std::vector<StageSpec> stages;  // size = number of covariate blocks
  Family family = Family::linear;
  double y_lo = 0.0, y_hi = 1.0;  // outcome bounds for the logistic family
};

// Main terms of all covariates through the stage plus all treatments
// observed by the stage.
QSpec default_main_terms_spec(const LongitudinalDataset& data);

// Nested outcome regressions evaluated at every treatment pattern.
// qhat[s] is n x |patterns| with NaN outside the stage-s risk set.
struct QSequence {
  PatternSpace patterns;
  std::vector<Eigen::MatrixXd> qhat;
  std::vector<std::vector<int>> risk;  // stage risk sets (uncensored at s)
};

QSequence estimate_q_sequence(const LongitudinalDataset& data,
                              const PatternSpace& patterns, const QSpec& spec);

// Coefficients of the pooled working structural regressions: the stacked
// stage-tau predictions regressed on main terms of the covariate history
// and the pattern treatments.
struct WorkingBetaEntry {
  CoefIndex idx;
  double beta = 0.0;
  double se = 0.0;
  bool shrinkable = true;  // false for intercept and treatment terms
};

struct WorkingBeta {
  std::vector<WorkingBetaEntry> entries;  // sorted by idx
  const WorkingBetaEntry* find(const CoefIndex& idx) const;
};

enum class WorkingSe { model_based, robust };

std::vector<WorkingBetaEntry> fit_working_structural(
    const LongitudinalDataset& data, const QSequence& qseq, int tau,
    WorkingSe se_kind = WorkingSe::model_based);

WorkingBeta fit_working_structural_all(const LongitudinalDataset& data,
                                       const QSequence& qseq,
                                       WorkingSe se_kind = WorkingSe::model_based);

}  // namespace loal
